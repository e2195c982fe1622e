//! Interchange tensor files.
//!
//! Layout: the 8-byte magic `GEOMEVL1`, a little-endian `u32` header length,
//! a JSON header `{"dtype":"f32","shape":[T,D],"valid_len":..}`, then `T*D`
//! little-endian `f32` values in row-major order. Distance-matrix cache files
//! use the same layout with shape `[N,N]` and an extra `"metric"` field.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DistanceMatrix, MatrixMetric};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"GEOMEVL1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorHeader {
    pub dtype: String,
    pub shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
}

impl TensorHeader {
    pub fn sequence(t: usize, d: usize, valid_len: usize) -> Self {
        Self {
            dtype: "f32".into(),
            shape: vec![t, d],
            valid_len: Some(valid_len),
            metric: None,
        }
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub header: TensorHeader,
    pub data: Vec<f32>,
}

pub fn encode_tensor(header: &TensorHeader, data: &[f32]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(12 + json.len() + data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parses an interchange buffer; `context` names the source in errors.
pub fn decode_tensor(bytes: &[u8], context: &str) -> Result<TensorFile> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::format(context, "missing GEOMEVL1 magic"));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body_start = 12 + header_len;
    if bytes.len() < body_start {
        return Err(Error::format(context, "truncated header"));
    }
    let header: TensorHeader = serde_json::from_slice(&bytes[12..body_start])
        .map_err(|e| Error::format(context, format!("bad header: {e}")))?;
    if header.dtype != "f32" {
        return Err(Error::format(context, format!("unsupported dtype `{}`", header.dtype)));
    }
    if header.shape.len() != 2 {
        return Err(Error::format(
            context,
            format!("expected a 2-D shape, found {:?}", header.shape),
        ));
    }
    let count = header.shape[0]
        .checked_mul(header.shape[1])
        .ok_or_else(|| Error::format(context, "shape overflows"))?;
    let payload = &bytes[body_start..];
    if payload.len() != count * 4 {
        return Err(Error::format(
            context,
            format!(
                "shape {:?} needs {} payload bytes, found {}",
                header.shape,
                count * 4,
                payload.len()
            ),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(TensorFile { header, data })
}

pub fn write_tensor_file(path: &Path, header: &TensorHeader, data: &[f32]) -> Result<()> {
    let bytes = encode_tensor(header, data)?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensor_file(path: &Path) -> Result<TensorFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes, &path.display().to_string())
}

/// Replaces NaN with 0 and +/-Inf with the largest/smallest finite value.
/// Returns the number of replaced entries.
pub fn sanitize(data: &mut [f32]) -> usize {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    let mut bad = 0;
    for &v in data.iter() {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        } else {
            bad += 1;
        }
    }
    if bad == 0 {
        return 0;
    }
    if !lo.is_finite() {
        lo = 0.0;
        hi = 0.0;
    }
    for v in data.iter_mut() {
        if v.is_nan() {
            *v = 0.0;
        } else if *v == f32::INFINITY {
            *v = hi;
        } else if *v == f32::NEG_INFINITY {
            *v = lo;
        }
    }
    bad
}

pub fn write_matrix_file(path: &Path, matrix: &DistanceMatrix) -> Result<()> {
    let n = matrix.len();
    let header = TensorHeader {
        dtype: "f32".into(),
        shape: vec![n, n],
        valid_len: Some(n),
        metric: Some(matrix.metric().as_str().into()),
    };
    write_tensor_file(path, &header, matrix.values())
}

pub fn read_matrix_file(path: &Path) -> Result<DistanceMatrix> {
    let file = read_tensor_file(path)?;
    let ctx = path.display().to_string();
    let (rows, cols) = (file.header.rows(), file.header.cols());
    if rows != cols {
        return Err(Error::format(&ctx, format!("matrix is {rows}x{cols}, not square")));
    }
    let metric = match file.header.metric.as_deref() {
        Some(name) => MatrixMetric::parse(name)
            .ok_or_else(|| Error::format(&ctx, format!("unknown metric `{name}`")))?,
        None => MatrixMetric::External,
    };
    DistanceMatrix::from_values(file.data, rows, metric)
        .map_err(|e| Error::format(&ctx, e.to_string()))
}
