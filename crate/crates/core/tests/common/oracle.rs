//! Deliberately naive reference implementations, written straight from the
//! metric definitions with no shared code from the library.

use std::collections::{BTreeMap, BTreeSet};

const EPS: f64 = 1e-12;

pub type Dist = Vec<Vec<f64>>;
/// `None` marks an unlabeled item.
pub type Labels = Vec<Option<usize>>;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn class_sizes(y: &Labels) -> BTreeMap<usize, usize> {
    let mut sizes = BTreeMap::new();
    for c in y.iter().flatten() {
        *sizes.entry(*c).or_insert(0) += 1;
    }
    sizes
}

pub fn precision_at_k(d: &Dist, y: &Labels, k: usize) -> Option<f64> {
    let labeled: Vec<usize> = (0..y.len()).filter(|&i| y[i].is_some()).collect();
    if k < 1 || k + 1 > labeled.len() {
        return None;
    }
    let mut hits = 0usize;
    for &i in &labeled {
        let mut others: Vec<usize> = labeled.iter().copied().filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| d[i][a].partial_cmp(&d[i][b]).unwrap().then(a.cmp(&b)));
        hits += others[..k].iter().filter(|&&j| y[j] == y[i]).count();
    }
    Some(hits as f64 / (labeled.len() * k) as f64)
}

/// Items in classes of at least `max(min, 2)` members, if two such classes exist.
fn evaluable(y: &Labels, min: usize) -> Option<Vec<usize>> {
    let sizes = class_sizes(y);
    let m = min.max(2);
    let keep: Vec<usize> = (0..y.len())
        .filter(|&i| y[i].is_some_and(|c| sizes[&c] >= m))
        .collect();
    let classes: BTreeSet<usize> = keep.iter().map(|&i| y[i].unwrap()).collect();
    (classes.len() >= 2).then_some(keep)
}

struct Sep {
    avg_id: f64,
    nid: f64,
    mid: f64,
}

fn separations(d: &Dist, y: &Labels, keep: &[usize]) -> Vec<(usize, Sep)> {
    keep.iter()
        .map(|&i| {
            let same: Vec<f64> = keep.iter().filter(|&&j| j != i && y[j] == y[i]).map(|&j| d[i][j]).collect();
            let other: Vec<f64> = keep.iter().filter(|&&j| y[j] != y[i]).map(|&j| d[i][j]).collect();
            (
                i,
                Sep {
                    avg_id: mean(&same),
                    nid: other.iter().copied().fold(f64::INFINITY, f64::min),
                    mid: same.iter().copied().fold(0.0, f64::max),
                },
            )
        })
        .collect()
}

pub fn gsr(d: &Dist, y: &Labels, min: usize) -> Option<f64> {
    let keep = evaluable(y, min)?;
    let locals: Vec<f64> = separations(d, y, &keep)
        .iter()
        .map(|(_, s)| (s.nid - s.avg_id) / (s.nid + s.avg_id + EPS))
        .collect();
    Some(100.0 * 0.5 * (mean(&locals) + 1.0))
}

pub fn csr(d: &Dist, y: &Labels, min: usize) -> Option<f64> {
    let keep = evaluable(y, min)?;
    let mut per_class: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (i, s) in separations(d, y, &keep) {
        per_class
            .entry(y[i].unwrap())
            .or_default()
            .push((s.nid - s.mid) / (s.nid + s.mid + EPS));
    }
    let total = keep.len() as f64;
    let raw: f64 = per_class.values().map(|v| v.len() as f64 / total * mean(v)).sum();
    Some(0.5 * (raw + 1.0))
}

fn class_means(d: &Dist, y: &Labels, min: usize) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
    let sizes = class_sizes(y);
    let m = min.max(2);
    let classes: Vec<usize> = sizes.iter().filter(|(_, &s)| s >= m).map(|(&c, _)| c).collect();
    if classes.len() < 2 {
        return None;
    }
    let members = |c: usize| -> Vec<usize> { (0..y.len()).filter(|&i| y[i] == Some(c)).collect() };
    let intra: Vec<f64> = classes
        .iter()
        .map(|&c| {
            let mem = members(c);
            let mut v = Vec::new();
            for &i in &mem {
                for &j in &mem {
                    if i != j {
                        v.push(d[i][j]);
                    }
                }
            }
            mean(&v)
        })
        .collect();
    let inter: Vec<Vec<f64>> = classes
        .iter()
        .map(|&a| {
            classes
                .iter()
                .map(|&b| {
                    let mut v = Vec::new();
                    for &i in &members(a) {
                        for &j in &members(b) {
                            v.push(d[i][j]);
                        }
                    }
                    mean(&v)
                })
                .collect()
        })
        .collect();
    Some((intra, inter))
}

pub fn cs(d: &Dist, y: &Labels, min: usize) -> Option<f64> {
    let (intra, inter) = class_means(d, y, min)?;
    let mut f = Vec::new();
    for (a, row) in inter.iter().enumerate() {
        for (b, &between) in row.iter().enumerate() {
            if a != b {
                let s = between / (intra[a] + EPS);
                f.push(s / (1.0 + s));
            }
        }
    }
    Some(mean(&f))
}

pub fn cscf(d: &Dist, y: &Labels, min: usize) -> Option<f64> {
    let (intra, inter) = class_means(d, y, min)?;
    let m = intra.len();
    let mut confused = 0usize;
    for (a, row) in inter.iter().enumerate() {
        for (b, &between) in row.iter().enumerate() {
            if a != b && between < intra[a] {
                confused += 1;
            }
        }
    }
    Some(confused as f64 / (m * (m - 1)) as f64)
}

pub fn silhouette(d: &Dist, y: &Labels) -> Option<f64> {
    let sizes = class_sizes(y);
    if sizes.len() < 2 {
        return None;
    }
    let labeled: Vec<usize> = (0..y.len()).filter(|&i| y[i].is_some()).collect();
    let s: Vec<f64> = labeled
        .iter()
        .map(|&i| {
            let own = y[i].unwrap();
            if sizes[&own] < 2 {
                return 0.0;
            }
            let dist_to = |c: usize, skip_self: bool| -> f64 {
                let v: Vec<f64> = labeled
                    .iter()
                    .filter(|&&j| y[j] == Some(c) && !(skip_self && j == i))
                    .map(|&j| d[i][j])
                    .collect();
                mean(&v)
            };
            let a = dist_to(own, true);
            let b = sizes
                .keys()
                .filter(|&&c| c != own)
                .map(|&c| dist_to(c, false))
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m == 0.0 {
                0.0
            } else {
                (b - a) / m
            }
        })
        .collect();
    Some(mean(&s))
}

/// `(nmi, purity, ari, weighted_purity)` over labeled rows not assigned to noise (-1).
pub fn clustering(assign: &[i64], y: &Labels) -> Option<(f64, f64, f64, f64)> {
    let rows: Vec<usize> = (0..y.len()).filter(|&i| y[i].is_some() && assign[i] >= 0).collect();
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    let mut table: BTreeMap<(i64, usize), f64> = BTreeMap::new();
    let mut a: BTreeMap<i64, f64> = BTreeMap::new();
    let mut b: BTreeMap<usize, f64> = BTreeMap::new();
    for &i in &rows {
        let (k, c) = (assign[i], y[i].unwrap());
        *table.entry((k, c)).or_insert(0.0) += 1.0;
        *a.entry(k).or_insert(0.0) += 1.0;
        *b.entry(c).or_insert(0.0) += 1.0;
    }
    let h = |m: &dyn Fn() -> Vec<f64>| -> f64 { -m().iter().map(|&x| (x / n) * (x / n).ln()).sum::<f64>() };
    let hu = h(&|| a.values().copied().collect());
    let hv = h(&|| b.values().copied().collect());
    let mut mi = 0.0;
    for (&(k, c), &nij) in &table {
        mi += nij / n * (n * nij / (a[&k] * b[&c])).ln();
    }
    let nmi = if a.len() == 1 && b.len() == 1 {
        1.0
    } else if hu == 0.0 || hv == 0.0 {
        0.0
    } else {
        (mi / (hu * hv).sqrt()).clamp(0.0, 1.0)
    };

    let comb = |x: f64| x * (x - 1.0) / 2.0;
    let sum_ij: f64 = table.values().map(|&x| comb(x)).sum();
    let sum_a: f64 = a.values().map(|&x| comb(x)).sum();
    let sum_b: f64 = b.values().map(|&x| comb(x)).sum();
    let expected = if comb(n) > 0.0 { sum_a * sum_b / comb(n) } else { 0.0 };
    let max_index = 0.5 * (sum_a + sum_b);
    let ari = if max_index == expected {
        1.0
    } else {
        (sum_ij - expected) / (max_index - expected)
    };

    let mut best: BTreeMap<i64, f64> = BTreeMap::new();
    for (&(k, _), &nij) in &table {
        let e = best.entry(k).or_insert(0.0);
        *e = e.max(nij);
    }
    let purity = best.values().sum::<f64>() / n;
    let weighted = a.iter().map(|(k, &size)| size / n * (best[k] / size)).sum::<f64>();
    Some((nmi, purity, ari, weighted))
}

/// Plain recursive DTW with memoization: per-frame Euclidean cost, moves
/// {diagonal, down, right}, no band. Equal-cost paths prefer fewer cells.
pub fn dtw(a: &[Vec<f64>], b: &[Vec<f64>]) -> (f64, usize) {
    fn go(
        i: usize,
        j: usize,
        a: &[Vec<f64>],
        b: &[Vec<f64>],
        memo: &mut BTreeMap<(usize, usize), (f64, usize)>,
    ) -> (f64, usize) {
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let cost = a[i].iter().zip(&b[j]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let v = if i == 0 && j == 0 {
            (cost, 1)
        } else {
            let mut options = Vec::new();
            if i > 0 && j > 0 {
                options.push(go(i - 1, j - 1, a, b, memo));
            }
            if i > 0 {
                options.push(go(i - 1, j, a, b, memo));
            }
            if j > 0 {
                options.push(go(i, j - 1, a, b, memo));
            }
            let best = options
                .into_iter()
                .min_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1)))
                .unwrap();
            (cost + best.0, best.1 + 1)
        };
        memo.insert((i, j), v);
        v
    }
    go(a.len() - 1, b.len() - 1, a, b, &mut BTreeMap::new())
}

/// Exact binomial upper tail by direct summation with exact integer
/// coefficients, valid for `n <= 60`.
pub fn binomial_tail_half(successes: u64, n: u64) -> f64 {
    let mut c: u128 = 1;
    let mut total: u128 = 0;
    for k in 0..=n {
        if k >= successes {
            total += c;
        }
        c = c * u128::from(n - k) / u128::from(k + 1);
    }
    total as f64 / 2f64.powi(n as i32)
}
