use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use embedgeom::pipeline::{
    extract_distances, format_value, metric_correlation, run_pipeline, EvalReport, Overrides, PcaEntry, RunConfig,
};
use embedgeom::Error;

#[derive(Parser)]
#[command(name = "embedgeom", version, about = "Evaluate the geometry of frozen audio embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration file and list every problem found.
    Validate(RunArgs),
    /// Pool, project and write pairwise distance matrices.
    ExtractDistances(RunArgs),
    /// Run the full evaluation and write report.csv, report.json and correlations.csv.
    Evaluate(RunArgs),
    /// Correlate score names across configurations of an existing report.
    Correlate {
        /// A report.json written by `evaluate`.
        report: PathBuf,
        /// Output path (default: correlations.csv next to the report).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print an existing report.
    Report {
        report: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
        format: ReportFormat,
        /// Only show rows that carry an error.
        #[arg(long)]
        errors_only: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Table,
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Rerank {
    Dtw,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    config: PathBuf,
    /// Replace the output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Pooling strategies, comma separated (e.g. `mean_time_incl_pad+mean_feat,max_time`).
    #[arg(long, value_delimiter = ',')]
    pooling: Option<Vec<String>>,
    /// PCA dimensions, comma separated integers or `none`.
    #[arg(long, value_delimiter = ',')]
    pca_dims: Option<Vec<String>>,
    /// Distance kinds: cosine, euclidean, spearman.
    #[arg(long = "metric", value_delimiter = ',')]
    metric_kinds: Option<Vec<String>>,
    /// Number of label permutations for the baselines.
    #[arg(long)]
    permutations: Option<i64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Label-noise fractions, comma separated.
    #[arg(long, value_delimiter = ',')]
    noise: Option<Vec<f64>>,
    /// Add re-ranked variants of every distance matrix.
    #[arg(long, value_enum)]
    rerank: Option<Rerank>,
    #[arg(long)]
    dtw_band: Option<f64>,
    #[arg(long)]
    dtw_stride: Option<i64>,
    #[arg(long)]
    dtw_shortlist: Option<i64>,
    /// Frame PCA dimensions for DTW (0 keeps the original frames).
    #[arg(long)]
    dtw_pca: Option<i64>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            pooling: self.pooling.clone(),
            pca_dims: self
                .pca_dims
                .as_ref()
                .map(|v| v.iter().map(|s| PcaEntry::parse_cli(s)).collect()),
            metric_kinds: self.metric_kinds.clone(),
            permutations: self.permutations,
            seed: self.seed,
            noise: self.noise.clone(),
            rerank_dtw: self.rerank == Some(Rerank::Dtw),
            dtw_band: self.dtw_band,
            dtw_stride: self.dtw_stride,
            dtw_shortlist: self.dtw_shortlist,
            dtw_pca: self.dtw_pca,
        }
    }

    fn load(&self) -> Result<RunConfig, Error> {
        let mut cfg = RunConfig::load(&self.config, &self.overrides())?;
        if let Some(dir) = &self.out_dir {
            cfg.output_dir = dir.clone();
        }
        Ok(cfg)
    }
}

const EXIT_FAILED_ROWS: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Validate(args) => {
            let cfg = args.load()?;
            let combos = cfg.feature_configs().len() * cfg.metric_kinds.len();
            println!(
                "configuration OK: {} subset(s), {} feature configuration(s), {} distance kind(s), {combos} combination(s) per manifest subset",
                cfg.subsets.len(),
                cfg.feature_configs().len(),
                cfg.metric_kinds.len()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::ExtractDistances(args) => {
            let cfg = args.load()?;
            let summary = extract_distances(&cfg)?;
            for p in &summary.written {
                println!("{}", p.display());
            }
            for f in &summary.failures {
                eprintln!("failed: {f}");
            }
            Ok(if summary.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAILED_ROWS)
            })
        }
        Command::Evaluate(args) => {
            let cfg = args.load()?;
            let report = run_pipeline(&cfg);
            report.write(&cfg.output_dir)?;
            write_correlations(&report, &cfg.output_dir.join("correlations.csv"))?;
            let errors = report.error_rows();
            println!(
                "{} score rows, {errors} error rows written to {}",
                report.score_rows(),
                cfg.output_dir.display()
            );
            Ok(if errors == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAILED_ROWS)
            })
        }
        Command::Correlate { report, out } => {
            let parsed = EvalReport::read_json(&report)?;
            let out = out.unwrap_or_else(|| sibling(&report, "correlations.csv"));
            let m = metric_correlation(&parsed)?;
            m.write(&out)?;
            print!("{}", m.to_csv()?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Report {
            report,
            format,
            errors_only,
        } => {
            let mut parsed = EvalReport::read_json(&report)?;
            if errors_only {
                parsed.rows.retain(|r| r.is_error());
            }
            match format {
                ReportFormat::Csv => print!("{}", parsed.to_csv()?),
                ReportFormat::Json => print!("{}", parsed.to_json()?),
                ReportFormat::Table => print_table(&parsed),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or_else(|| Path::new(".")).join(name)
}

/// Writes correlations when the report allows them; otherwise logs why not.
fn write_correlations(report: &EvalReport, path: &Path) -> Result<(), Error> {
    match metric_correlation(report) {
        Ok(m) => m.write(path),
        Err(Error::Parameter(msg)) => {
            log::info!("correlations.csv not written: {msg}");
            if path.exists() {
                std::fs::remove_file(path).map_err(|source| Error::Io {
                    path: path.to_path_buf(),
                    source,
                })?;
            }
            Ok(())
        }
        Err(e) => Err(e),
    }
}

fn print_table(report: &EvalReport) {
    let header = ["subset", "feature_config", "metric_kind", "score_name", "value"];
    let cells: Vec<[String; 5]> = report
        .rows
        .iter()
        .map(|r| {
            [
                r.subset.clone(),
                r.feature_config.clone(),
                r.metric_kind.clone(),
                r.score_name.clone(),
                match (&r.value, &r.error) {
                    (Some(v), _) => format_value(&r.score_name, *v),
                    (None, Some(e)) => format!("ERROR: {e}"),
                    (None, None) => String::new(),
                },
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row.iter()).take(4) {
            *w = (*w).max(c.len());
        }
    }
    let line = |row: [&str; 5]| {
        let mut s = String::new();
        for i in 0..4 {
            s.push_str(&format!("{:<w$}  ", row[i], w = widths[i]));
        }
        s.push_str(row[4]);
        println!("{}", s.trim_end());
    };
    line(header);
    for row in &cells {
        line([&row[0], &row[1], &row[2], &row[3], &row[4]]);
    }
}
