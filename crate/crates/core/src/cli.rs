//! Command-line front end.

use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::error::{ContextKind, ContextValue, ErrorKind};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::experiment::{fit_replicate, run_experiment, Estimator, ExperimentConfig, TablePreset, TableRow};
use crate::glm::{Loss, RidgeConvention};
use crate::influence::loo_betas;
use crate::io::{self, format_real, Format};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Logistic,
    Squared,
}

impl From<LossArg> for Loss {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Logistic => Loss::Logistic,
            LossArg::Squared => Loss::Squared,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    /// penalty λ‖β‖²
    Paper,
    /// penalty (λ/2)‖β‖²
    Half,
}

impl From<ConventionArg> for RidgeConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Paper => RidgeConvention::SquaredNorm,
            ConventionArg::Half => RidgeConvention::HalfSquaredNorm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    /// λ = 0.01 over (n, p) ∈ {(250, 500), (500, 1000), (1000, 2000)}
    #[value(name = "paper-table-1")]
    PaperTable1,
    /// λ = 10 over the same grid
    #[value(name = "paper-table-2")]
    PaperTable2,
}

impl From<PresetArg> for TablePreset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::PaperTable1 => TablePreset::PaperTable1,
            PresetArg::PaperTable2 => TablePreset::PaperTable2,
        }
    }
}

fn positive_usize(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("expected a positive integer, got '{s}'")),
    }
}

fn positive_real(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive real number, got '{s}'")),
    }
}

fn estimator(s: &str) -> std::result::Result<Estimator, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "newfluence",
    version,
    about = "Exact and approximate leave-one-out influence for ridge-regularized GLMs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Number of threads (default: all cores)
    #[arg(long, env = "NEWFLUENCE_THREADS", value_parser = positive_usize)]
    threads: Option<usize>,
    /// Output format
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Ridge penalty scaling
    #[arg(long = "ridge-convention", value_enum, default_value = "half")]
    ridge_convention: ConventionArg,
    /// Random seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Args)]
struct Problem {
    /// Training size
    #[arg(long, value_parser = positive_usize)]
    n: usize,
    /// Dimension
    #[arg(long, value_parser = positive_usize)]
    p: usize,
    /// Regularization strength
    #[arg(long, value_parser = positive_real)]
    lambda: f64,
    #[arg(long, value_enum, default_value = "logistic")]
    loss: LossArg,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one synthetic instance and write the coefficients
    #[command(allow_negative_numbers = true)]
    Fit {
        #[command(flatten)]
        problem: Problem,
        #[command(flatten)]
        common: Common,
        /// Coefficient output file
        #[arg(long)]
        out: PathBuf,
    },
    /// Write influence records for every (training, test) pair
    #[command(allow_negative_numbers = true)]
    Influence {
        #[command(flatten)]
        problem: Problem,
        #[command(flatten)]
        common: Common,
        /// Number of test points
        #[arg(long, value_parser = positive_usize, default_value_t = 100)]
        tests: usize,
        /// Estimators, comma separated (true, if, corrected_if, new)
        #[arg(long, value_delimiter = ',', value_parser = estimator)]
        estimators: Option<Vec<Estimator>>,
        /// Records output file
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one configuration and write its table row (and optionally records)
    #[command(allow_negative_numbers = true)]
    Experiment {
        #[command(flatten)]
        problem: Problem,
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = positive_usize, default_value_t = 100)]
        tests: usize,
        #[arg(long, value_delimiter = ',', value_parser = estimator)]
        estimators: Option<Vec<Estimator>>,
        /// Independent data draws pooled into the row
        #[arg(long, value_parser = positive_usize, default_value_t = 1)]
        replicates: usize,
        /// Table output file
        #[arg(long)]
        out: PathBuf,
        /// Records output file
        #[arg(long = "records-out")]
        records_out: Option<PathBuf>,
    },
    /// Reproduce a preset grid of table rows
    #[command(allow_negative_numbers = true)]
    Tables {
        #[arg(long, value_enum)]
        preset: PresetArg,
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = positive_usize, default_value_t = 100)]
        tests: usize,
        #[arg(long, value_parser = positive_usize, default_value_t = 1)]
        replicates: usize,
        /// Skip grid rows with n above this value
        #[arg(long = "max-n", value_parser = positive_usize)]
        max_n: Option<usize>,
        /// Table output file
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubcommandKind {
    Fit,
    Influence,
    Experiment,
    Tables,
}

/// A validated command line.
#[derive(Debug, Clone, PartialEq)]
pub struct CliInvocation {
    pub subcommand: SubcommandKind,
    /// One configuration per table row (a single one except for `tables`).
    pub configs: Vec<ExperimentConfig>,
    pub threads: Option<usize>,
    pub format: Format,
    pub out: PathBuf,
    pub records_out: Option<PathBuf>,
}

/// Outcome of argument parsing that is not a runnable invocation.
#[derive(Debug, Clone, PartialEq)]
pub enum ParseFailure {
    /// `--help` or `--version`: print and exit successfully.
    Info(String),
    /// Invalid command line.
    Usage { flag: Option<String>, message: String },
}

impl ParseFailure {
    pub fn exit_code(&self) -> i32 {
        match self {
            ParseFailure::Info(_) => 0,
            ParseFailure::Usage { .. } => 2,
        }
    }
}

fn offending_flag(err: &clap::Error) -> Option<String> {
    match err.get(ContextKind::InvalidArg)? {
        ContextValue::String(s) => s.split_whitespace().next().map(str::to_owned),
        ContextValue::Strings(v) => v
            .first()
            .and_then(|s| s.split_whitespace().next())
            .map(str::to_owned),
        _ => None,
    }
}

fn estimator_set(list: Option<Vec<Estimator>>) -> BTreeSet<Estimator> {
    match list {
        Some(v) => v.into_iter().collect(),
        None => Estimator::ALL.into_iter().collect(),
    }
}

fn base_config(problem: &Problem, common: &Common, m: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(problem.n, problem.p, problem.lambda, m, common.seed);
    cfg.loss = problem.loss.into();
    cfg.ridge_convention = common.ridge_convention.into();
    cfg
}

/// Parses `argv` (including the program name).
pub fn parse_args<I, T>(argv: I) -> std::result::Result<CliInvocation, ParseFailure>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ParseFailure::Info(e.to_string()),
        _ => ParseFailure::Usage {
            flag: offending_flag(&e),
            message: e
                .to_string()
                .lines()
                .map(str::trim)
                .filter(|l| {
                    !l.is_empty() && !l.starts_with("Usage:") && !l.starts_with("For more information")
                })
                .collect::<Vec<_>>()
                .join(" "),
        },
    })?;

    let inv = match cli.command {
        Command::Fit { problem, common, out } => CliInvocation {
            subcommand: SubcommandKind::Fit,
            configs: vec![base_config(&problem, &common, 1)],
            threads: common.threads,
            format: common.format.into(),
            out,
            records_out: None,
        },
        Command::Influence {
            problem,
            common,
            tests,
            estimators,
            out,
        } => {
            let mut cfg = base_config(&problem, &common, tests);
            cfg.estimators = estimator_set(estimators);
            CliInvocation {
                subcommand: SubcommandKind::Influence,
                configs: vec![cfg],
                threads: common.threads,
                format: common.format.into(),
                out,
                records_out: None,
            }
        }
        Command::Experiment {
            problem,
            common,
            tests,
            estimators,
            replicates,
            out,
            records_out,
        } => {
            let mut cfg = base_config(&problem, &common, tests);
            cfg.estimators = estimator_set(estimators);
            cfg.replicates = replicates;
            CliInvocation {
                subcommand: SubcommandKind::Experiment,
                configs: vec![cfg],
                threads: common.threads,
                format: common.format.into(),
                out,
                records_out,
            }
        }
        Command::Tables {
            preset,
            common,
            tests,
            replicates,
            max_n,
            out,
        } => {
            let configs = TablePreset::from(preset)
                .configs(tests, common.seed)
                .into_iter()
                .filter(|c| max_n.is_none_or(|m| c.n <= m))
                .map(|mut c| {
                    c.replicates = replicates;
                    c.ridge_convention = common.ridge_convention.into();
                    c
                })
                .collect::<Vec<_>>();
            if configs.is_empty() {
                return Err(ParseFailure::Usage {
                    flag: Some("--max-n".into()),
                    message: "--max-n excludes every row of the preset".into(),
                });
            }
            CliInvocation {
                subcommand: SubcommandKind::Tables,
                configs,
                threads: common.threads,
                format: common.format.into(),
                out,
                records_out: None,
            }
        }
    };
    Ok(inv)
}

fn summary_line(row: &TableRow) -> String {
    let f = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
    format!(
        "n={} p={} lambda={} df/p={:.4} tau_new={} ({}) tau_if={} ({}) tau_corrected={} ({})",
        row.n,
        row.p,
        row.lambda,
        row.df_ratio,
        f(row.tau_new_mean),
        f(row.tau_new_std),
        f(row.tau_if_mean),
        f(row.tau_if_std),
        f(row.tau_corrected_mean),
        f(row.tau_corrected_std),
    )
}

fn write_coefficients(inv: &CliInvocation, beta: &DVector<f64>) -> Result<()> {
    let body = match inv.format {
        Format::Csv => {
            let mut s = String::from("index,beta\n");
            for (k, b) in beta.iter().enumerate() {
                s.push_str(&format!("{k},{}\n", format_real(*b)));
            }
            s
        }
        Format::Json => {
            let mut s = serde_json::to_string(beta.as_slice()).map_err(|e| Error::Format {
                path: inv.out.clone(),
                message: e.to_string(),
            })?;
            s.push('\n');
            s
        }
    };
    io::write_atomic(&inv.out, body.as_bytes())
}

fn execute(inv: &CliInvocation) -> Result<()> {
    match inv.subcommand {
        SubcommandKind::Fit => {
            let cfg = &inv.configs[0];
            let fitted = fit_replicate(cfg, 0)?;
            write_coefficients(inv, &fitted.beta_hat)?;
            let hat = fitted.engine.hat();
            println!(
                "n={} p={} lambda={} df={:.6} df/p={:.6}",
                cfg.n, cfg.p, cfg.lambda, hat.df, hat.df_ratio
            );
        }
        SubcommandKind::Influence => {
            let cfg = &inv.configs[0];
            let fitted = fit_replicate(cfg, 0)?;
            let loo = if cfg.estimators.contains(&Estimator::True) {
                Some(loo_betas(&fitted.spec, &fitted.beta_hat, &cfg.solver)?)
            } else {
                None
            };
            let records = fitted.engine.evaluate(&fitted.instance.test, loo.as_ref())?;
            io::write_records(&inv.out, &records, inv.format)?;
            println!(
                "{} records, df/p={:.6}",
                records.len(),
                fitted.engine.hat().df_ratio
            );
        }
        SubcommandKind::Experiment => {
            let out = run_experiment(&inv.configs[0])?;
            io::write_results(
                &out.rows,
                &out.records,
                inv.format,
                &inv.out,
                inv.records_out.as_deref(),
            )?;
            println!("{}", summary_line(&out.rows[0]));
        }
        SubcommandKind::Tables => {
            let mut rows = Vec::with_capacity(inv.configs.len());
            for cfg in &inv.configs {
                let out = run_experiment(cfg)?;
                println!("{}", summary_line(&out.rows[0]));
                rows.extend(out.rows);
            }
            io::write_table(&inv.out, &rows, inv.format)?;
        }
    }
    Ok(())
}

/// Runs a parsed invocation on a pool of the requested size.
pub fn run(inv: &CliInvocation) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = inv.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::invalid(format!("cannot start thread pool: {e}")))?;
    pool.install(|| execute(inv))
}

/// Single-line JSON error description for standard error.
pub fn error_line(kind: &str, flag: Option<&str>, message: &str) -> String {
    let mut obj = serde_json::Map::new();
    obj.insert("error".into(), kind.into());
    if let Some(f) = flag {
        obj.insert("flag".into(), f.into());
    }
    obj.insert("message".into(), message.into());
    serde_json::Value::Object(obj).to_string()
}

/// Entry point used by the binary; returns the process exit status.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let inv = match parse_args(argv) {
        Ok(inv) => inv,
        Err(ParseFailure::Info(text)) => {
            print!("{text}");
            return 0;
        }
        Err(ParseFailure::Usage { flag, message }) => {
            eprintln!("{}", error_line("usage", flag.as_deref(), &message));
            return 2;
        }
    };
    match run(&inv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), None, &e.to_string()));
            1
        }
    }
}
