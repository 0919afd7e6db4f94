//! Command-line front end: simulation studies, inference on a CSV dataset,
//! Q-Q data and restricted-eigenvalue diagnostics.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use delasso::debias::debias;
use delasso::diagnostics::{qq_data, re_report};
use delasso::error::{Error, Result};
use delasso::harness::{
    cv_grid, emit_report, run_experiment, with_threads, write_report_csv, write_report_json,
    ExperimentReport, HarnessOptions, LambdaRule, ReportFormat, CV_STREAM_OFFSET,
};
use delasso::inference::{
    confidence_intervals, robust_sigma, test_coordinates, write_inference_csv, SigmaSource,
};
use delasso::lasso::{cross_validate, scaled_lasso, LassoOptions, LassoSolver, ScaledLassoOptions};
use delasso::precision::{nodewise_precision_with, oracle_precision, NodewiseLambda, PrecisionMethod};
use delasso::sampler::{generate_dataset, substream, ExperimentConfig, GaussianDesign};
use delasso::types::{materialize_covariance, RegressionProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Precision {
    Nodewise,
    Oracle,
}

impl From<Precision> for PrecisionMethod {
    fn from(p: Precision) -> Self {
        match p {
            Precision::Nodewise => PrecisionMethod::Nodewise,
            Precision::Oracle => PrecisionMethod::Oracle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Parser)]
#[command(name = "delasso", version)]
#[command(about = "Debiased Lasso hypothesis tests for high-dimensional regression")]
struct Cli {
    /// Seed for simulation and cross-validation (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output path; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Precision-matrix estimate used for debiasing.
    #[arg(long, global = true, value_enum, default_value_t = Precision::Nodewise)]
    precision: Precision,

    /// Noise level in the test statistics: scaled, robust or known:<value>.
    #[arg(long, global = true, default_value = "scaled")]
    sigma: String,

    /// Significance level (overrides the config file).
    #[arg(long, global = true)]
    alpha: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo study described by a TOML config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override the number of replications.
        #[arg(long)]
        replications: Option<usize>,
        /// Report format; inferred from the --out extension when omitted.
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Use λ = σ√(2 log p / n) instead of cross-validation.
        #[arg(long)]
        theory_lambda: bool,
        /// Keep one θ₀ for every replication.
        #[arg(long)]
        fixed_theta: bool,
        /// Cap on coordinate-descent sweeps per Lasso fit.
        #[arg(long)]
        max_sweeps: Option<usize>,
    },
    /// Test every coordinate of one dataset (CSV: first column Y, then X).
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// Lasso penalty; chosen by 5-fold cross-validation when omitted.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Q-Q data of the standardized residuals for one simulated replication.
    Qq {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        replication: u64,
    },
    /// Restricted-eigenvalue constants of a small design (CSV of X).
    Diagnose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        s: usize,
        #[arg(long, default_value_t = 1)]
        q: usize,
        #[arg(long, default_value_t = 3.0)]
        c: f64,
        /// Support size for φ_max; defaults to min(n, p).
        #[arg(long)]
        t: Option<usize>,
    },
}

enum Failure {
    Config(String),
    AllFailed,
    Other(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => Failure::Config(msg),
            other => Failure::Other(other),
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Reads a numeric CSV, skipping a first row that does not parse as numbers.
fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if i == 0 => continue,
            Err(e) => {
                return Err(Error::InvalidInput(format!("{}: row {}: {e}", path.display(), i + 1)))
            }
        }
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(Error::InvalidInput(format!("{}: no numeric rows", path.display())));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::InvalidInput(format!(
            "{}: row {} has {} fields, expected {ncols}",
            path.display(),
            i + 1,
            r.len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn harness_options(cli: &Cli, sigma: SigmaSource) -> HarnessOptions {
    HarnessOptions {
        precision: cli.precision.into(),
        sigma,
        ..Default::default()
    }
}

fn load_config(cli: &Cli, path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(alpha) = cli.alpha {
        cfg.alpha = alpha;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(
    cli: &Cli,
    sigma: SigmaSource,
    config: &Path,
    replications: Option<usize>,
    format: Option<Format>,
    theory_lambda: bool,
    fixed_theta: bool,
    max_sweeps: Option<usize>,
) -> std::result::Result<(), Failure> {
    let mut cfg = load_config(cli, config)?;
    if let Some(r) = replications {
        cfg.replications = r;
        cfg.validate()?;
    }
    let mut opts = harness_options(cli, sigma);
    if theory_lambda {
        opts.lambda_rule = LambdaRule::Theory;
    }
    opts.resample_theta = !fixed_theta;
    if let Some(m) = max_sweeps {
        if m == 0 {
            return Err(Failure::Config("max-sweeps must be >= 1".into()));
        }
        opts.lasso.max_iter = m;
    }
    let report: ExperimentReport = with_threads(cli.threads, || run_experiment(&cfg, &opts))??;
    for f in &report.failures {
        eprintln!("replication {} failed: {}", f.index, f.error);
    }
    let format = match (format, cli.out.as_deref()) {
        (Some(Format::Csv), _) => ReportFormat::Csv,
        (Some(Format::Json), _) => ReportFormat::Json,
        (None, Some(p)) => ReportFormat::from_path(p),
        (None, None) => ReportFormat::Json,
    };
    match cli.out.as_deref() {
        Some(p) => emit_report(&report, format, p)?,
        None => {
            let w = output(None)?;
            match format {
                ReportFormat::Csv => write_report_csv(w, &report)?,
                ReportFormat::Json => write_report_json(w, &report)?,
            }
        }
    }
    if report.per_replication.is_empty() {
        return Err(Failure::AllFailed);
    }
    Ok(())
}

fn fit(cli: &Cli, sigma: SigmaSource, input: &Path, lambda: Option<f64>) -> Result<()> {
    if cli.precision == Precision::Oracle {
        return Err(Error::Config("the oracle precision needs a known covariance; use simulate".into()));
    }
    let alpha = cli.alpha.unwrap_or(0.05);
    let data = read_matrix(input)?;
    if data.ncols() < 3 {
        return Err(Error::InvalidInput("need Y and at least two X columns".into()));
    }
    let y = DVector::from_column_slice(data.column(0).as_slice());
    let x = data.columns(1, data.ncols() - 1).into_owned();
    let problem = RegressionProblem::new(x, y)?;
    let (n, p) = (problem.n(), problem.p());
    let opts = LassoOptions::default();

    let solver = LassoSolver::new(&problem);
    let lambda = match lambda {
        Some(l) => l,
        None => {
            let mut rng = substream(cli.seed.unwrap_or(0), CV_STREAM_OFFSET);
            cross_validate(&problem, &cv_grid(&solver, None), 5, &opts, &mut rng)?.lambda_cv
        }
    };
    let lasso = solver.fit(lambda, &opts, None)?;
    let precision = nodewise_precision_with(problem.x(), NodewiseLambda::Universal, &opts)?;
    let fit = debias(&problem, &lasso, &precision)?;
    let sigma_hat = match sigma {
        SigmaSource::ScaledLasso => {
            let universal = (2.0 * (p as f64).ln() / n as f64).sqrt();
            scaled_lasso(&problem, universal, &ScaledLassoOptions::default())?.sigma_hat
        }
        SigmaSource::RobustQuantile => robust_sigma(&fit, 0.5)?,
        SigmaSource::Known(s) => s,
    };
    let report = test_coordinates(&fit, sigma_hat, sigma, alpha)?;
    let ci = confidence_intervals(&fit, sigma_hat, alpha)?;
    eprintln!("lambda = {lambda}, sigma_hat = {sigma_hat} ({sigma})");
    write_inference_csv(output(cli.out.as_deref())?, &fit, &report, &ci)
}

fn qq(cli: &Cli, config: &Path, replication: u64) -> Result<()> {
    let cfg = load_config(cli, config)?;
    let matrices = materialize_covariance(&cfg.cov)?;
    let design = GaussianDesign::from_matrices(&matrices)?;
    let data = generate_dataset(&cfg, &design, replication, true)?;
    let opts = LassoOptions::default();
    let problem = &data.problem;
    let solver = LassoSolver::new(problem);
    let mut rng = substream(cfg.seed, CV_STREAM_OFFSET + replication);
    let lambda = cross_validate(problem, &cv_grid(&solver, None), 5, &opts, &mut rng)?.lambda_cv;
    let lasso = solver.fit(lambda, &opts, None)?;
    let precision = match cli.precision {
        Precision::Oracle => oracle_precision(&cfg.cov)?,
        Precision::Nodewise => nodewise_precision_with(problem.x(), NodewiseLambda::Universal, &opts)?,
    };
    let fit = debias(problem, &lasso, &precision)?;
    let qq = qq_data(&fit, &data.truth, data.truth.sigma())?;
    eprintln!("ks_statistic = {}", qq.ks_statistic);
    qq.write_csv(output(cli.out.as_deref())?)
}

fn diagnose(cli: &Cli, input: &Path, s: usize, q: usize, c: f64, t: Option<usize>) -> Result<()> {
    let x = read_matrix(input)?;
    let t = t.unwrap_or_else(|| x.nrows().min(x.ncols()));
    let report = with_threads(cli.threads, || re_report(&x, s, q, c, t))??;
    write_json(&report, cli.out.as_deref())
}

fn run(cli: &Cli) -> std::result::Result<(), Failure> {
    let sigma: SigmaSource = cli.sigma.parse()?;
    if let Some(a) = cli.alpha {
        if !(a > 0.0 && a < 1.0) {
            return Err(Failure::Config(format!("alpha must lie in (0, 1), got {a}")));
        }
    }
    match &cli.command {
        Command::Simulate {
            config,
            replications,
            format,
            theory_lambda,
            fixed_theta,
            max_sweeps,
        } => simulate(
            cli,
            sigma,
            config,
            *replications,
            *format,
            *theory_lambda,
            *fixed_theta,
            *max_sweeps,
        ),
        Command::Fit { input, lambda } => {
            with_threads(cli.threads, || fit(cli, sigma, input, *lambda))??;
            Ok(())
        }
        Command::Qq {
            config,
            replication,
        } => {
            with_threads(cli.threads, || qq(cli, config, *replication))??;
            Ok(())
        }
        Command::Diagnose { input, s, q, c, t } => Ok(diagnose(cli, input, *s, *q, *c, *t)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::AllFailed) => {
            eprintln!("error: every replication failed");
            ExitCode::from(3)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
