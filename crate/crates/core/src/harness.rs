//! Monte-Carlo driver: simulate, fit, debias, test and aggregate type-I error
//! and power over replications.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::debias::{debias, decompose_bias, infty_k_norm};
use crate::diagnostics::qq_data;
use crate::error::{Error, Result};
use crate::inference::{
    predicted_average_power_with_omega, robust_sigma, test_coordinates, SigmaSource,
};
use crate::lasso::{
    cross_validate, lambda_grid, scaled_lasso, theory_lambda, LassoOptions, LassoSolver,
    ScaledLassoOptions,
};
use crate::precision::{
    nodewise_precision_with, precision_error_norm, NodewiseLambda, PrecisionEstimate,
    PrecisionMethod,
};
use crate::sampler::{generate_dataset, substream, ExperimentConfig, GaussianDesign};
use crate::types::{materialize_covariance, CovarianceMatrices};

/// Offset of the cross-validation streams from the data streams.
pub const CV_STREAM_OFFSET: u64 = 1 << 40;

/// Cross-validation grid: 100 log-spaced points from `λ_max` down to
/// `min_ratio · λ_max`, where `min_ratio` defaults to 0.01 when `n < p` and
/// 0.001 otherwise.
pub fn cv_grid(solver: &LassoSolver<'_>, min_ratio: Option<f64>) -> Vec<f64> {
    let problem = solver.problem();
    let ratio = min_ratio.unwrap_or(if problem.n() < problem.p() { 0.01 } else { 0.001 });
    lambda_grid(solver.lambda_max(), 100, ratio)
}

/// How the Lasso penalty of the main regression is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    /// K-fold cross-validation over the default log-spaced grid.
    CrossValidated { folds: usize },
    /// `σ √(2 log p / n)` with the true noise level.
    Theory,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessOptions {
    pub precision: PrecisionMethod,
    pub nodewise_lambda: NodewiseLambda,
    pub sigma: SigmaSource,
    pub lambda_rule: LambdaRule,
    /// Draw a fresh `θ₀` in every replication instead of sharing one.
    pub resample_theta: bool,
    /// Quantile level of the robust noise estimator.
    pub robust_quantile: f64,
    /// Smallest grid point of the cross-validation path as a fraction of
    /// `λ_max`; `None` uses 0.01 when `n < p` and 0.001 otherwise.
    pub lambda_min_ratio: Option<f64>,
    pub lasso: LassoOptions,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        Self {
            precision: PrecisionMethod::Nodewise,
            nodewise_lambda: NodewiseLambda::Universal,
            sigma: SigmaSource::ScaledLasso,
            lambda_rule: LambdaRule::CrossValidated { folds: 5 },
            resample_theta: true,
            robust_quantile: 0.5,
            lambda_min_ratio: None,
            lasso: LassoOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub index: u64,
    pub seed: u64,
    /// Rejection rate over the null coordinates; `None` when every coordinate
    /// is in the support.
    pub type1_error: Option<f64>,
    /// Rejection rate over the support; `None` when `s0 = 0`.
    pub avg_power: Option<f64>,
    pub null_rejections: usize,
    pub null_count: usize,
    pub support_rejections: usize,
    pub support_count: usize,
    /// Noise level plugged into the tests.
    pub sigma_hat: f64,
    pub sigma_scaled: Option<f64>,
    pub sigma_robust: f64,
    pub lambda_used: f64,
    /// `|Ω̂ − Ω|_∞` (largest row ℓ₁ norm).
    pub precision_error: f64,
    pub ks_statistic: f64,
    /// `‖Δ‖_(∞, s0)`; `None` when `s0 = 0`.
    pub bias_norm: Option<f64>,
    pub predicted_power: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub index: u64,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub options: HarnessOptions,
    pub per_replication: Vec<ReplicationResult>,
    pub failures: Vec<ReplicationFailure>,
    /// Mean and sample standard deviation of the per-replication rates.
    pub type1_mean: Option<f64>,
    pub type1_std: Option<f64>,
    pub power_mean: Option<f64>,
    pub power_std: Option<f64>,
    /// Null rejections over null coordinates, pooled across replications.
    pub type1_pooled: Option<f64>,
    /// Mean over replications of `(1/s0) Σ_{i∈S} G(α, √n|θ₀,ᵢ|/(σ√Ω_ii))`.
    pub predicted_power: Option<f64>,
    /// Caveats attached to the numbers above.
    pub notes: Vec<String>,
}

/// Everything shared by the replications of one study.
pub struct Experiment<'a> {
    config: &'a ExperimentConfig,
    options: &'a HarnessOptions,
    matrices: CovarianceMatrices,
    design: GaussianDesign,
}

impl<'a> Experiment<'a> {
    pub fn new(config: &'a ExperimentConfig, options: &'a HarnessOptions) -> Result<Self> {
        config.validate()?;
        if !(options.robust_quantile > 0.0 && options.robust_quantile < 1.0) {
            return Err(Error::Config(format!(
                "robust_quantile must lie in (0, 1), got {}",
                options.robust_quantile
            )));
        }
        match options.lambda_rule {
            LambdaRule::CrossValidated { folds } if folds < 2 || folds > config.n => {
                return Err(Error::Config(format!(
                    "need 2 <= folds <= n (folds = {folds}, n = {})",
                    config.n
                )));
            }
            LambdaRule::Fixed(l) if !(l > 0.0 && l.is_finite()) => {
                return Err(Error::Config(format!("fixed lambda must be > 0, got {l}")));
            }
            _ => {}
        }
        if let Some(r) = options.lambda_min_ratio {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::Config(format!("lambda_min_ratio must lie in (0, 1), got {r}")));
            }
        }
        let matrices = materialize_covariance(&config.cov)?;
        let design = GaussianDesign::from_matrices(&matrices)?;
        Ok(Self {
            config,
            options,
            matrices,
            design,
        })
    }

    pub fn run_replication(&self, index: u64) -> Result<ReplicationResult> {
        let cfg = self.config;
        let opts = self.options;
        let data = generate_dataset(cfg, &self.design, index, opts.resample_theta)?;
        let problem = &data.problem;
        let truth = &data.truth;
        let (n, p) = (cfg.n, cfg.p);

        let solver = LassoSolver::new(problem);
        let lambda = match opts.lambda_rule {
            LambdaRule::CrossValidated { folds } => {
                let mut rng = substream(cfg.seed, CV_STREAM_OFFSET + index);
                let grid = cv_grid(&solver, opts.lambda_min_ratio);
                cross_validate(problem, &grid, folds, &opts.lasso, &mut rng)?.lambda_cv
            }
            LambdaRule::Theory => theory_lambda(cfg.sigma, n, p),
            LambdaRule::Fixed(l) => l,
        };
        let lasso = solver.fit(lambda, &opts.lasso, None)?;

        let precision = match opts.precision {
            PrecisionMethod::Oracle => PrecisionEstimate {
                omega_hat: self.matrices.omega.clone(),
                method: PrecisionMethod::Oracle,
                per_node: Vec::new(),
            },
            PrecisionMethod::Nodewise => {
                nodewise_precision_with(problem.x(), opts.nodewise_lambda, &opts.lasso)?
            }
        };
        let fit = debias(problem, &lasso, &precision)?;

        let sigma_robust = robust_sigma(&fit, opts.robust_quantile)?;
        let sigma_scaled = match opts.sigma {
            SigmaSource::ScaledLasso => {
                let universal = (2.0 * (p as f64).ln() / n as f64).sqrt();
                let sopts = ScaledLassoOptions {
                    lasso: opts.lasso,
                    ..Default::default()
                };
                Some(scaled_lasso(problem, universal, &sopts)?.sigma_hat)
            }
            _ => None,
        };
        let sigma_hat = match opts.sigma {
            SigmaSource::ScaledLasso => sigma_scaled.expect("computed above"),
            SigmaSource::RobustQuantile => sigma_robust,
            SigmaSource::Known(s) => s,
        };
        let report = test_coordinates(&fit, sigma_hat, opts.sigma, cfg.alpha)?;

        let mask = truth.support_mask();
        let (mut null_rej, mut supp_rej) = (0, 0);
        for (rejected, in_support) in report.decisions.iter().zip(&mask) {
            if *rejected {
                if *in_support {
                    supp_rej += 1;
                } else {
                    null_rej += 1;
                }
            }
        }
        let support_count = truth.s0();
        let null_count = p - support_count;
        let rate = |k: usize, m: usize| (m > 0).then(|| k as f64 / m as f64);

        let bias_norm = if support_count > 0 {
            let dec = decompose_bias(&fit, truth)?;
            Some(infty_k_norm(dec.delta.as_slice(), support_count)?)
        } else {
            None
        };
        let precision_error = precision_error_norm(&precision.omega_hat, &self.matrices.omega)?;
        let ks_statistic = qq_data(&fit, truth, truth.sigma())?.ks_statistic;
        let predicted_power =
            predicted_average_power_with_omega(truth, &self.matrices.omega, n, cfg.alpha)?.average;

        Ok(ReplicationResult {
            index,
            seed: cfg.seed,
            type1_error: rate(null_rej, null_count),
            avg_power: rate(supp_rej, support_count),
            null_rejections: null_rej,
            null_count,
            support_rejections: supp_rej,
            support_count,
            sigma_hat,
            sigma_scaled,
            sigma_robust,
            lambda_used: lambda,
            precision_error,
            ks_statistic,
            bias_norm,
            predicted_power,
        })
    }

    /// Runs every replication (in parallel) and aggregates in index order.
    pub fn run(&self) -> ExperimentReport {
        let outcomes: Vec<(u64, Result<ReplicationResult>)> = (0..self.config.replications as u64)
            .into_par_iter()
            .map(|r| (r, self.run_replication(r)))
            .collect();
        let mut per_replication = Vec::new();
        let mut failures = Vec::new();
        for (index, outcome) in outcomes {
            match outcome {
                Ok(r) => per_replication.push(r),
                Err(e) => failures.push(ReplicationFailure {
                    index,
                    seed: self.config.seed,
                    error: e.to_string(),
                }),
            }
        }
        let mut report =
            aggregate(self.config.clone(), self.options.clone(), per_replication, failures);
        let diag = self.matrices.sigma.diagonal();
        let (lo, hi) = (diag.min(), diag.max());
        if (lo - 1.0).abs() > 1e-12 || (hi - 1.0).abs() > 1e-12 {
            report.notes.push(format!(
                "design covariance has diagonal in [{lo}, {hi}], not unit; predicted power uses Ω_ii of the model as given"
            ));
        }
        if !self.options.resample_theta {
            report.notes.push("theta0 shared across replications".into());
        }
        report
    }
}

pub fn run_replication(
    config: &ExperimentConfig,
    options: &HarnessOptions,
    index: u64,
) -> Result<ReplicationResult> {
    Experiment::new(config, options)?.run_replication(index)
}

pub fn run_experiment(config: &ExperimentConfig, options: &HarnessOptions) -> Result<ExperimentReport> {
    Ok(Experiment::new(config, options)?.run())
}

/// Runs `f` on a pool of `threads` workers, or on the global pool when `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::Config("threads must be >= 1".into())),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, std))
}

pub fn aggregate(
    config: ExperimentConfig,
    options: HarnessOptions,
    per_replication: Vec<ReplicationResult>,
    failures: Vec<ReplicationFailure>,
) -> ExperimentReport {
    let type1: Vec<f64> = per_replication.iter().filter_map(|r| r.type1_error).collect();
    let power: Vec<f64> = per_replication.iter().filter_map(|r| r.avg_power).collect();
    let predicted: Vec<f64> = per_replication.iter().filter_map(|r| r.predicted_power).collect();
    let null_rej: usize = per_replication.iter().map(|r| r.null_rejections).sum();
    let null_count: usize = per_replication.iter().map(|r| r.null_count).sum();
    let t = mean_std(&type1);
    let w = mean_std(&power);
    ExperimentReport {
        config,
        options,
        per_replication,
        failures,
        type1_mean: t.map(|v| v.0),
        type1_std: t.map(|v| v.1),
        power_mean: w.map(|v| v.0),
        power_std: w.map(|v| v.1),
        type1_pooled: (null_count > 0).then(|| null_rej as f64 / null_count as f64),
        predicted_power: mean_std(&predicted).map(|v| v.0),
        notes: Vec::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

impl ReportFormat {
    /// Chosen from the file extension; JSON unless it ends in `.csv`.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Self::Csv,
            _ => Self::Json,
        }
    }
}

pub const CSV_COLUMNS: [&str; 20] = [
    "replication",
    "seed",
    "status",
    "type1_error",
    "avg_power",
    "null_rejections",
    "null_count",
    "support_rejections",
    "support_count",
    "sigma_hat",
    "sigma_scaled",
    "sigma_robust",
    "lambda_used",
    "precision_error",
    "ks_statistic",
    "bias_norm",
    "predicted_power",
    "type1_std",
    "power_std",
    "type1_pooled",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per replication (failed ones with status `failed`) followed by a
/// `summary` row carrying the aggregates.
pub fn write_report_csv<W: Write>(writer: W, report: &ExperimentReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_COLUMNS)?;
    let mut rows: Vec<(u64, Vec<String>)> = Vec::new();
    for r in &report.per_replication {
        rows.push((
            r.index,
            vec![
                r.index.to_string(),
                r.seed.to_string(),
                "ok".into(),
                opt(r.type1_error),
                opt(r.avg_power),
                r.null_rejections.to_string(),
                r.null_count.to_string(),
                r.support_rejections.to_string(),
                r.support_count.to_string(),
                r.sigma_hat.to_string(),
                opt(r.sigma_scaled),
                r.sigma_robust.to_string(),
                r.lambda_used.to_string(),
                r.precision_error.to_string(),
                r.ks_statistic.to_string(),
                opt(r.bias_norm),
                opt(r.predicted_power),
                String::new(),
                String::new(),
                String::new(),
            ],
        ));
    }
    for f in &report.failures {
        let mut row = vec![String::new(); CSV_COLUMNS.len()];
        row[0] = f.index.to_string();
        row[1] = f.seed.to_string();
        let mut status = String::from("failed: ");
        let _ = write!(status, "{}", f.error);
        row[2] = status;
        rows.push((f.index, row));
    }
    rows.sort_by_key(|(i, _)| *i);
    for (_, row) in rows {
        w.write_record(row)?;
    }
    let mut summary = vec![String::new(); CSV_COLUMNS.len()];
    summary[0] = "summary".into();
    summary[1] = report.config.seed.to_string();
    summary[2] = format!("{} ok, {} failed", report.per_replication.len(), report.failures.len());
    summary[3] = opt(report.type1_mean);
    summary[4] = opt(report.power_mean);
    summary[16] = opt(report.predicted_power);
    summary[17] = opt(report.type1_std);
    summary[18] = opt(report.power_std);
    summary[19] = opt(report.type1_pooled);
    w.write_record(summary)?;
    w.flush()?;
    Ok(())
}

pub fn write_report_json<W: Write>(mut writer: W, report: &ExperimentReport) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, report)?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn read_report_json(path: &Path) -> Result<ExperimentReport> {
    Ok(serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?)
}

pub fn emit_report(report: &ExperimentReport, format: ReportFormat, path: &Path) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    match format {
        ReportFormat::Csv => write_report_csv(file, report),
        ReportFormat::Json => write_report_json(file, report),
    }
}

/// The report as a string, for comparing runs byte for byte.
pub fn report_json_string(report: &ExperimentReport) -> Result<String> {
    let mut buf = Vec::new();
    write_report_json(&mut buf, report)?;
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}
