//! Per-coordinate tests and intervals built on a [`DebiasedFit`], the
//! quantile-based noise estimator, the Gaussian power function `G(α, u)` and
//! the quantities used to compare with the minimax power bound.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::debias::DebiasedFit;
use crate::error::{Error, Result};
use crate::normal::{std_normal_quantile, std_normal_sf};
use crate::types::{materialize_covariance, CovarianceModel, GroundTruth};

/// Variance proxies at or below this are treated as degenerate.
pub const VARIANCE_FLOOR: f64 = 1e-14;

/// Where the noise level used in the test statistics came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaSource {
    ScaledLasso,
    RobustQuantile,
    Known(f64),
}

impl fmt::Display for SigmaSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ScaledLasso => write!(f, "scaled"),
            Self::RobustQuantile => write!(f, "robust"),
            Self::Known(s) => write!(f, "known:{s}"),
        }
    }
}

impl FromStr for SigmaSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scaled" | "scaled_lasso" => Ok(Self::ScaledLasso),
            "robust" | "robust_quantile" => Ok(Self::RobustQuantile),
            other => {
                let value = other
                    .strip_prefix("known:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "sigma source must be scaled, robust or known:<value>, got {other:?}"
                        ))
                    })?;
                if !(value > 0.0 && value.is_finite()) {
                    return Err(Error::Config(format!("known sigma must be > 0, got {value}")));
                }
                Ok(Self::Known(value))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub p_values: DVector<f64>,
    /// `true` rejects `θ₀,ᵢ = 0`.
    pub decisions: Vec<bool>,
    pub alpha: f64,
    pub sigma_used: f64,
    pub sigma_source: SigmaSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceIntervals {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    /// Nominal coverage `1 − α`.
    pub level: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("sigma must be > 0, got {sigma}")))
    }
}

fn check_variances(var: &DVector<f64>) -> Result<()> {
    match var.iter().position(|v| !(*v > VARIANCE_FLOOR)) {
        Some(index) => Err(Error::ZeroVariance {
            index,
            value: var[index],
        }),
        None => Ok(()),
    }
}

/// Two-sided p-values `2(1 − Φ(√n|θ̂ᵘ_i| / (σ̂ √v_i)))`.
pub fn p_values(fit: &DebiasedFit<'_>, sigma_hat: f64) -> Result<DVector<f64>> {
    check_sigma(sigma_hat)?;
    check_variances(&fit.var_proxy)?;
    let root_n = (fit.n() as f64).sqrt();
    Ok(fit
        .theta_u
        .zip_map(&fit.var_proxy, |t, v| {
            let stat = root_n * t.abs() / (sigma_hat * v.sqrt());
            (2.0 * std_normal_sf(stat)).min(1.0)
        }))
}

/// Reject where `P_i ≤ α`.
pub fn decide(p_values: &DVector<f64>, alpha: f64) -> Result<Vec<bool>> {
    check_alpha(alpha)?;
    Ok(p_values.iter().map(|&p| p <= alpha).collect())
}

pub fn test_coordinates(
    fit: &DebiasedFit<'_>,
    sigma_hat: f64,
    sigma_source: SigmaSource,
    alpha: f64,
) -> Result<TestReport> {
    let p_values = p_values(fit, sigma_hat)?;
    let decisions = decide(&p_values, alpha)?;
    Ok(TestReport {
        p_values,
        decisions,
        alpha,
        sigma_used: sigma_hat,
        sigma_source,
    })
}

/// `θ̂ᵘ_i ± Φ⁻¹(1 − α/2) σ̂ √v_i / √n`.
pub fn confidence_intervals(
    fit: &DebiasedFit<'_>,
    sigma_hat: f64,
    alpha: f64,
) -> Result<ConfidenceIntervals> {
    check_alpha(alpha)?;
    check_sigma(sigma_hat)?;
    check_variances(&fit.var_proxy)?;
    let crit = std_normal_quantile(1.0 - alpha / 2.0)?;
    let root_n = (fit.n() as f64).sqrt();
    let half = fit.var_proxy.map(|v| crit * sigma_hat * v.sqrt() / root_n);
    Ok(ConfidenceIntervals {
        lower: &fit.theta_u - &half,
        upper: &fit.theta_u + &half,
        level: 1.0 - alpha,
    })
}

/// Standardized scores `z_i = √n θ̂ᵘ_i / √v_i`.
pub fn standardized_scores(fit: &DebiasedFit<'_>) -> Result<DVector<f64>> {
    check_variances(&fit.var_proxy)?;
    let root_n = (fit.n() as f64).sqrt();
    Ok(fit.theta_u.zip_map(&fit.var_proxy, |t, v| root_n * t / v.sqrt()))
}

/// `|z|_(k) / Φ⁻¹((1 + q)/2)` with `k = ⌈p q⌉`, the `k`-th smallest absolute
/// score.
pub fn robust_sigma_from_scores(z: &[f64], quantile_alpha: f64) -> Result<f64> {
    if !(quantile_alpha > 0.0 && quantile_alpha < 1.0) {
        return Err(Error::Domain(format!(
            "quantile level must lie in (0, 1), got {quantile_alpha}"
        )));
    }
    if z.is_empty() {
        return Err(Error::InvalidInput("no scores".into()));
    }
    let mut mags: Vec<f64> = z.iter().map(|v| v.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let k = ((z.len() as f64 * quantile_alpha).ceil() as usize).clamp(1, z.len());
    Ok(mags[k - 1] / std_normal_quantile((1.0 + quantile_alpha) / 2.0)?)
}

/// Noise level from the median (by default) absolute standardized score.
pub fn robust_sigma(fit: &DebiasedFit<'_>, quantile_alpha: f64) -> Result<f64> {
    let z = standardized_scores(fit)?;
    robust_sigma_from_scores(z.as_slice(), quantile_alpha)
}

/// Two-sided power of a level-`α` z-test at standardized effect `u`:
/// `G(α, u) = 2 − Φ(Φ⁻¹(1 − α/2) + u) − Φ(Φ⁻¹(1 − α/2) − u)`.
pub fn power_function(alpha: f64, u: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(u >= 0.0) {
        return Err(Error::Domain(format!("u must be >= 0, got {u}")));
    }
    let crit = std_normal_quantile(1.0 - alpha / 2.0)?;
    Ok(std_normal_sf(crit + u) + std_normal_sf(crit - u))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPrediction {
    /// `(i, G(α, √n|θ₀,ᵢ| / (σ√Ω_ii)))` for each `i` in the support.
    pub per_coordinate: Vec<(usize, f64)>,
    /// Mean over the support; `None` when the support is empty.
    pub average: Option<f64>,
}

pub fn predicted_average_power(
    truth: &GroundTruth,
    cov: &CovarianceModel,
    n: usize,
    alpha: f64,
) -> Result<PowerPrediction> {
    let omega = materialize_covariance(cov)?.omega;
    predicted_average_power_with_omega(truth, &omega, n, alpha)
}

pub fn predicted_average_power_with_omega(
    truth: &GroundTruth,
    omega: &DMatrix<f64>,
    n: usize,
    alpha: f64,
) -> Result<PowerPrediction> {
    if omega.nrows() != truth.p() {
        return Err(Error::ShapeMismatch {
            expected: format!("{0}x{0} precision", truth.p()),
            found: format!("{:?}", omega.shape()),
        });
    }
    let root_n = (n as f64).sqrt();
    let per_coordinate = truth
        .support()
        .iter()
        .map(|&i| {
            let u = root_n * truth.theta0()[i].abs() / (truth.sigma() * omega[(i, i)].sqrt());
            Ok((i, power_function(alpha, u)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let average = (!per_coordinate.is_empty())
        .then(|| per_coordinate.iter().map(|(_, g)| g).sum::<f64>() / per_coordinate.len() as f64);
    Ok(PowerPrediction {
        per_coordinate,
        average,
    })
}

/// Largest `p` and `s0` accepted by the exact enumeration.
pub const MINIMAX_MAX_P: usize = 20;
pub const MINIMAX_MAX_S0: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaxQuantities {
    /// `η = max_i min_{S ⊆ [p]∖{i}, |S| < s0} Σ_{i|S}`, with `S = ∅` admitted.
    pub eta: Option<f64>,
    /// Same with `S` restricted to non-empty sets; `None` when no such set fits.
    pub eta_nonempty: Option<f64>,
    /// `σ_eff / (σ/√n) = 1/√η`.
    pub sigma_eff_factor: Option<f64>,
    /// `(max_i √Ω_ii) √η`.
    pub increase_factor: Option<f64>,
    /// `max_i √(Ω_ii Σ_ii)`.
    pub diagonal_bound: f64,
    /// `√(σ_max(Σ)/σ_min(Σ))`.
    pub increase_factor_bound: f64,
}

/// `Σ_{i|S} = Σ_ii − Σ_{i,S} Σ_{S,S}⁻¹ Σ_{S,i}`.
pub fn conditional_variance(sigma: &DMatrix<f64>, i: usize, set: &[usize]) -> Result<f64> {
    if set.is_empty() {
        return Ok(sigma[(i, i)]);
    }
    let sub = sigma.select_rows(set).select_columns(set);
    let cross = DVector::from_iterator(set.len(), set.iter().map(|&k| sigma[(k, i)]));
    let chol = sub.cholesky().ok_or_else(|| Error::NotPositiveDefinite {
        min_eigenvalue: f64::NAN,
    })?;
    Ok(sigma[(i, i)] - cross.dot(&chol.solve(&cross)))
}

/// Calls `f` with every subset of `items` of size `lo..=hi`, in lexicographic order.
pub(crate) fn for_each_subset<F: FnMut(&[usize]) -> Result<()>>(
    items: &[usize],
    lo: usize,
    hi: usize,
    mut f: F,
) -> Result<()> {
    fn rec<F: FnMut(&[usize]) -> Result<()>>(
        items: &[usize],
        start: usize,
        lo: usize,
        hi: usize,
        cur: &mut Vec<usize>,
        f: &mut F,
    ) -> Result<()> {
        if cur.len() >= lo {
            f(cur)?;
        }
        if cur.len() == hi {
            return Ok(());
        }
        for idx in start..items.len() {
            cur.push(items[idx]);
            rec(items, idx + 1, lo, hi, cur, f)?;
            cur.pop();
        }
        Ok(())
    }
    rec(items, 0, lo, hi, &mut Vec::new(), &mut f)
}

/// Minimax comparison quantities for covariance `sigma` and sparsity `s0`.
/// With `exact` the conditional variances are enumerated over all admissible
/// sets (`p ≤ 20`, `s0 ≤ 4`); otherwise only the eigenvalue bounds are filled.
pub fn minimax_quantities(sigma: &DMatrix<f64>, s0: usize, exact: bool) -> Result<MinimaxQuantities> {
    let p = sigma.nrows();
    if !sigma.is_square() || p == 0 {
        return Err(Error::ShapeMismatch {
            expected: "non-empty square covariance".into(),
            found: format!("{:?}", sigma.shape()),
        });
    }
    if s0 == 0 {
        return Err(Error::InvalidInput("s0 must be >= 1".into()));
    }
    let omega = crate::types::spd_inverse(sigma)?;
    let eig = SymmetricEigen::new(crate::types::symmetrize(sigma.clone())).eigenvalues;
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let increase_factor_bound = (hi / lo).sqrt();
    let diagonal_bound = (0..p)
        .map(|i| (omega[(i, i)] * sigma[(i, i)]).sqrt())
        .fold(0.0, f64::max);

    if !exact {
        return Ok(MinimaxQuantities {
            eta: None,
            eta_nonempty: None,
            sigma_eff_factor: None,
            increase_factor: None,
            diagonal_bound,
            increase_factor_bound,
        });
    }
    if p > MINIMAX_MAX_P || s0 > MINIMAX_MAX_S0 {
        return Err(Error::TooLarge(format!(
            "exact minimax quantities need p <= {MINIMAX_MAX_P} and s0 <= {MINIMAX_MAX_S0} (p = {p}, s0 = {s0})"
        )));
    }
    let max_size = (s0 - 1).min(p - 1);
    let mut eta = f64::NEG_INFINITY;
    let mut eta_nonempty: Option<f64> = None;
    for i in 0..p {
        let rest: Vec<usize> = (0..p).filter(|&k| k != i).collect();
        let mut min_all = f64::INFINITY;
        let mut min_nonempty = f64::INFINITY;
        for_each_subset(&rest, 0, max_size, |set| {
            let v = conditional_variance(sigma, i, set)?;
            min_all = min_all.min(v);
            if !set.is_empty() {
                min_nonempty = min_nonempty.min(v);
            }
            Ok(())
        })?;
        eta = eta.max(min_all);
        if min_nonempty.is_finite() {
            eta_nonempty = Some(eta_nonempty.map_or(min_nonempty, |e| e.max(min_nonempty)));
        }
    }
    let max_root_omega = (0..p).map(|i| omega[(i, i)].sqrt()).fold(0.0, f64::max);
    Ok(MinimaxQuantities {
        eta: Some(eta),
        eta_nonempty,
        sigma_eff_factor: Some(1.0 / eta.sqrt()),
        increase_factor: Some(max_root_omega * eta.sqrt()),
        diagonal_bound,
        increase_factor_bound,
    })
}

/// One row per coordinate:
/// `index,theta_hat,theta_u,var_proxy,p_value,decision,ci_lower,ci_upper`.
pub fn write_inference_csv<W: Write>(
    writer: W,
    fit: &DebiasedFit<'_>,
    report: &TestReport,
    ci: &ConfidenceIntervals,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "index", "theta_hat", "theta_u", "var_proxy", "p_value", "decision", "ci_lower", "ci_upper",
    ])?;
    for i in 0..fit.p() {
        w.write_record(&[
            i.to_string(),
            fit.lasso.theta_hat[i].to_string(),
            fit.theta_u[i].to_string(),
            fit.var_proxy[i].to_string(),
            report.p_values[i].to_string(),
            u8::from(report.decisions[i]).to_string(),
            ci.lower[i].to_string(),
            ci.upper[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
