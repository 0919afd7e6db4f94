//! The debiased estimator `θ̂ᵘ = θ̂ + (1/n) Ω̂ Xᵀ(Y − Xθ̂)` and the split of its
//! error into a Gaussian part and a bias part.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::lasso::LassoFit;
use crate::precision::PrecisionEstimate;
use crate::types::{GroundTruth, RegressionProblem};

#[derive(Debug, Clone)]
pub struct DebiasedFit<'a> {
    pub theta_u: DVector<f64>,
    /// `[Ω̂ Σ̂ Ω̂ᵀ]_ii`.
    pub var_proxy: DVector<f64>,
    pub problem: &'a RegressionProblem,
    pub lasso: &'a LassoFit,
    pub precision: &'a PrecisionEstimate,
}

impl DebiasedFit<'_> {
    pub fn n(&self) -> usize {
        self.problem.n()
    }

    pub fn p(&self) -> usize {
        self.problem.p()
    }
}

pub fn debias<'a>(
    problem: &'a RegressionProblem,
    lasso: &'a LassoFit,
    precision: &'a PrecisionEstimate,
) -> Result<DebiasedFit<'a>> {
    let p = problem.p();
    if lasso.theta_hat.len() != p || precision.omega_hat.shape() != (p, p) {
        return Err(Error::ShapeMismatch {
            expected: format!("theta of length {p} and a {p}x{p} precision"),
            found: format!(
                "theta of length {} and a {:?} precision",
                lasso.theta_hat.len(),
                precision.omega_hat.shape()
            ),
        });
    }
    let n = problem.n() as f64;
    let x = problem.x();
    let omega = &precision.omega_hat;
    let corr = x.tr_mul(&(problem.y() - x * &lasso.theta_hat)) / n;
    let theta_u = &lasso.theta_hat + omega * corr;

    // ‖X Ω̂_{i,·}ᵀ‖² / n, column i of X Ω̂ᵀ
    let projected = x * omega.transpose();
    let var_proxy = DVector::from_iterator(
        p,
        projected.column_iter().map(|c| c.norm_squared() / n),
    );
    if theta_u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(DebiasedFit {
        theta_u,
        var_proxy,
        problem,
        lasso,
        precision,
    })
}

/// `√n(θ̂ᵘ − θ₀) = Z + Δ` with `Δ = √n(Ω̂Σ̂ − I)(θ₀ − θ̂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasDecomposition {
    pub z: DVector<f64>,
    pub delta: DVector<f64>,
}

pub fn decompose_bias(fit: &DebiasedFit<'_>, truth: &GroundTruth) -> Result<BiasDecomposition> {
    if truth.p() != fit.p() {
        return Err(Error::ShapeMismatch {
            expected: format!("theta0 of length {}", fit.p()),
            found: format!("length {}", truth.p()),
        });
    }
    let n = fit.n() as f64;
    let x = fit.problem.x();
    let diff = truth.theta0() - &fit.lasso.theta_hat;
    let sigma_diff = x.tr_mul(&(x * &diff)) / n;
    let delta = (&fit.precision.omega_hat * sigma_diff - &diff) * n.sqrt();
    let scaled_err = (&fit.theta_u - truth.theta0()) * n.sqrt();
    let z = scaled_err - &delta;
    Ok(BiasDecomposition { z, delta })
}

/// `‖v‖_(∞,k)`: the largest root-mean-square of `v` over index sets of size at
/// least `k`, attained by the `k` entries of largest magnitude. Equals the
/// max norm for `k = 1` and `‖v‖₂/√m` for `k = m`.
pub fn infty_k_norm(v: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k > v.len() {
        return Err(Error::BadK { k, len: v.len() });
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let top: f64 = mags[..k].iter().map(|x| x * x).sum();
    Ok((top / k as f64).sqrt())
}

/// `{i : |Δ_i| > ε}`.
pub fn large_bias_set(delta: &DVector<f64>, epsilon: f64) -> Result<Vec<usize>> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!("epsilon must be > 0, got {epsilon}")));
    }
    Ok(delta
        .iter()
        .enumerate()
        .filter(|(_, d)| d.abs() > epsilon)
        .map(|(i, _)| i)
        .collect())
}
