//! Restricted-eigenvalue constants evaluated by enumeration on small designs,
//! and Q-Q / Kolmogorov–Smirnov diagnostics for the debiased residuals.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::debias::DebiasedFit;
use crate::error::{Error, Result};
use crate::inference::{for_each_subset, VARIANCE_FLOOR};
use crate::lasso::LassoFit;
use crate::normal::{std_normal_cdf, std_normal_quantile};
use crate::sampler::substream;
use crate::types::{gram, symmetrize, GroundTruth};

/// Enumeration caps.
pub const PHI_MAX_P: usize = 20;
pub const PHI_MAX_SUPPORTS: u64 = 4845;
pub const RE_MAX_P: usize = 12;
pub const RE_MAX_S: usize = 3;

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

fn subsets(p: usize, lo: usize, hi: usize) -> Vec<Vec<usize>> {
    let items: Vec<usize> = (0..p).collect();
    let mut out = Vec::new();
    for_each_subset(&items, lo, hi, |s| {
        out.push(s.to_vec());
        Ok(())
    })
    .expect("collecting subsets is infallible");
    out
}

fn top_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m.clone()))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `φ_max(t) = max_{1 ≤ ‖v‖₀ ≤ t} ‖Xv‖² / (n‖v‖²)`, the largest top eigenvalue
/// of a `t × t` principal submatrix of `XᵀX/n`.
pub fn phi_max(x: &DMatrix<f64>, t: usize) -> Result<f64> {
    phi_max_gram(&gram(x), t)
}

pub fn phi_max_gram(sigma_hat: &DMatrix<f64>, t: usize) -> Result<f64> {
    let p = sigma_hat.nrows();
    if t == 0 || t > p {
        return Err(Error::InvalidInput(format!("t must lie in 1..={p}, got {t}")));
    }
    if t == p {
        return Ok(top_eigenvalue(sigma_hat));
    }
    if p > PHI_MAX_P || binomial(p, t) > PHI_MAX_SUPPORTS {
        return Err(Error::TooLarge(format!(
            "phi_max enumeration needs p <= {PHI_MAX_P} and C(p, t) <= {PHI_MAX_SUPPORTS} (p = {p}, t = {t})"
        )));
    }
    Ok(subsets(p, t, t)
        .par_iter()
        .map(|s| top_eigenvalue(&sigma_hat.select_rows(s).select_columns(s)))
        .reduce(|| f64::NEG_INFINITY, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeSearchOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for ConeSearchOptions {
    fn default() -> Self {
        Self {
            restarts: 50,
            max_iter: 400,
            seed: 0x5eed,
        }
    }
}

/// Euclidean projection onto `{w : ‖w‖₁ ≤ radius}`.
pub fn project_l1_ball(w: &mut [f64], radius: f64) {
    let norm: f64 = w.iter().map(|v| v.abs()).sum();
    if norm <= radius {
        return;
    }
    if radius <= 0.0 {
        w.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let mut mags: Vec<f64> = w.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &m) in mags.iter().enumerate() {
        cum += m;
        let t = (cum - radius) / (k + 1) as f64;
        if m > t {
            theta = t;
        } else {
            break;
        }
    }
    for v in w.iter_mut() {
        *v = v.signum() * (v.abs() - theta).max(0.0);
    }
}

/// Indices of the `q` largest entries of `v` in absolute value.
fn top_q(v: &DVector<f64>, q: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    idx.truncate(q);
    idx
}

struct Cone<'a> {
    sigma_hat: &'a DMatrix<f64>,
    in_j: Vec<bool>,
    c: f64,
    q: usize,
}

impl Cone<'_> {
    fn mask(&self, v: &DVector<f64>) -> Vec<bool> {
        let mut m = self.in_j.clone();
        for i in top_q(v, self.q) {
            m[i] = true;
        }
        m
    }

    /// Squared ratio `‖Xv‖² / (n‖v_{J₂}‖²)` and its gradient with `J₂` held fixed.
    fn ratio_and_grad(&self, v: &DVector<f64>) -> (f64, DVector<f64>) {
        let mask = self.mask(v);
        let sv = self.sigma_hat * v;
        let num = v.dot(&sv);
        let den: f64 = v.iter().zip(&mask).filter(|(_, m)| **m).map(|(x, _)| x * x).sum();
        let grad = DVector::from_fn(v.len(), |i, _| {
            let d = if mask[i] { v[i] } else { 0.0 };
            2.0 * (sv[i] * den - num * d) / (den * den)
        });
        (num / den, grad)
    }

    fn ratio(&self, v: &DVector<f64>) -> f64 {
        self.ratio_and_grad(v).0
    }

    /// Rescales `v_J` to unit norm and projects `v_{J^c}` onto the ℓ1 ball of
    /// radius `c‖v_J‖₁`. Returns `false` when `v_J` vanished.
    fn retract(&self, v: &mut DVector<f64>) -> bool {
        let nj: f64 = v
            .iter()
            .zip(&self.in_j)
            .filter(|(_, m)| **m)
            .map(|(x, _)| x * x)
            .sum::<f64>()
            .sqrt();
        if !(nj > 1e-300) {
            return false;
        }
        *v /= nj;
        let l1j: f64 = v.iter().zip(&self.in_j).filter(|(_, m)| **m).map(|(x, _)| x.abs()).sum();
        let mut w: Vec<f64> = v.iter().zip(&self.in_j).filter(|(_, m)| !**m).map(|(x, _)| *x).collect();
        project_l1_ball(&mut w, self.c * l1j);
        let mut it = w.into_iter();
        for (x, m) in v.iter_mut().zip(&self.in_j) {
            if !*m {
                *x = it.next().unwrap();
            }
        }
        true
    }

    fn descend(&self, mut v: DVector<f64>, max_iter: usize) -> f64 {
        if !self.retract(&mut v) {
            return f64::INFINITY;
        }
        let (mut f, mut g) = self.ratio_and_grad(&v);
        let mut step = 0.1;
        for _ in 0..max_iter {
            let mut improved = false;
            for _ in 0..40 {
                let mut cand = &v - step * &g;
                if self.retract(&mut cand) {
                    let fc = self.ratio(&cand);
                    if fc < f {
                        let gain = f - fc;
                        v = cand;
                        (f, g) = self.ratio_and_grad(&v);
                        step *= 1.5;
                        improved = gain > 1e-14 * f.max(1e-300);
                        break;
                    }
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        f
    }

    fn search(&self, opts: &ConeSearchOptions, stream: u64) -> f64 {
        let p = self.in_j.len();
        let j: Vec<usize> = (0..p).filter(|&i| self.in_j[i]).collect();
        let sub = self.sigma_hat.select_rows(&j).select_columns(&j);
        let eig = SymmetricEigen::new(symmetrize(sub));
        let k = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap();
        let mut start = DVector::zeros(p);
        for (a, &i) in j.iter().enumerate() {
            start[i] = eig.eigenvectors[(a, k)];
        }
        let mut best = self.descend(start, opts.max_iter);
        let mut rng = substream(opts.seed, stream);
        for _ in 1..opts.restarts.max(1) {
            let mut v = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let l1j: f64 = j.iter().map(|&i| v[i].abs()).sum();
            let l1w: f64 = (0..p).filter(|&i| !self.in_j[i]).map(|i| v[i].abs()).sum();
            if l1w > 0.0 {
                let scale = self.c * l1j * rng.random::<f64>() / l1w;
                for i in (0..p).filter(|&i| !self.in_j[i]) {
                    v[i] *= scale;
                }
            }
            best = best.min(self.descend(v, opts.max_iter));
        }
        best
    }
}

fn mask_stream(set: &[usize]) -> u64 {
    set.iter().fold(0u64, |acc, &i| acc | (1 << i))
}

fn re_search(
    sigma_hat: &DMatrix<f64>,
    s: usize,
    q: usize,
    c: f64,
    opts: &ConeSearchOptions,
) -> Result<f64> {
    let p = sigma_hat.nrows();
    if s == 0 || s > p {
        return Err(Error::InvalidInput(format!("s must lie in 1..={p}, got {s}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidInput(format!("c must be > 0, got {c}")));
    }
    if p > RE_MAX_P || s > RE_MAX_S {
        return Err(Error::TooLarge(format!(
            "restricted-eigenvalue enumeration needs p <= {RE_MAX_P} and s <= {RE_MAX_S} (p = {p}, s = {s})"
        )));
    }
    let best_sq = subsets(p, 1, s)
        .par_iter()
        .map(|set| {
            let mut in_j = vec![false; p];
            set.iter().for_each(|&i| in_j[i] = true);
            Cone {
                sigma_hat,
                in_j,
                c,
                q,
            }
            .search(opts, mask_stream(set))
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(best_sq.max(0.0).sqrt())
}

/// Upper bound on `κ(s, c) = min_{|J| ≤ s} min_{‖v_{J^c}‖₁ ≤ c‖v_J‖₁} ‖Xv‖ / (√n‖v_J‖)`.
pub fn re_constant(x: &DMatrix<f64>, s: usize, c: f64) -> Result<f64> {
    re_constant_with(x, s, c, &ConeSearchOptions::default())
}

pub fn re_constant_with(
    x: &DMatrix<f64>,
    s: usize,
    c: f64,
    opts: &ConeSearchOptions,
) -> Result<f64> {
    re_search(&gram(x), s, 0, c, opts)
}

/// Upper bound on `κ(s, q, c)`, where the denominator is `‖v_{J ∪ J₁}‖` and `J₁`
/// holds the `q` largest coordinates of `v`.
pub fn re_constant_sqc(x: &DMatrix<f64>, s: usize, q: usize, c: f64) -> Result<f64> {
    re_constant_sqc_with(x, s, q, c, &ConeSearchOptions::default())
}

pub fn re_constant_sqc_with(
    x: &DMatrix<f64>,
    s: usize,
    q: usize,
    c: f64,
    opts: &ConeSearchOptions,
) -> Result<f64> {
    let p = x.ncols();
    if q < s || s + q > p {
        return Err(Error::InvalidInput(format!(
            "need q >= s and s + q <= p (s = {s}, q = {q}, p = {p})"
        )));
    }
    re_search(&gram(x), s, q, c, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct REReport {
    pub kappa_s_c: f64,
    pub kappa_s_q_c: f64,
    pub phi_max_t: f64,
    pub s: usize,
    pub q: usize,
    pub c: f64,
    pub t: usize,
    /// `false` when `φ_max(t)` had to be replaced by the top eigenvalue of `Σ̂`.
    pub exact: bool,
}

/// All three constants for one design. `t` is clamped to `p`.
pub fn re_report(x: &DMatrix<f64>, s: usize, q: usize, c: f64, t: usize) -> Result<REReport> {
    let sigma_hat = gram(x);
    let p = x.ncols();
    let t = t.min(p);
    let (phi_max_t, exact) = match phi_max_gram(&sigma_hat, t) {
        Ok(v) => (v, true),
        Err(Error::TooLarge(_)) => (top_eigenvalue(&sigma_hat), false),
        Err(e) => return Err(e),
    };
    let opts = ConeSearchOptions::default();
    let kappa_s_c = re_search(&sigma_hat, s, 0, c, &opts)?;
    let kappa_s_q_c = if q >= s && s + q <= p {
        re_search(&sigma_hat, s, q, c, &opts)?
    } else {
        return Err(Error::InvalidInput(format!(
            "need q >= s and s + q <= p (s = {s}, q = {q}, p = {p})"
        )));
    };
    Ok(REReport {
        kappa_s_c,
        kappa_s_q_c,
        phi_max_t,
        s,
        q,
        c,
        t,
        exact,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportBound {
    pub support_size: usize,
    /// `64 φ_max² / κ(s0, 3)² · s0`; infinite when `κ` vanishes.
    pub bound: f64,
    pub holds: bool,
}

/// Compares `‖θ̂‖₀` with `64 φ_max(n)² / κ(s0, 3)² · s0`. The report must carry
/// `s = s0`, `c = 3` and `t = min(n, p)`.
pub fn support_size_bound_check(fit: &LassoFit, report: &REReport, s0: usize) -> Result<SupportBound> {
    if !report.exact {
        return Err(Error::TooLarge("phi_max was not enumerated exactly".into()));
    }
    if report.s != s0 || report.c != 3.0 {
        return Err(Error::InvalidInput(format!(
            "report has s = {}, c = {}; expected s = {s0}, c = 3",
            report.s, report.c
        )));
    }
    let support_size = fit.theta_hat.iter().filter(|v| **v != 0.0).count();
    let bound = if report.kappa_s_c <= 1e-12 {
        f64::INFINITY
    } else {
        64.0 * report.phi_max_t.powi(2) / report.kappa_s_c.powi(2) * s0 as f64
    };
    Ok(SupportBound {
        support_size,
        bound,
        holds: (support_size as f64) <= bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QQData {
    /// `Φ⁻¹((i − 0.5)/p)`, ascending.
    pub theoretical: Vec<f64>,
    /// Standardized residuals, ascending.
    pub sample: Vec<f64>,
    pub ks_statistic: f64,
}

impl QQData {
    /// Builds Q-Q pairs and the KS distance to `N(0, 1)` from raw scores.
    pub fn from_scores(mut z: Vec<f64>) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::InvalidInput("no scores".into()));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        z.sort_by(f64::total_cmp);
        let p = z.len() as f64;
        let theoretical = (1..=z.len())
            .map(|i| std_normal_quantile((i as f64 - 0.5) / p))
            .collect::<Result<Vec<_>>>()?;
        let ks_statistic = ks_statistic_sorted(&z);
        Ok(Self {
            theoretical,
            sample: z,
            ks_statistic,
        })
    }

    /// Two columns, `theoretical_quantile,sample_quantile`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["theoretical_quantile", "sample_quantile"])?;
        for (t, s) in self.theoretical.iter().zip(&self.sample) {
            w.write_record([t.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn ks_statistic_sorted(z: &[f64]) -> f64 {
    let p = z.len() as f64;
    z.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = std_normal_cdf(v);
            ((i + 1) as f64 / p - f).max(f - i as f64 / p)
        })
        .fold(0.0, f64::max)
}

/// `sup_x |F_p(x) − Φ(x)|` for the empirical CDF `F_p` of `sample`.
pub fn ks_statistic(sample: &[f64]) -> f64 {
    let mut z = sample.to_vec();
    z.sort_by(f64::total_cmp);
    ks_statistic_sorted(&z)
}

/// Standardized residuals `√n(θ̂ᵘ_i − θ₀,ᵢ) / (σ √v_i)` against `N(0, 1)`.
pub fn qq_data(fit: &DebiasedFit<'_>, truth: &GroundTruth, sigma: f64) -> Result<QQData> {
    if truth.p() != fit.p() {
        return Err(Error::ShapeMismatch {
            expected: format!("theta0 of length {}", fit.p()),
            found: truth.p().to_string(),
        });
    }
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be > 0, got {sigma}")));
    }
    let root_n = (fit.n() as f64).sqrt();
    let z = (0..fit.p())
        .map(|i| {
            let v = fit.var_proxy[i];
            if !(v > VARIANCE_FLOOR) {
                return Err(Error::ZeroVariance { index: i, value: v });
            }
            Ok(root_n * (fit.theta_u[i] - truth.theta0()[i]) / (sigma * v.sqrt()))
        })
        .collect::<Result<Vec<_>>>()?;
    QQData::from_scores(z)
}
