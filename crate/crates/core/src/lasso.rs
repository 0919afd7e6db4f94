//! ℓ₁-penalized least squares,
//!
//! ```text
//! minimize  (1/2n)‖Y − Xθ‖² + λ‖θ‖₁
//! ```
//!
//! solved by cyclic coordinate descent on the Gram matrix `XᵀX/n`. After each
//! full sweep the solver cycles over the current active set until it settles,
//! then returns to full sweeps. A fit is reported converged only when the
//! largest coordinate move of a full sweep is below `tol` *and* the
//! subgradient (KKT) conditions hold to `tol`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{gram, RegressionProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    /// Stop when no coordinate moves more than this in a full sweep.
    pub tol: f64,
    /// Cap on sweeps (full and active-set sweeps both count).
    pub max_iter: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub theta_hat: DVector<f64>,
    pub lambda: f64,
    pub iterations: usize,
    /// Largest violation of the subgradient conditions at `theta_hat`.
    pub max_kkt_violation: f64,
    pub active_set: Vec<usize>,
    pub objective: f64,
    pub converged: bool,
}

pub fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// `(1/2n)‖Y − Xθ‖² + λ‖θ‖₁`, evaluated directly on the data.
pub fn lasso_objective(problem: &RegressionProblem, theta: &DVector<f64>, lambda: f64) -> f64 {
    let resid = problem.y() - problem.x() * theta;
    resid.norm_squared() / (2.0 * problem.n() as f64) + lambda * theta.lp_norm(1)
}

/// KKT violation of `theta` computed directly on the data: on the zero set
/// `max(|X_jᵀr/n| − λ, 0)`, on the active set `|X_jᵀr/n − λ sign θ_j|`.
pub fn kkt_violation(problem: &RegressionProblem, theta: &DVector<f64>, lambda: f64) -> f64 {
    let resid = problem.y() - problem.x() * theta;
    let corr = problem.x().tr_mul(&resid) / problem.n() as f64;
    kkt_from_correlations(&corr, theta, lambda, None)
}

fn kkt_from_correlations(
    corr: &DVector<f64>,
    theta: &DVector<f64>,
    lambda: f64,
    excluded: Option<usize>,
) -> f64 {
    let mut worst: f64 = 0.0;
    for (j, (&c, &t)) in corr.iter().zip(theta.iter()).enumerate() {
        if Some(j) == excluded {
            continue;
        }
        let v = if t == 0.0 {
            (c.abs() - lambda).max(0.0)
        } else {
            (c - lambda * t.signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Smallest λ for which the zero vector is optimal: `‖XᵀY/n‖_∞`.
pub fn lambda_max(problem: &RegressionProblem) -> f64 {
    (problem.x().tr_mul(problem.y()) / problem.n() as f64).amax()
}

/// `len` values log-spaced from `lambda_max` down to `min_ratio · lambda_max`.
pub fn lambda_grid(lambda_max: f64, len: usize, min_ratio: f64) -> Vec<f64> {
    if len <= 1 {
        return vec![lambda_max];
    }
    let lo = min_ratio.ln();
    (0..len)
        .map(|k| {
            if k == 0 {
                lambda_max
            } else {
                lambda_max * (lo * k as f64 / (len - 1) as f64).exp()
            }
        })
        .collect()
}

/// 100 points from `λ_max` down to `0.001 λ_max`.
pub fn default_lambda_grid(problem: &RegressionProblem) -> Vec<f64> {
    lambda_grid(lambda_max(problem), 100, 1e-3)
}

/// `σ √(2 log p / n)`.
pub fn theory_lambda(sigma: f64, n: usize, p: usize) -> f64 {
    sigma * (2.0 * (p as f64).ln() / n as f64).sqrt()
}

/// Quadratic data of a Lasso problem: `G = XᵀX/n`, `c = XᵀY/n`,
/// `‖Y‖²/n`. One coordinate may be excluded (held at zero), which is how the
/// nodewise regressions reuse the full Gram matrix.
pub(crate) struct GramView<'a> {
    pub gram: &'a DMatrix<f64>,
    pub xty: &'a DVector<f64>,
    pub yty: f64,
    pub excluded: Option<usize>,
}

impl GramView<'_> {
    fn objective(&self, theta: &DVector<f64>, corr: &DVector<f64>, lambda: f64) -> f64 {
        // θᵀGθ = θᵀ(c − r)
        0.5 * self.yty - 0.5 * theta.dot(&(self.xty + corr)) + lambda * theta.lp_norm(1)
    }

    pub fn solve(
        &self,
        lambda: f64,
        opts: &LassoOptions,
        warm_start: Option<&DVector<f64>>,
        mut trace: Option<&mut Vec<f64>>,
    ) -> Result<LassoFit> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
        }
        if !(opts.tol > 0.0) {
            return Err(Error::InvalidInput(format!("tol must be > 0, got {}", opts.tol)));
        }
        let p = self.gram.nrows();
        let mut theta = match warm_start {
            Some(w) if w.len() == p => w.clone(),
            Some(w) => {
                return Err(Error::ShapeMismatch {
                    expected: format!("warm start of length {p}"),
                    found: format!("length {}", w.len()),
                })
            }
            None => DVector::zeros(p),
        };
        if let Some(j) = self.excluded {
            theta[j] = 0.0;
        }
        let mut corr = self.xty - self.gram * &theta;
        let coords: Vec<usize> = (0..p).filter(|&j| Some(j) != self.excluded).collect();
        let mut active: Vec<usize> = Vec::new();

        let mut iterations = 0;
        let mut converged = false;
        let mut kkt = f64::INFINITY;

        let sweep = |idx: &[usize], theta: &mut DVector<f64>, corr: &mut DVector<f64>| -> f64 {
            let mut max_change: f64 = 0.0;
            for &j in idx {
                let gjj = self.gram[(j, j)];
                let old = theta[j];
                let new = if gjj > 0.0 {
                    soft_threshold(corr[j] + gjj * old, lambda) / gjj
                } else {
                    0.0
                };
                let delta = new - old;
                if delta != 0.0 {
                    corr.axpy(-delta, &self.gram.column(j), 1.0);
                    theta[j] = new;
                    max_change = max_change.max(delta.abs());
                }
            }
            max_change
        };

        while iterations < opts.max_iter {
            let change = sweep(&coords, &mut theta, &mut corr);
            iterations += 1;
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.objective(&theta, &corr, lambda));
            }
            if !change.is_finite() || theta.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
            if change < opts.tol {
                // refresh to shed accumulated rounding before certifying
                corr = self.xty - self.gram * &theta;
                kkt = kkt_from_correlations(&corr, &theta, lambda, self.excluded);
                if kkt <= opts.tol {
                    converged = true;
                    break;
                }
                continue;
            }
            active.clear();
            active.extend(coords.iter().copied().filter(|&j| theta[j] != 0.0));
            while iterations < opts.max_iter {
                let change = sweep(&active, &mut theta, &mut corr);
                iterations += 1;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(self.objective(&theta, &corr, lambda));
                }
                if !change.is_finite() {
                    return Err(Error::NonFinite);
                }
                if change < opts.tol {
                    break;
                }
            }
        }
        if !converged {
            corr = self.xty - self.gram * &theta;
            kkt = kkt_from_correlations(&corr, &theta, lambda, self.excluded);
        }
        let objective = self.objective(&theta, &corr, lambda);
        if !objective.is_finite() {
            return Err(Error::NonFinite);
        }
        let active_set = (0..p).filter(|&j| theta[j] != 0.0).collect();
        Ok(LassoFit {
            theta_hat: theta,
            lambda,
            iterations,
            max_kkt_violation: kkt,
            active_set,
            objective,
            converged,
        })
    }
}

fn require_converged(fit: LassoFit) -> Result<LassoFit> {
    if fit.converged {
        Ok(fit)
    } else {
        Err(Error::MaxIterations(Box::new(fit)))
    }
}

/// Solver bound to one problem; the Gram matrix is computed once and shared
/// by every fit.
pub struct LassoSolver<'a> {
    problem: &'a RegressionProblem,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
}

impl<'a> LassoSolver<'a> {
    pub fn new(problem: &'a RegressionProblem) -> Self {
        let n = problem.n() as f64;
        Self {
            problem,
            gram: gram(problem.x()),
            xty: problem.x().tr_mul(problem.y()) / n,
            yty: problem.y().norm_squared() / n,
        }
    }

    pub fn problem(&self) -> &RegressionProblem {
        self.problem
    }

    /// `Σ̂ = XᵀX/n` used by the solver.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn lambda_max(&self) -> f64 {
        self.xty.amax()
    }

    fn view(&self) -> GramView<'_> {
        GramView {
            gram: &self.gram,
            xty: &self.xty,
            yty: self.yty,
            excluded: None,
        }
    }

    /// Fit at one λ. Returns `MaxIterations` carrying the last iterate when
    /// the sweep budget runs out.
    pub fn fit(
        &self,
        lambda: f64,
        opts: &LassoOptions,
        warm_start: Option<&DVector<f64>>,
    ) -> Result<LassoFit> {
        require_converged(self.view().solve(lambda, opts, warm_start, None)?)
    }

    /// Like [`fit`](Self::fit) but also returns the objective after every sweep.
    pub fn fit_traced(
        &self,
        lambda: f64,
        opts: &LassoOptions,
        warm_start: Option<&DVector<f64>>,
    ) -> Result<(LassoFit, Vec<f64>)> {
        let mut trace = Vec::new();
        let fit = self.view().solve(lambda, opts, warm_start, Some(&mut trace))?;
        Ok((require_converged(fit)?, trace))
    }

    /// Warm-started fits along a descending grid.
    pub fn path(&self, grid: &[f64], opts: &LassoOptions) -> Result<Vec<LassoFit>> {
        if grid.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidInput("lambda grid must be sorted descending".into()));
        }
        let mut fits: Vec<LassoFit> = Vec::with_capacity(grid.len());
        for &lambda in grid {
            let warm = fits.last().map(|f| &f.theta_hat);
            let fit = self.fit(lambda, opts, warm)?;
            fits.push(fit);
        }
        Ok(fits)
    }
}

pub fn lasso(
    problem: &RegressionProblem,
    lambda: f64,
    opts: &LassoOptions,
    warm_start: Option<&DVector<f64>>,
) -> Result<LassoFit> {
    LassoSolver::new(problem).fit(lambda, opts, warm_start)
}

pub fn lasso_path(
    problem: &RegressionProblem,
    grid: &[f64],
    opts: &LassoOptions,
) -> Result<Vec<LassoFit>> {
    LassoSolver::new(problem).path(grid, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub lambda: f64,
    pub mean_error: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub lambda_cv: f64,
    /// Position of `lambda_cv` in the grid.
    pub index: usize,
    pub curve: Vec<CvPoint>,
}

/// Rows of each fold: a seeded permutation of `0..n` cut into `folds`
/// contiguous blocks whose sizes differ by at most one.
pub fn fold_assignment<R: Rng + ?Sized>(n: usize, folds: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for k in 0..folds {
        let len = base + usize::from(k < extra);
        out.push(perm[start..start + len].to_vec());
        start += len;
    }
    out
}

fn select_rows(problem: &RegressionProblem, rows: &[usize]) -> Result<RegressionProblem> {
    let x = problem.x().select_rows(rows.iter());
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| problem.y()[i]));
    RegressionProblem::new(x, y)
}

/// K-fold cross-validation of held-out mean squared error along `grid`
/// (descending). Picks the λ with the smallest mean error, preferring the
/// larger λ on ties.
pub fn cross_validate<R: Rng + ?Sized>(
    problem: &RegressionProblem,
    grid: &[f64],
    folds: usize,
    opts: &LassoOptions,
    rng: &mut R,
) -> Result<CrossValidation> {
    let n = problem.n();
    if folds < 2 || n < folds {
        return Err(Error::InvalidInput(format!(
            "need 2 <= folds <= n (folds = {folds}, n = {n})"
        )));
    }
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty lambda grid".into()));
    }
    let assignment = fold_assignment(n, folds, rng);
    let per_fold: Vec<Vec<f64>> = assignment
        .par_iter()
        .map(|test_rows| -> Result<Vec<f64>> {
            let mut in_test = vec![false; n];
            for &i in test_rows {
                in_test[i] = true;
            }
            let train_rows: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
            let train = select_rows(problem, &train_rows)?;
            let test = select_rows(problem, test_rows)?;
            let fits = LassoSolver::new(&train).path(grid, opts)?;
            Ok(fits
                .iter()
                .map(|f| (test.y() - test.x() * &f.theta_hat).norm_squared() / test.n() as f64)
                .collect())
        })
        .collect::<Result<_>>()?;

    let k = folds as f64;
    let curve: Vec<CvPoint> = grid
        .iter()
        .enumerate()
        .map(|(g, &lambda)| {
            let errs: Vec<f64> = per_fold.iter().map(|f| f[g]).collect();
            let mean = errs.iter().sum::<f64>() / k;
            let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0);
            CvPoint {
                lambda,
                mean_error: mean,
                std_error: (var / k).sqrt(),
            }
        })
        .collect();
    let mut index = 0;
    for (g, pt) in curve.iter().enumerate() {
        if pt.mean_error < curve[index].mean_error {
            index = g;
        }
    }
    Ok(CrossValidation {
        lambda_cv: grid[index],
        index,
        curve,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledLassoOptions {
    /// Stop when the relative change in σ falls below this (or the absolute
    /// change falls below `1e-14 · sd(Y)`).
    pub tol: f64,
    /// Cap on (θ, σ) alternations.
    pub max_iter: usize,
    pub lasso: LassoOptions,
}

impl Default for ScaledLassoOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 500,
            lasso: LassoOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledLassoFit {
    pub theta_hat: DVector<f64>,
    pub sigma_hat: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Changes in σ below this fraction of the starting value are treated as
/// converged; the inner Lasso tolerance cannot resolve σ more finely.
const SIGMA_RESOLUTION: f64 = 1e-14;

/// Joint minimizer of `(1/2σn)‖Y − Xθ‖² + σ/2 + λ‖θ‖₁` by alternating a Lasso
/// step at penalty `σλ` with `σ = ‖Y − Xθ‖/√n`, starting from `σ = sd(Y)`.
pub fn scaled_lasso(
    problem: &RegressionProblem,
    lambda: f64,
    opts: &ScaledLassoOptions,
) -> Result<ScaledLassoFit> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("lambda must be > 0, got {lambda}")));
    }
    let solver = LassoSolver::new(problem);
    let n = problem.n() as f64;
    let y = problem.y();
    let mean = y.mean();
    let mut sigma = if problem.n() > 1 {
        (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    if sigma == 0.0 {
        sigma = y.norm() / n.sqrt();
    }
    let sigma0 = sigma;
    let mut theta = DVector::zeros(problem.p());
    for it in 1..=opts.max_iter {
        let fit = solver.fit(sigma * lambda, &opts.lasso, Some(&theta))?;
        theta = fit.theta_hat;
        let next = (y - problem.x() * &theta).norm() / n.sqrt();
        if next == 0.0 {
            return Err(Error::DegenerateResidual(Box::new(ScaledLassoFit {
                theta_hat: theta,
                sigma_hat: 0.0,
                lambda,
                iterations: it,
                converged: false,
            })));
        }
        let step = (next - sigma).abs();
        let done = step < opts.tol * sigma || step <= SIGMA_RESOLUTION * sigma0;
        sigma = next;
        if done {
            return Ok(ScaledLassoFit {
                theta_hat: theta,
                sigma_hat: sigma,
                lambda,
                iterations: it,
                converged: true,
            });
        }
    }
    Err(Error::ScaledLassoMaxIterations(Box::new(ScaledLassoFit {
        theta_hat: theta,
        sigma_hat: sigma,
        lambda,
        iterations: opts.max_iter,
        converged: false,
    })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::substream;
    use approx::assert_abs_diff_eq;
    use rand_distr::StandardNormal;

    fn random_problem(n: usize, p: usize, seed: u64) -> RegressionProblem {
        let mut rng = substream(seed, 0);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        RegressionProblem::new(x, y).unwrap()
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
    }

    #[test]
    fn large_lambda_gives_zero() {
        let prob = random_problem(20, 6, 1);
        let fit = lasso(&prob, lambda_max(&prob), &LassoOptions::default(), None).unwrap();
        assert!(fit.theta_hat.iter().all(|v| *v == 0.0));
        assert!(fit.active_set.is_empty());
        assert!(fit.converged);
    }

    #[test]
    fn orthonormal_design_is_soft_thresholding() {
        // columns of a scaled Hadamard matrix: XᵀX/n = I
        let h = DMatrix::from_row_slice(
            4,
            4,
            &[1., 1., 1., 1., 1., -1., 1., -1., 1., 1., -1., -1., 1., -1., -1., 1.],
        );
        let y = DVector::from_vec(vec![2.0, -0.3, 0.7, 1.1]);
        let prob = RegressionProblem::new(h.clone(), y.clone()).unwrap();
        let fit = lasso(&prob, 0.2, &LassoOptions::default(), None).unwrap();
        let c = h.tr_mul(&y) / 4.0;
        for j in 0..4 {
            assert_abs_diff_eq!(fit.theta_hat[j], soft_threshold(c[j], 0.2), epsilon = 1e-12);
        }
    }

    #[test]
    fn objective_is_monotone_per_sweep() {
        let prob = random_problem(30, 50, 2);
        let solver = LassoSolver::new(&prob);
        let (_, trace) = solver
            .fit_traced(0.05, &LassoOptions::default(), None)
            .unwrap();
        assert!(trace.len() > 2);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn kkt_certificate_holds() {
        for seed in 0..10 {
            let prob = random_problem(25, 40, seed);
            let lam = 0.3 * lambda_max(&prob);
            let fit = lasso(&prob, lam, &LassoOptions::default(), None).unwrap();
            assert!(kkt_violation(&prob, &fit.theta_hat, lam) <= 1e-6);
            assert!(fit.max_kkt_violation <= 1e-7);
            assert_abs_diff_eq!(
                fit.objective,
                lasso_objective(&prob, &fit.theta_hat, lam),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn max_iterations_returns_last_iterate() {
        let prob = random_problem(20, 30, 5);
        let opts = LassoOptions {
            tol: 1e-12,
            max_iter: 2,
        };
        match lasso(&prob, 0.01, &opts, None) {
            Err(Error::MaxIterations(fit)) => {
                assert!(!fit.converged);
                assert_eq!(fit.iterations, 2);
            }
            other => panic!("expected MaxIterations, got {other:?}"),
        }
    }

    #[test]
    fn path_matches_cold_starts() {
        let prob = random_problem(30, 10, 6);
        let grid = lambda_grid(lambda_max(&prob), 15, 0.01);
        let opts = LassoOptions {
            tol: 1e-10,
            ..Default::default()
        };
        let path = lasso_path(&prob, &grid, &opts).unwrap();
        let zero_obj = lasso_objective(&prob, &DVector::zeros(10), 0.0);
        for (fit, &lam) in path.iter().zip(&grid) {
            let cold = lasso(&prob, lam, &opts, None).unwrap();
            assert!((&fit.theta_hat - &cold.theta_hat).amax() < 1e-6);
            assert!(fit.objective <= zero_obj + 1e-12);
        }
        let single = lasso_path(&prob, &grid[..1], &opts).unwrap();
        assert!(single[0].theta_hat.iter().all(|v| *v == 0.0));
        assert!(lasso_path(&prob, &[0.1, 0.2], &opts).is_err());
    }

    #[test]
    fn grid_shape() {
        let g = lambda_grid(2.0, 100, 1e-3);
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 2.0);
        assert_abs_diff_eq!(g[99], 2e-3, epsilon = 1e-15);
        assert!(g.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn leave_one_out_runs() {
        let prob = random_problem(10, 4, 7);
        let grid = lambda_grid(lambda_max(&prob), 10, 0.01);
        let cv = cross_validate(&prob, &grid, 10, &LassoOptions::default(), &mut substream(1, 0))
            .unwrap();
        assert_eq!(cv.curve.len(), 10);
        assert_eq!(cv.lambda_cv, grid[cv.index]);
    }

    #[test]
    fn cv_is_deterministic() {
        let prob = random_problem(40, 15, 8);
        let grid = default_lambda_grid(&prob);
        let opts = LassoOptions::default();
        let a = cross_validate(&prob, &grid, 5, &opts, &mut substream(3, 0)).unwrap();
        let b = cross_validate(&prob, &grid, 5, &opts, &mut substream(3, 0)).unwrap();
        assert_eq!(a, b);
        assert!(cross_validate(&prob, &grid, 1, &opts, &mut substream(3, 0)).is_err());
    }

    #[test]
    fn folds_partition_rows() {
        let folds = fold_assignment(23, 5, &mut substream(0, 0));
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![5, 5, 5, 4, 4]);
    }

    #[test]
    fn scaled_lasso_zero_response_is_degenerate() {
        let prob = RegressionProblem::new(
            DMatrix::from_fn(10, 3, |i, j| (i * 3 + j) as f64),
            DVector::zeros(10),
        )
        .unwrap();
        match scaled_lasso(&prob, 0.1, &ScaledLassoOptions::default()) {
            Err(Error::DegenerateResidual(fit)) => {
                assert!(fit.theta_hat.iter().all(|v| *v == 0.0));
                assert_eq!(fit.sigma_hat, 0.0);
            }
            other => panic!("expected DegenerateResidual, got {other:?}"),
        }
    }

    #[test]
    fn scaled_lasso_single_column_fixed_point() {
        // one column: θ = S(c, σλ)/g and σ² = ‖Y − Xθ‖²/n at the fixed point
        let mut rng = substream(9, 0);
        let x = DMatrix::from_fn(50, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &x * 2.0
            + DVector::from_fn(50, |_, _| 1e-3 * rng.sample::<f64, _>(StandardNormal));
        let prob = RegressionProblem::new(x.clone(), y.clone()).unwrap();
        let opts = ScaledLassoOptions {
            tol: 1e-12,
            ..Default::default()
        };
        let fit = scaled_lasso(&prob, 0.05, &opts).unwrap();
        let g = x.norm_squared() / 50.0;
        let c = x.tr_mul(&y)[0] / 50.0;
        let theta = soft_threshold(c, fit.sigma_hat * 0.05) / g;
        assert_abs_diff_eq!(fit.theta_hat[0], theta, epsilon = 1e-7);
        let resid = (&y - &x * theta).norm() / 50f64.sqrt();
        assert_abs_diff_eq!(fit.sigma_hat, resid, epsilon = 1e-8);
    }
}
