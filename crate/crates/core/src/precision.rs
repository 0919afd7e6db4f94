//! Precision-matrix estimates: the exact inverse covariance when it is known,
//! and the nodewise-regression estimator built from p Lasso regressions of
//! each column on the others.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lasso::{cross_validate, default_lambda_grid, GramView, LassoOptions};
use crate::sampler::substream;
use crate::types::{gram, materialize_covariance, CovarianceModel, RegressionProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecisionMethod {
    Oracle,
    Nodewise,
}

/// Result of regressing column `j` on the remaining columns.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFit {
    /// Coefficients on the other columns in their natural order (length p − 1).
    pub gamma: DVector<f64>,
    /// `(X_j − X_{−j}γ̂_j)ᵀ X_j / n`.
    pub tau_sq: f64,
    pub lambda: f64,
    pub max_kkt_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionEstimate {
    pub omega_hat: DMatrix<f64>,
    pub method: PrecisionMethod,
    /// Empty for the oracle.
    pub per_node: Vec<NodeFit>,
}

impl PrecisionEstimate {
    pub fn p(&self) -> usize {
        self.omega_hat.nrows()
    }

    /// Dense row-major CSV, one matrix row per line, no header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for row in self.omega_hat.row_iter() {
            w.write_record(row.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// How the penalty of each nodewise regression is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodewiseLambda {
    /// The same λ for every node.
    Fixed(f64),
    /// `√(2 log p / n)` for every node.
    Universal,
    /// Separate K-fold cross-validation for each node.
    CrossValidated { folds: usize, seed: u64 },
}

impl Default for NodewiseLambda {
    fn default() -> Self {
        Self::Universal
    }
}

/// `Ω̂ = T̂⁻² Ĉ` from nodewise Lasso regressions at a common `lambda_node`.
pub fn nodewise_precision(
    x: &DMatrix<f64>,
    lambda_node: f64,
    opts: &LassoOptions,
) -> Result<PrecisionEstimate> {
    nodewise_precision_with(x, NodewiseLambda::Fixed(lambda_node), opts)
}

pub fn nodewise_precision_with(
    x: &DMatrix<f64>,
    rule: NodewiseLambda,
    opts: &LassoOptions,
) -> Result<PrecisionEstimate> {
    let (n, p) = x.shape();
    if p < 2 {
        return Err(Error::InvalidInput(format!(
            "nodewise regression needs p >= 2, got {p}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInput("empty design".into()));
    }
    if let NodewiseLambda::Fixed(l) = rule {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda_node must be > 0, got {l}")));
        }
    }
    let g = gram(x);
    let nodes: Vec<NodeFit> = (0..p)
        .into_par_iter()
        .map(|j| {
            let lambda = match rule {
                NodewiseLambda::Fixed(l) => l,
                NodewiseLambda::Universal => (2.0 * (p as f64).ln() / n as f64).sqrt(),
                NodewiseLambda::CrossValidated { folds, seed } => {
                    node_cv_lambda(x, j, folds, seed, opts)?
                }
            };
            fit_node(&g, j, lambda, opts)
        })
        .collect::<Result<_>>()?;

    let mut omega_hat = DMatrix::zeros(p, p);
    for (j, node) in nodes.iter().enumerate() {
        let inv = 1.0 / node.tau_sq;
        omega_hat[(j, j)] = inv;
        for (k, &gk) in others(p, j).zip(node.gamma.iter()) {
            omega_hat[(j, k)] = -gk * inv;
        }
    }
    Ok(PrecisionEstimate {
        omega_hat,
        method: PrecisionMethod::Nodewise,
        per_node: nodes,
    })
}

fn others(p: usize, j: usize) -> impl Iterator<Item = usize> {
    (0..p).filter(move |&k| k != j)
}

fn fit_node(g: &DMatrix<f64>, j: usize, lambda: f64, opts: &LassoOptions) -> Result<NodeFit> {
    let p = g.nrows();
    let target = g.column(j).into_owned();
    let view = GramView {
        gram: g,
        xty: &target,
        yty: g[(j, j)],
        excluded: Some(j),
    };
    let fit = view.solve(lambda, opts, None, None)?;
    if !fit.converged {
        return Err(Error::MaxIterations(Box::new(fit)));
    }
    let tau_sq = g[(j, j)] - fit.theta_hat.dot(&target);
    if !(tau_sq > 0.0) {
        return Err(Error::DegenerateTau { column: j, tau_sq });
    }
    let gamma = DVector::from_iterator(p - 1, others(p, j).map(|k| fit.theta_hat[k]));
    Ok(NodeFit {
        gamma,
        tau_sq,
        lambda,
        max_kkt_violation: fit.max_kkt_violation,
    })
}

fn node_cv_lambda(
    x: &DMatrix<f64>,
    j: usize,
    folds: usize,
    seed: u64,
    opts: &LassoOptions,
) -> Result<f64> {
    let problem = RegressionProblem::new(x.clone().remove_column(j), x.column(j).into_owned())?;
    let grid = default_lambda_grid(&problem);
    let mut rng = substream(seed, j as u64);
    let cv = cross_validate(&problem, &grid, folds, opts, &mut rng)?;
    Ok(cv.lambda_cv.max(f64::MIN_POSITIVE))
}

/// The exact `Ω = Σ⁻¹` of a covariance model.
pub fn oracle_precision(cov: &CovarianceModel) -> Result<PrecisionEstimate> {
    Ok(PrecisionEstimate {
        omega_hat: materialize_covariance(cov)?.omega,
        method: PrecisionMethod::Oracle,
        per_node: Vec::new(),
    })
}

/// ℓ∞ operator norm of the difference: the largest row ℓ₁ norm.
pub fn precision_error_norm(omega_hat: &DMatrix<f64>, omega: &DMatrix<f64>) -> Result<f64> {
    if omega_hat.shape() != omega.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", omega.shape()),
            found: format!("{:?}", omega_hat.shape()),
        });
    }
    Ok((omega_hat - omega)
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{sample_design, substream};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn hadamard8() -> DMatrix<f64> {
        let mut h = DMatrix::from_element(1, 1, 1.0);
        while h.nrows() < 8 {
            let m = h.nrows();
            let mut next = DMatrix::zeros(2 * m, 2 * m);
            next.view_mut((0, 0), (m, m)).copy_from(&h);
            next.view_mut((0, m), (m, m)).copy_from(&h);
            next.view_mut((m, 0), (m, m)).copy_from(&h);
            next.view_mut((m, m), (m, m)).copy_from(&(-&h));
            h = next;
        }
        h
    }

    #[test]
    fn orthogonal_columns_give_diagonal_estimate() {
        let mut x = hadamard8();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col *= 1.0 + j as f64 * 0.1;
        }
        // columns remain orthogonal, XᵀX/n diagonal
        let est = nodewise_precision(&x, 0.1, &LassoOptions::default()).unwrap();
        for (j, node) in est.per_node.iter().enumerate() {
            assert!(node.gamma.iter().all(|v| *v == 0.0));
            assert_abs_diff_eq!(node.tau_sq, x.column(j).norm_squared() / 8.0, epsilon = 1e-12);
        }
        let want = DMatrix::from_fn(8, 8, |i, j| {
            if i == j {
                8.0 / x.column(j).norm_squared()
            } else {
                0.0
            }
        });
        assert_abs_diff_eq!(est.omega_hat, want, epsilon = 1e-12);
    }

    #[test]
    fn assembly_identities() {
        let cov = CovarianceModel::circulant(12, 3).unwrap();
        let x = sample_design(&cov, 40, &mut substream(1, 0)).unwrap();
        let est = nodewise_precision(&x, 0.1, &LassoOptions::default()).unwrap();
        assert_eq!(est.method, PrecisionMethod::Nodewise);
        let g = gram(&x);
        for (j, node) in est.per_node.iter().enumerate() {
            assert_abs_diff_eq!(est.omega_hat[(j, j)] * node.tau_sq, 1.0, epsilon = 1e-14);
            for (k, &gk) in others(12, j).zip(node.gamma.iter()) {
                assert_abs_diff_eq!(est.omega_hat[(j, k)], -gk / node.tau_sq, epsilon = 1e-14);
            }
            // KKT of the column regression computed on the raw data
            let xj = x.column(j);
            let xmj = x.clone().remove_column(j);
            let resid = xj - &xmj * &node.gamma;
            let corr = xmj.tr_mul(&resid) / 40.0;
            for (c, gk) in corr.iter().zip(node.gamma.iter()) {
                if *gk == 0.0 {
                    assert!(c.abs() <= 0.1 + 1e-6);
                } else {
                    assert!((c - 0.1 * gk.signum()).abs() <= 1e-6);
                }
            }
            let tau = resid.dot(&xj) / 40.0;
            assert_abs_diff_eq!(tau, node.tau_sq, epsilon = 1e-10);
            assert!(g[(j, j)] > 0.0);
        }
    }

    #[test]
    fn two_by_two_matches_inverse() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let cov = CovarianceModel::explicit(sigma).unwrap();
        let x = sample_design(&cov, 10_000, &mut substream(2, 0)).unwrap();
        let lam = (2.0 * 2f64.ln() / 10_000.0).sqrt();
        let est = nodewise_precision(&x, lam, &LassoOptions::default()).unwrap();
        let omega = DMatrix::from_row_slice(2, 2, &[4.0 / 3.0, -2.0 / 3.0, -2.0 / 3.0, 4.0 / 3.0]);
        assert!((&est.omega_hat - &omega).amax() < 0.05, "{}", est.omega_hat);
    }

    #[test]
    fn rejects_single_column() {
        assert!(nodewise_precision(&DMatrix::zeros(5, 1), 0.1, &LassoOptions::default()).is_err());
    }

    #[test]
    fn degenerate_tau_is_reported() {
        // zero column: τ² = 0
        let mut x = DMatrix::from_fn(6, 3, |i, j| (i * 3 + j) as f64 % 5.0 - 2.0);
        x.column_mut(1).fill(0.0);
        match nodewise_precision(&x, 0.1, &LassoOptions::default()) {
            Err(Error::DegenerateTau { column, .. }) => assert_eq!(column, 1),
            other => panic!("expected DegenerateTau, got {other:?}"),
        }
    }

    #[test]
    fn oracle_pass_through() {
        let id = oracle_precision(&CovarianceModel::identity(3).unwrap()).unwrap();
        assert_eq!(id.omega_hat, DMatrix::identity(3, 3));
        let cov = CovarianceModel::circulant(30, 5).unwrap();
        let est = oracle_precision(&cov).unwrap();
        assert_eq!(est.omega_hat, materialize_covariance(&cov).unwrap().omega);
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let est = oracle_precision(&CovarianceModel::explicit(sigma.clone()).unwrap()).unwrap();
        assert!((&est.omega_hat * sigma - DMatrix::<f64>::identity(2, 2)).amax() < 1e-8);
    }

    #[test]
    fn error_norm_cases() {
        let a = DMatrix::from_fn(3, 3, |i, j| (i + j) as f64);
        assert_eq!(precision_error_norm(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        b[(1, 2)] += 0.3;
        assert_abs_diff_eq!(precision_error_norm(&b, &a).unwrap(), 0.3, epsilon = 1e-15);
        assert!(precision_error_norm(&a, &DMatrix::zeros(2, 2)).is_err());

        let mut rng = substream(5, 0);
        let u: DMatrix<f64> = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let v: DMatrix<f64> = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let mut oracle: f64 = 0.0;
        for i in 0..3 {
            let mut row = 0.0_f64;
            for j in 0..3 {
                row += (u[(i, j)] - v[(i, j)]).abs();
            }
            oracle = oracle.max(row);
        }
        assert_abs_diff_eq!(precision_error_norm(&u, &v).unwrap(), oracle, epsilon = 1e-15);
    }

    #[test]
    fn identity_design_error_is_small() {
        let cov = CovarianceModel::identity(20).unwrap();
        let mut errs: Vec<f64> = (0..10)
            .map(|s| {
                let x = sample_design(&cov, 200, &mut substream(s, 0)).unwrap();
                let est =
                    nodewise_precision_with(&x, NodewiseLambda::Universal, &LassoOptions::default())
                        .unwrap();
                precision_error_norm(&est.omega_hat, &DMatrix::identity(20, 20)).unwrap()
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        assert!(errs[5] < 1.0, "{errs:?}");
    }

    #[test]
    fn cross_validated_nodes_run() {
        let cov = CovarianceModel::circulant(8, 2 + 1).unwrap();
        let x = sample_design(&cov, 60, &mut substream(6, 0)).unwrap();
        let rule = NodewiseLambda::CrossValidated { folds: 5, seed: 1 };
        let a = nodewise_precision_with(&x, rule, &LassoOptions::default()).unwrap();
        let b = nodewise_precision_with(&x, rule, &LassoOptions::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.per_node.iter().all(|n| n.lambda > 0.0));
    }

    #[test]
    fn csv_export_is_row_major() {
        let est = PrecisionEstimate {
            omega_hat: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
            method: PrecisionMethod::Oracle,
            per_node: vec![],
        };
        let mut buf = Vec::new();
        est.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "1e0,2e0\n3e0,4e0\n");
    }
}
