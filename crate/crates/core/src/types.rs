//! Shared containers: the regression problem, the simulation ground truth and
//! the population covariance models used to generate designs.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A design matrix `x` (n × p) together with its response `y` (length n).
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl RegressionProblem {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "design must be non-empty, got {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        if y.len() != x.nrows() {
            return Err(Error::ShapeMismatch {
                expected: format!("response of length {}", x.nrows()),
                found: format!("length {}", y.len()),
            });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite entry in X or Y".into()));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Sample count.
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Parameter count.
    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Returns a copy whose columns have unit empirical second moment
    /// (`‖X_j‖² / n = 1`), together with the scale applied to each column.
    /// Zero columns are left untouched with scale 1.
    ///
    /// Nothing in the pipeline calls this implicitly.
    pub fn standardized(&self) -> (RegressionProblem, DVector<f64>) {
        let n = self.n() as f64;
        let mut x = self.x.clone();
        let mut scales = DVector::from_element(self.p(), 1.0);
        for (j, mut col) in x.column_iter_mut().enumerate() {
            let norm = (col.norm_squared() / n).sqrt();
            if norm > 0.0 {
                col /= norm;
                scales[j] = norm;
            }
        }
        (
            RegressionProblem {
                x,
                y: self.y.clone(),
            },
            scales,
        )
    }
}

/// The parameter vector used to generate a dataset, with its support and
/// noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    theta0: DVector<f64>,
    support: Vec<usize>,
    sigma: f64,
}

impl GroundTruth {
    pub fn new(theta0: DVector<f64>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("sigma must be > 0, got {sigma}")));
        }
        if theta0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite entry in theta0".into()));
        }
        let support = theta0
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        Ok(Self {
            theta0,
            support,
            sigma,
        })
    }

    pub fn theta0(&self) -> &DVector<f64> {
        &self.theta0
    }

    /// Sorted indices of the nonzero coefficients.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn s0(&self) -> usize {
        self.support.len()
    }

    pub fn p(&self) -> usize {
        self.theta0.len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Membership mask for the support.
    pub fn support_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.p()];
        for &i in &self.support {
            mask[i] = true;
        }
        mask
    }
}

/// Population covariance of the design rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CovarianceSpec", into = "CovarianceSpec")]
pub enum CovarianceModel {
    Identity { p: usize },
    /// Banded circulant precision: `Ω_ii = 1`, `Ω_jk = a` when the circular
    /// distance between `j` and `k` is at most `b`, zero elsewhere.
    CirculantPrecision { p: usize, b: usize, a: f64 },
    Explicit { sigma: DMatrix<f64> },
}

impl CovarianceModel {
    pub fn identity(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidInput("dimension must be >= 1".into()));
        }
        Ok(Self::Identity { p })
    }

    /// Circulant precision with the off-diagonal value `a = 1 / b`.
    pub fn circulant(p: usize, b: usize) -> Result<Self> {
        if b == 0 {
            return Err(Error::InvalidInput("bandwidth must be >= 1".into()));
        }
        Self::circulant_with(p, b, 1.0 / b as f64)
    }

    fn circulant_with(p: usize, b: usize, a: f64) -> Result<Self> {
        if b == 0 || 2 * b >= p {
            return Err(Error::InvalidInput(format!(
                "circulant bandwidth must satisfy 1 <= b < p/2 (b = {b}, p = {p})"
            )));
        }
        if (a - 1.0 / b as f64).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "circulant off-diagonal must equal 1/b = {}, got {a}",
                1.0 / b as f64
            )));
        }
        let min_eig = circulant_eigenvalues(p, b, a)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min_eig <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: min_eig,
            });
        }
        Ok(Self::CirculantPrecision { p, b, a })
    }

    pub fn explicit(sigma: DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() || sigma.nrows() == 0 {
            return Err(Error::ShapeMismatch {
                expected: "non-empty square matrix".into(),
                found: format!("{}x{}", sigma.nrows(), sigma.ncols()),
            });
        }
        let asym = (&sigma - sigma.transpose()).amax();
        if asym > 1e-12 * sigma.amax().max(1.0) {
            return Err(Error::InvalidInput(format!(
                "explicit covariance is not symmetric (max asymmetry {asym:e})"
            )));
        }
        if sigma.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: min_eigenvalue(&sigma),
            });
        }
        Ok(Self::Explicit { sigma })
    }

    pub fn p(&self) -> usize {
        match self {
            Self::Identity { p } | Self::CirculantPrecision { p, .. } => *p,
            Self::Explicit { sigma } => sigma.nrows(),
        }
    }
}

/// Eigenvalues of the banded circulant precision from its symbol,
/// `λ_k = 1 + 2a Σ_{d=1..b} cos(2πkd/p)`, for `k = 0..p`.
pub fn circulant_eigenvalues(p: usize, b: usize, a: f64) -> Vec<f64> {
    (0..p)
        .map(|k| {
            let s: f64 = (1..=b)
                .map(|d| (2.0 * std::f64::consts::PI * (k * d) as f64 / p as f64).cos())
                .sum();
            1.0 + 2.0 * a * s
        })
        .collect()
}

/// Serialized form of [`CovarianceModel`] as it appears in config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum CovarianceSpec {
    Identity {
        p: usize,
    },
    CirculantPrecision {
        p: usize,
        b: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a: Option<f64>,
    },
    Explicit {
        sigma: Vec<Vec<f64>>,
    },
}

impl TryFrom<CovarianceSpec> for CovarianceModel {
    type Error = Error;

    fn try_from(spec: CovarianceSpec) -> Result<Self> {
        match spec {
            CovarianceSpec::Identity { p } => CovarianceModel::identity(p),
            CovarianceSpec::CirculantPrecision { p, b, a } => {
                if b == 0 {
                    return Err(Error::InvalidInput("bandwidth must be >= 1".into()));
                }
                CovarianceModel::circulant_with(p, b, a.unwrap_or(1.0 / b as f64))
            }
            CovarianceSpec::Explicit { sigma } => {
                let p = sigma.len();
                if sigma.iter().any(|row| row.len() != p) {
                    return Err(Error::ShapeMismatch {
                        expected: format!("{p} columns in every row"),
                        found: "ragged rows".into(),
                    });
                }
                let m = DMatrix::from_fn(p, p, |i, j| sigma[i][j]);
                CovarianceModel::explicit(m)
            }
        }
    }
}

impl From<CovarianceModel> for CovarianceSpec {
    fn from(model: CovarianceModel) -> Self {
        match model {
            CovarianceModel::Identity { p } => CovarianceSpec::Identity { p },
            CovarianceModel::CirculantPrecision { p, b, a } => {
                CovarianceSpec::CirculantPrecision { p, b, a: Some(a) }
            }
            CovarianceModel::Explicit { sigma } => CovarianceSpec::Explicit {
                sigma: sigma
                    .row_iter()
                    .map(|r| r.iter().copied().collect())
                    .collect(),
            },
        }
    }
}

/// Population covariance `sigma` and its inverse `omega`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrices {
    pub sigma: DMatrix<f64>,
    pub omega: DMatrix<f64>,
}

pub fn materialize_covariance(model: &CovarianceModel) -> Result<CovarianceMatrices> {
    match model {
        CovarianceModel::Identity { p } => Ok(CovarianceMatrices {
            sigma: DMatrix::identity(*p, *p),
            omega: DMatrix::identity(*p, *p),
        }),
        CovarianceModel::CirculantPrecision { p, b, a } => {
            let (p, b, a) = (*p, *b, *a);
            let omega = DMatrix::from_fn(p, p, |j, k| {
                let d = j.abs_diff(k);
                let circ = d.min(p - d);
                if circ == 0 {
                    1.0
                } else if circ <= b {
                    a
                } else {
                    0.0
                }
            });
            let sigma = spd_inverse(&omega)?;
            Ok(CovarianceMatrices { sigma, omega })
        }
        CovarianceModel::Explicit { sigma } => {
            let omega = spd_inverse(sigma)?;
            Ok(CovarianceMatrices {
                sigma: sigma.clone(),
                omega,
            })
        }
    }
}

/// Inverse of a symmetric positive definite matrix via Cholesky, symmetrized.
pub(crate) fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = m.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite {
        min_eigenvalue: min_eigenvalue(m),
    })?;
    Ok(symmetrize(chol.inverse()))
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m.clone()))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `Σ̂ = XᵀX / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCovariance {
    sigma_hat: DMatrix<f64>,
}

impl EmpiricalCovariance {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.sigma_hat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.sigma_hat
    }
}

pub fn empirical_covariance(problem: &RegressionProblem) -> EmpiricalCovariance {
    EmpiricalCovariance {
        sigma_hat: gram(problem.x()),
    }
}

/// Symmetrized `XᵀX / n` for any design.
pub(crate) fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    symmetrize(x.tr_mul(x) / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(x: DMatrix<f64>) -> RegressionProblem {
        let n = x.nrows();
        RegressionProblem::new(x, DVector::zeros(n)).unwrap()
    }

    #[test]
    fn rejects_bad_problems() {
        assert!(RegressionProblem::new(DMatrix::zeros(3, 2), DVector::zeros(2)).is_err());
        let mut x = DMatrix::zeros(2, 2);
        x[(0, 1)] = f64::NAN;
        assert!(RegressionProblem::new(x, DVector::zeros(2)).is_err());
        assert!(RegressionProblem::new(DMatrix::zeros(0, 2), DVector::zeros(0)).is_err());
    }

    #[test]
    fn scaled_identity_gives_identity_covariance() {
        let x = DMatrix::identity(2, 2) * 2f64.sqrt();
        let s = empirical_covariance(&problem(x));
        assert_abs_diff_eq!(s.matrix(), &DMatrix::identity(2, 2), epsilon = 1e-15);
    }

    #[test]
    fn zero_design_gives_zero_covariance() {
        let s = empirical_covariance(&problem(DMatrix::zeros(4, 3)));
        assert_eq!(s.matrix(), &DMatrix::zeros(3, 3));
    }

    #[test]
    fn covariance_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-2.0..2.0));
        let s = empirical_covariance(&problem(x.clone()));
        for j in 0..3 {
            for k in 0..3 {
                let mut acc = 0.0;
                for i in 0..5 {
                    acc += x[(i, j)] * x[(i, k)];
                }
                assert_abs_diff_eq!(s.matrix()[(j, k)], acc / 5.0, epsilon = 1e-12);
            }
        }
        assert_eq!(s.matrix(), &s.matrix().transpose());
    }

    #[test]
    fn identity_model_materializes_to_identity() {
        let m = materialize_covariance(&CovarianceModel::identity(4).unwrap()).unwrap();
        assert_eq!(m.sigma, DMatrix::identity(4, 4));
        assert_eq!(m.omega, DMatrix::identity(4, 4));
    }

    #[test]
    fn circulant_b5_is_well_conditioned() {
        let model = CovarianceModel::circulant(300, 5).unwrap();
        let m = materialize_covariance(&model).unwrap();
        // smallest value of the circulant symbol 1 + 0.4 Σ_{d≤5} cos(2πkd/300)
        assert_abs_diff_eq!(min_eigenvalue(&m.omega), 0.308_537_356_006_652_66, epsilon = 1e-10);
        let resid = (&m.sigma * &m.omega - DMatrix::<f64>::identity(300, 300)).amax();
        assert!(resid < 1e-8, "{resid}");
    }

    #[test]
    fn circulant_symbol_matches_dense_eigenvalues() {
        for (p, b) in [(300, 5), (40, 7), (31, 15)] {
            let model = CovarianceModel::circulant(p, b).unwrap();
            let m = materialize_covariance(&model).unwrap();
            let mut dense: Vec<f64> = SymmetricEigen::new(m.omega.clone())
                .eigenvalues
                .iter()
                .copied()
                .collect();
            let mut symbol = circulant_eigenvalues(p, b, 1.0 / b as f64);
            dense.sort_by(f64::total_cmp);
            symbol.sort_by(f64::total_cmp);
            for (d, s) in dense.iter().zip(&symbol) {
                assert_abs_diff_eq!(d, s, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn circulant_b100_row_sums() {
        let model = CovarianceModel::circulant(300, 100).unwrap();
        let CovarianceModel::CirculantPrecision { a, .. } = model else {
            unreachable!()
        };
        assert_eq!(a, 0.01);
        let m = materialize_covariance(&model).unwrap();
        assert_eq!(m.omega, m.omega.transpose());
        for row in m.omega.row_iter() {
            assert_abs_diff_eq!(row.sum(), 3.0, epsilon = 1e-12);
        }
        let resid = (&m.sigma * &m.omega - DMatrix::<f64>::identity(300, 300)).amax();
        assert!(resid < 1e-8);
    }

    #[test]
    fn circulant_conditioning_across_bandwidths() {
        // a = 1/b keeps Ω positive definite for b >= 3; σ_min(Ω) > 0.5 from b = 25 on
        let min_symbol = |b| {
            circulant_eigenvalues(300, b, 1.0 / b as f64)
                .into_iter()
                .fold(f64::INFINITY, f64::min)
        };
        for b in [3, 4, 5, 10] {
            assert!(min_symbol(b) > 0.0);
        }
        for b in [25, 50, 75, 100] {
            assert!(min_symbol(b) > 0.5, "b = {b}");
        }
        assert!(matches!(
            CovarianceModel::circulant(300, 2),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn circulant_rejects_wide_band() {
        assert!(CovarianceModel::circulant(10, 5).is_err());
        assert!(CovarianceModel::circulant(10, 0).is_err());
    }

    #[test]
    fn explicit_model_round_trips_inverse() {
        let sigma = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, 0.2, 0.1, 0.2, 1.5]);
        let m = materialize_covariance(&CovarianceModel::explicit(sigma.clone()).unwrap()).unwrap();
        assert!((&m.omega * &sigma - DMatrix::<f64>::identity(3, 3)).amax() < 1e-8);
        let not_pd = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            CovarianceModel::explicit(not_pd),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn covariance_spec_parses_from_toml() {
        let m: CovarianceModel = toml::from_str("kind = \"circulant_precision\"\np = 300\nb = 25").unwrap();
        assert_eq!(m, CovarianceModel::circulant(300, 25).unwrap());
        let bad: std::result::Result<CovarianceModel, _> =
            toml::from_str("kind = \"circulant_precision\"\np = 300\nb = 25\na = 0.5");
        assert!(bad.is_err());
    }

    #[test]
    fn standardized_columns_have_unit_second_moment() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 0.0, 3.0, 0.0]);
        let (std, scales) = problem(x).standardized();
        assert_abs_diff_eq!(std.x().column(0).norm_squared() / 3.0, 1.0, epsilon = 1e-14);
        assert_eq!(scales[1], 1.0);
    }
}
