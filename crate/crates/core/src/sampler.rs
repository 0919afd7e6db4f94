//! Synthetic data: Gaussian designs with a prescribed covariance, sparse
//! coefficient vectors and Gaussian noise.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    materialize_covariance, CovarianceMatrices, CovarianceModel, GroundTruth, RegressionProblem,
};

/// Parameters of one Monte-Carlo study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub p: usize,
    pub s0: usize,
    pub theta_value: f64,
    pub sigma: f64,
    pub cov: CovarianceModel,
    pub alpha: f64,
    pub replications: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    /// The simulation setup with `n = 240`, `p = 300`, `s0 = 30`,
    /// `θ = 0.1`, `σ = 1`, `α = 0.05`, 20 replications and a circulant
    /// precision of bandwidth `b`.
    pub fn reference(b: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            n: 240,
            p: 300,
            s0: 30,
            theta_value: 0.1,
            sigma: 1.0,
            cov: CovarianceModel::circulant(300, b)?,
            alpha: 0.05,
            replications: 20,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n == 0 || self.p == 0 {
            return fail(format!("n and p must be >= 1 (n = {}, p = {})", self.n, self.p));
        }
        if self.s0 > self.p {
            return fail(format!("s0 = {} exceeds p = {}", self.s0, self.p));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return fail(format!("sigma must be > 0, got {}", self.sigma));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !self.theta_value.is_finite() {
            return fail("theta_value must be finite".into());
        }
        if self.replications == 0 {
            return fail("replications must be >= 1".into());
        }
        if self.cov.p() != self.p {
            return fail(format!(
                "covariance dimension {} does not match p = {}",
                self.cov.p(),
                self.p
            ));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}

/// Independent generator for replication `index` of a study seeded with
/// `seed`. Each replication gets its own ChaCha stream.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Stream reserved for draws shared by every replication of a study.
pub const SHARED_STREAM: u64 = u64::MAX;

/// Row sampler for `N(0, Σ)` built from the lower Cholesky factor of `Σ`.
#[derive(Debug, Clone)]
pub struct GaussianDesign {
    /// Transposed lower factor, `None` for the identity.
    factor_t: Option<DMatrix<f64>>,
    p: usize,
}

impl GaussianDesign {
    pub fn new(sigma: &DMatrix<f64>) -> Result<Self> {
        let p = sigma.nrows();
        if sigma == &DMatrix::identity(p, p) {
            return Ok(Self { factor_t: None, p });
        }
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite {
                min_eigenvalue: crate::types::min_eigenvalue(sigma),
            })?;
        Ok(Self {
            factor_t: Some(chol.l().transpose()),
            p,
        })
    }

    pub fn from_matrices(cov: &CovarianceMatrices) -> Result<Self> {
        Self::new(&cov.sigma)
    }

    /// `n` independent rows `L g` with `g` standard normal.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let g = DMatrix::from_row_iterator(
            n,
            self.p,
            (0..n * self.p).map(|_| rng.sample::<f64, _>(StandardNormal)),
        );
        match &self.factor_t {
            None => g,
            Some(lt) => g * lt,
        }
    }
}

pub fn sample_design<R: Rng + ?Sized>(
    cov: &CovarianceModel,
    n: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let mats = materialize_covariance(cov)?;
    Ok(GaussianDesign::from_matrices(&mats)?.sample(n, rng))
}

/// Coefficient vector equal to `theta_value` on a uniformly drawn support
/// of size `s0` and zero elsewhere.
pub fn sample_theta0<R: Rng + ?Sized>(
    p: usize,
    s0: usize,
    theta_value: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<GroundTruth> {
    if s0 > p {
        return Err(Error::InvalidInput(format!("s0 = {s0} exceeds p = {p}")));
    }
    let mut theta0 = DVector::zeros(p);
    for i in rand::seq::index::sample(rng, p, s0) {
        theta0[i] = theta_value;
    }
    GroundTruth::new(theta0, sigma)
}

/// `Y = Xθ₀ + W` with `W ~ N(0, σ² I)`.
pub fn sample_response<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    truth: &GroundTruth,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if x.ncols() != truth.p() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} columns", truth.p()),
            found: format!("{} columns", x.ncols()),
        });
    }
    let sigma = truth.sigma();
    let mut y = x * truth.theta0();
    for v in y.iter_mut() {
        *v += sigma * rng.sample::<f64, _>(StandardNormal);
    }
    Ok(y)
}

/// One simulated dataset with the parameters that generated it.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub problem: RegressionProblem,
    pub truth: GroundTruth,
}

/// Draws replication `index` of a study. With `resample_theta` the support is
/// drawn from the replication's own stream; otherwise every replication shares
/// the support drawn from [`SHARED_STREAM`].
pub fn generate_dataset(
    config: &ExperimentConfig,
    design: &GaussianDesign,
    index: u64,
    resample_theta: bool,
) -> Result<SyntheticDataset> {
    let mut rng = substream(config.seed, index);
    let x = design.sample(config.n, &mut rng);
    let truth = if resample_theta {
        sample_theta0(config.p, config.s0, config.theta_value, config.sigma, &mut rng)?
    } else {
        let mut shared = substream(config.seed, SHARED_STREAM);
        sample_theta0(config.p, config.s0, config.theta_value, config.sigma, &mut shared)?
    };
    let y = sample_response(&x, &truth, &mut rng)?;
    Ok(SyntheticDataset {
        problem: RegressionProblem::new(x, y)?,
        truth,
    })
}
