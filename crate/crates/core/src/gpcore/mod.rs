//! Gaussian-process machinery: correlation functions, the coregionalised
//! cross-covariance of the reduced field ω, and the nearest-neighbour (NNGP)
//! factorisation of its joint density.

mod coreg;
mod correlation;
mod nngp;

pub use coreg::{omega_cross_cov, reduce_a, symmetric_sqrt, Coregionalization};
pub use correlation::{expo_corr, CorrelationFunction, CorrelationRegistry, Exponential};
pub use nngp::{build_neighbor_sets, build_nngp_factor, nngp_logdensity, nngp_sample_prior, Conditional, NngpFactor};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Hyperparameters of the latent field: regression coefficients of ω
/// (stacked per category, `p` entries each), the K×K coregionalisation
/// covariance `Σ*`, and one decay per latent factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GPParams {
    pub beta: DVector<f64>,
    pub sigma_star: DMatrix<f64>,
    pub decays: Vec<f64>,
}

impl GPParams {
    pub fn new(beta: DVector<f64>, sigma_star: DMatrix<f64>, decays: Vec<f64>) -> Result<Self> {
        let p = GPParams { beta, sigma_star, decays };
        p.validate()?;
        Ok(p)
    }

    pub fn k(&self) -> usize {
        self.decays.len()
    }

    /// Number of covariates per category.
    pub fn p(&self) -> usize {
        self.beta.len() / (self.k() - 1)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.decays.len();
        if k < 2 {
            return Err(Error::invalid(format!("need at least 2 components, got {k}")));
        }
        if self.sigma_star.nrows() != k || self.sigma_star.ncols() != k {
            return Err(Error::Shape(format!(
                "Σ* is {}x{}, expected {k}x{k}",
                self.sigma_star.nrows(),
                self.sigma_star.ncols()
            )));
        }
        if self.beta.len() % (k - 1) != 0 {
            return Err(Error::Shape(format!("β has {} entries, not a multiple of K-1 = {}", self.beta.len(), k - 1)));
        }
        if let Some(d) = self.decays.iter().find(|d| !(**d > 0.0) || !d.is_finite()) {
            return Err(Error::invalid(format!("decays must be positive, got {d}")));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("β has non-finite entries"));
        }
        let s = &self.sigma_star;
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("Σ* has non-finite entries"));
        }
        if (s - s.transpose()).abs().max() > 1e-10 * s.abs().max() {
            return Err(Error::invalid("Σ* is not symmetric"));
        }
        let eig = SymmetricEigen::new(s.clone()).eigenvalues;
        let max = eig.max();
        if !(eig.min() > 1e-12 * max) {
            return Err(Error::invalid("Σ* is not positive definite"));
        }
        Ok(())
    }

    /// Mean of ω: row `t` is `(I ⊗ X_t) β`.
    pub fn omega_mean(&self, design: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let p = design.ncols();
        let d = self.k() - 1;
        if p * d != self.beta.len() {
            return Err(Error::Shape(format!("design has {p} columns but β expects {}", self.p())));
        }
        Ok(DMatrix::from_fn(design.nrows(), d, |t, k| {
            (0..p).map(|j| design[(t, j)] * self.beta[k * p + j]).sum()
        }))
    }
}
