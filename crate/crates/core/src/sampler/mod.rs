//! MCMC for the logistic-normal GP mixture.
//!
//! One iteration updates, in order: missing coordinates, labels, mixture
//! parameters, the ω field (Pólya-Gamma augmented, NNGP prior) and the GP
//! hyperparameter block (adaptive random-walk Metropolis).

mod chain;
mod hyper;
mod init;
mod labels;
mod missing;
mod mixture;
mod omega;
mod prior;

pub use chain::{run_chain, AcceptanceRecord, Draw, SampleStore, Sampler};
pub use hyper::{update_gp_hyper, AdaptiveProposal, HyperBlock, ThetaMap};
pub use init::kmeans;
pub(crate) use labels::component_densities;
pub use labels::update_labels;
pub use missing::{update_missing, Imputation};
pub use mixture::update_mixture;
pub use omega::{update_omega_field, LatentField};
pub use prior::{draw_prior_state, simulate_increments, PriorState};
pub(crate) use prior::sample_labels;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{Mat2, Vec2};
use crate::trajectory::decompose_coords;

/// Component means `ξ_k` and covariances `Ω_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    pub xi: Vec<Vec2>,
    pub omega_cov: Vec<Mat2>,
}

impl MixtureParams {
    pub fn new(xi: Vec<Vec2>, omega_cov: Vec<Mat2>) -> Result<Self> {
        if xi.len() != omega_cov.len() {
            return Err(Error::Shape(format!("{} means but {} covariances", xi.len(), omega_cov.len())));
        }
        for (k, c) in omega_cov.iter().enumerate() {
            if !is_spd2(c) {
                return Err(Error::invalid(format!("Ω_{} is not positive definite", k + 1)));
            }
        }
        Ok(MixtureParams { xi, omega_cov })
    }

    pub fn k(&self) -> usize {
        self.xi.len()
    }

    /// Reorder components: new component `j` is old component `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> MixtureParams {
        MixtureParams {
            xi: perm.iter().map(|&p| self.xi[p]).collect(),
            omega_cov: perm.iter().map(|&p| self.omega_cov[p]).collect(),
        }
    }
}

pub(crate) fn is_spd2(c: &Mat2) -> bool {
    let det = c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(1, 0)];
    c[(0, 0)] > 0.0 && det > 0.0 && (c[(0, 1)] - c[(1, 0)]).abs() <= 1e-10 * c.abs().max()
}

/// Prior hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Priors {
    pub xi_mean: Vec2,
    pub xi_cov: Mat2,
    pub omega_iw_df: f64,
    pub omega_iw_scale: Mat2,
    pub decay_lower: f64,
    pub decay_upper: f64,
    pub beta_mean: f64,
    pub beta_var: f64,
    pub sigma_star_iw_df: f64,
    pub sigma_star_iw_scale: DMatrix<f64>,
}

impl Priors {
    /// `ξ ~ N(0, 100 I)`, `Ω ~ IW(3, I)`, `φ ~ U(0.3, 6)`, `β ~ N(0, 100)`, `Σ* ~ IW(K+1, I)`.
    pub fn paper_default(k: usize) -> Self {
        Priors {
            xi_mean: Vec2::zeros(),
            xi_cov: Mat2::identity() * 100.0,
            omega_iw_df: 3.0,
            omega_iw_scale: Mat2::identity(),
            decay_lower: 0.3,
            decay_upper: 6.0,
            beta_mean: 0.0,
            beta_var: 100.0,
            sigma_star_iw_df: k as f64 + 1.0,
            sigma_star_iw_scale: DMatrix::identity(k, k),
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if !is_spd2(&self.xi_cov) {
            return Err(Error::invalid("prior covariance of ξ is not positive definite"));
        }
        if !(self.omega_iw_df > 1.0) {
            return Err(Error::invalid(format!("Ω prior degrees of freedom must exceed 1, got {}", self.omega_iw_df)));
        }
        if !is_spd2(&self.omega_iw_scale) {
            return Err(Error::invalid("Ω prior scale is not positive definite"));
        }
        if !(self.decay_lower > 0.0 && self.decay_lower < self.decay_upper && self.decay_upper.is_finite()) {
            return Err(Error::invalid(format!(
                "decay bounds must satisfy 0 < lower < upper, got ({}, {})",
                self.decay_lower, self.decay_upper
            )));
        }
        if !(self.beta_var > 0.0) || !self.beta_mean.is_finite() {
            return Err(Error::invalid("β prior needs a finite mean and positive variance"));
        }
        if !(self.sigma_star_iw_df > k as f64 - 1.0) {
            return Err(Error::invalid(format!(
                "Σ* prior degrees of freedom must exceed K-1 = {}, got {}",
                k - 1,
                self.sigma_star_iw_df
            )));
        }
        let s = &self.sigma_star_iw_scale;
        if s.nrows() != k || s.ncols() != k {
            return Err(Error::Shape(format!("Σ* prior scale is {}x{}, expected {k}x{k}", s.nrows(), s.ncols())));
        }
        if nalgebra::Cholesky::new(s.clone()).is_none() || (s - s.transpose()).abs().max() > 1e-10 * s.abs().max() {
            return Err(Error::invalid("Σ* prior scale is not symmetric positive definite"));
        }
        Ok(())
    }
}

/// Run-length, adaptation and bookkeeping settings of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub k: usize,
    pub m: usize,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub adapt_target: f64,
    pub adapt_decay: f64,
    /// Adapt proposals during burnin; when false they keep their initial scale.
    pub adapt: bool,
    /// Initial random-walk standard deviation per coordinate of θ.
    pub proposal_sd: f64,
    /// Keep the probability field of every retained draw.
    pub keep_prob_fields: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            k: 3,
            m: 10,
            iters: 1_000_000,
            burnin: 70_000,
            thin: 6,
            seed: 1,
            adapt_target: 0.234,
            adapt_decay: 0.6,
            adapt: true,
            proposal_sd: 0.1,
            keep_prob_fields: true,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::invalid(format!("K must be at least 2, got {}", self.k)));
        }
        if self.k > 12 {
            return Err(Error::invalid(format!("K = {} is above the supported maximum of 12", self.k)));
        }
        if self.m < 1 {
            return Err(Error::invalid("m must be at least 1"));
        }
        if self.thin < 1 {
            return Err(Error::invalid("thin must be at least 1"));
        }
        if self.burnin >= self.iters {
            return Err(Error::invalid(format!("burnin ({}) must be below iters ({})", self.burnin, self.iters)));
        }
        if !(self.adapt_target > 0.0 && self.adapt_target < 1.0) {
            return Err(Error::invalid("adapt_target must lie in (0, 1)"));
        }
        if !(self.adapt_decay > 0.5 && self.adapt_decay <= 1.0) {
            return Err(Error::invalid("adapt_decay must lie in (0.5, 1]"));
        }
        if !(self.proposal_sd >= 0.0) || !self.proposal_sd.is_finite() {
            return Err(Error::invalid("proposal_sd must be finite and nonnegative"));
        }
        Ok(())
    }

    /// `floor((iters - burnin) / thin)`.
    pub fn retained(&self) -> usize {
        (self.iters - self.burnin) / self.thin
    }
}

/// Observations seen by the sampler: increments at `n` time points, their
/// model times and covariate rows, and (when some are missing) the grid
/// coordinates they derive from.
#[derive(Debug, Clone)]
pub struct ModelData {
    y: Vec<Option<Vec2>>,
    coords: Option<Vec<Option<Vec2>>>,
    times: Vec<f64>,
    design: DMatrix<f64>,
}

impl ModelData {
    /// Fully observed increments.
    pub fn from_increments(y: Vec<Vec2>, times: Vec<f64>, design: DMatrix<f64>) -> Result<Self> {
        let data = ModelData { y: y.into_iter().map(Some).collect(), coords: None, times, design };
        data.check()?;
        Ok(data)
    }

    /// Grid coordinates (possibly with gaps); increment `i` sits at `times[i]`.
    /// The first two and the last coordinates must be observed.
    pub fn from_coords(coords: Vec<Option<Vec2>>, times: Vec<f64>, design: DMatrix<f64>) -> Result<Self> {
        if coords.len() < 3 {
            return Err(Error::invalid("need at least 3 grid coordinates"));
        }
        if coords[0].is_none() || coords[1].is_none() {
            return Err(Error::invalid("the first two grid coordinates must be observed"));
        }
        if coords.last().unwrap().is_none() {
            return Err(Error::invalid("the last grid coordinate must be observed"));
        }
        let y = decompose_coords(&coords).y;
        let any_missing = coords.iter().any(|c| c.is_none());
        let data = ModelData { y, coords: any_missing.then_some(coords), times, design };
        data.check()?;
        Ok(data)
    }

    fn check(&self) -> Result<()> {
        let n = self.y.len();
        if n == 0 {
            return Err(Error::invalid("no increments"));
        }
        if self.times.len() != n {
            return Err(Error::Shape(format!("{} times for {n} increments", self.times.len())));
        }
        if self.design.nrows() != n {
            return Err(Error::Shape(format!("design has {} rows for {n} increments", self.design.nrows())));
        }
        if self.design.ncols() == 0 {
            return Err(Error::Shape("design has no columns".into()));
        }
        if self.design.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("design has non-finite entries"));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("times must be strictly increasing"));
        }
        if self.y.iter().flatten().any(|v| !v.iter().all(|x| x.is_finite())) {
            return Err(Error::invalid("increments have non-finite entries"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[Option<Vec2>] {
        &self.y
    }

    pub fn coords(&self) -> Option<&[Option<Vec2>]> {
        self.coords.as_deref()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    /// Number of increments that are observed (not imputed).
    pub fn observed_count(&self) -> usize {
        self.y.iter().filter(|v| v.is_some()).count()
    }

    pub fn observed_mask(&self) -> Vec<bool> {
        self.y.iter().map(|v| v.is_some()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let ok = ChainConfig { iters: 100, burnin: 10, ..Default::default() };
        assert!(ok.validate().is_ok());
        assert_eq!(ok.retained(), 15);
        assert!(ChainConfig { k: 1, ..ok.clone() }.validate().is_err());
        assert!(ChainConfig { m: 0, ..ok.clone() }.validate().is_err());
        assert!(ChainConfig { thin: 0, ..ok.clone() }.validate().is_err());
        assert!(ChainConfig { burnin: 100, ..ok.clone() }.validate().is_err());
    }

    #[test]
    fn prior_validation() {
        let p = Priors::paper_default(3);
        assert!(p.validate(3).is_ok());
        assert!(p.validate(2).is_err());
        assert!(Priors { decay_lower: 6.0, ..p.clone() }.validate(3).is_err());
        assert!(Priors { sigma_star_iw_df: 1.5, ..p.clone() }.validate(3).is_err());
        assert!(Priors { omega_iw_df: 1.0, ..p }.validate(3).is_err());
    }

    #[test]
    fn model_data_shapes() {
        let design = DMatrix::from_element(3, 1, 1.0);
        let y = vec![Vec2::new(1.0, 0.0); 3];
        assert!(ModelData::from_increments(y.clone(), vec![0.0, 1.0, 2.0], design.clone()).is_ok());
        assert!(ModelData::from_increments(y.clone(), vec![0.0, 1.0], design.clone()).is_err());
        assert!(ModelData::from_increments(y, vec![0.0, 2.0, 1.0], design.clone()).is_err());

        let coords = vec![
            Some(Vec2::new(0.0, 0.0)),
            Some(Vec2::new(1.0, 0.0)),
            None,
            Some(Vec2::new(3.0, 0.0)),
            Some(Vec2::new(4.0, 0.0)),
        ];
        let d = ModelData::from_coords(coords.clone(), vec![0.0, 1.0, 2.0], design.clone()).unwrap();
        // Every increment depends on s_2, directly or through a bearing.
        assert_eq!(d.observed_count(), 0);
        assert!(d.coords().is_some());
        let long: Vec<Option<Vec2>> =
            (0..8).map(|i| if i == 4 { None } else { Some(Vec2::new(i as f64, (i % 2) as f64)) }).collect();
        let times: Vec<f64> = (0..6).map(f64::from).collect();
        let d = ModelData::from_coords(long, times, DMatrix::from_element(6, 1, 1.0)).unwrap();
        assert_eq!(d.observed_mask(), vec![true, true, false, false, false, true]);
        let mut lead = coords;
        lead[1] = None;
        assert!(ModelData::from_coords(lead, vec![0.0, 1.0, 2.0], design).is_err());
    }
}
