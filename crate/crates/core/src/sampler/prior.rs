use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::{MixtureParams, Priors};
use crate::error::{Error, Result};
use crate::gpcore::{build_nngp_factor, nngp_sample_prior, Coregionalization, CorrelationFunction, GPParams};
use crate::linalg::{dmatrix_to_mat2, mat2_to_dmatrix, sample_inverse_wishart, Gaussian2, Vec2};
use crate::logitn::ProbField;

/// A joint draw of parameters, latent field, labels and increments.
#[derive(Debug, Clone)]
pub struct PriorState {
    pub mixture: MixtureParams,
    pub gp: GPParams,
    pub omega: DMatrix<f64>,
    pub z: Vec<usize>,
    pub y: Vec<Vec2>,
}

pub(crate) fn sample_labels<R: Rng + ?Sized>(prob: &ProbField, rng: &mut R) -> Vec<usize> {
    (0..prob.len())
        .map(|t| {
            let mut u = rng.random::<f64>();
            for j in 0..prob.k() {
                let p = prob.get(t, j);
                if u < p {
                    return j;
                }
                u -= p;
            }
            (0..prob.k()).rev().find(|&j| prob.get(t, j) > 0.0).unwrap_or(0)
        })
        .collect()
}

/// `y_t ~ N(ξ_{z_t}, Ω_{z_t})`.
pub fn simulate_increments<R: Rng + ?Sized>(mixture: &MixtureParams, z: &[usize], rng: &mut R) -> Result<Vec<Vec2>> {
    let dens: Vec<Gaussian2> = mixture
        .xi
        .iter()
        .zip(&mixture.omega_cov)
        .map(|(m, c)| Gaussian2::new(*m, *c))
        .collect::<Result<_>>()?;
    z.iter()
        .map(|&k| dens.get(k).map(|d| d.sample(rng)).ok_or_else(|| Error::invalid(format!("label {k} out of range"))))
        .collect()
}

pub(crate) fn draw_mixture_prior<R: Rng + ?Sized>(k: usize, priors: &Priors, rng: &mut R) -> Result<MixtureParams> {
    let g = Gaussian2::new(priors.xi_mean, priors.xi_cov)?;
    let scale = mat2_to_dmatrix(&priors.omega_iw_scale);
    let mut xi = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    for _ in 0..k {
        xi.push(g.sample(rng));
        covs.push(dmatrix_to_mat2(&sample_inverse_wishart(priors.omega_iw_df, &scale, rng)?));
    }
    MixtureParams::new(xi, covs)
}

pub(crate) fn draw_gp_prior<R: Rng + ?Sized>(k: usize, p: usize, priors: &Priors, rng: &mut R) -> Result<GPParams> {
    let normal = Normal::new(priors.beta_mean, priors.beta_var.sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
    let beta = DVector::from_fn(p * (k - 1), |_, _| normal.sample(rng));
    let unif = Uniform::new(priors.decay_lower, priors.decay_upper).map_err(|e| Error::invalid(e.to_string()))?;
    let decays = (0..k).map(|_| unif.sample(rng)).collect();
    let sigma = sample_inverse_wishart(priors.sigma_star_iw_df, &priors.sigma_star_iw_scale, rng)?;
    GPParams::new(beta, sigma, decays)
}

/// Exact draw from the joint prior under the NNGP approximation with `m`
/// neighbours.
pub fn draw_prior_state<R: Rng + ?Sized>(
    times: &[f64],
    design: &DMatrix<f64>,
    k: usize,
    m: usize,
    priors: &Priors,
    corr: Arc<dyn CorrelationFunction>,
    rng: &mut R,
) -> Result<PriorState> {
    priors.validate(k)?;
    let mixture = draw_mixture_prior(k, priors, rng)?;
    let gp = draw_gp_prior(k, design.ncols(), priors, rng)?;
    let co = Coregionalization::new(&gp, corr)?;
    let factor = build_nngp_factor(times, &co, m)?;
    let omega = nngp_sample_prior(&gp.omega_mean(design)?, &factor, rng)?;
    let prob = ProbField::from_omega(&omega)?;
    let z = sample_labels(&prob, rng);
    let y = simulate_increments(&mixture, &z, rng)?;
    Ok(PriorState { mixture, gp, omega, z, y })
}
