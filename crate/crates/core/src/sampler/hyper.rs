//! Joint adaptive random-walk Metropolis update of `(β, φ, Σ*)`.
//!
//! The block moves on an unconstrained vector θ:
//! * `β` as is;
//! * `u_d = logit((φ_d - lower) / (upper - lower))`;
//! * Bartlett coordinates of `Σ*⁻¹ = S B B' S'`, where `S` is the lower
//!   Cholesky factor of the inverse prior scale and `B` is lower triangular
//!   with `B_ii² = c_i ~ χ²(ν - i)` stored as `log c_i` and free
//!   off-diagonals `B_ij ~ N(0, 1)`.
//!
//! The proposal mean, covariance and log global scale adapt by
//! Robbins-Monro recursions with a vanishing step size.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::omega::LatentField;
use super::{ChainConfig, Priors};
use crate::error::{Error, Result};
use crate::gpcore::{build_nngp_factor, nngp_logdensity, Coregionalization, CorrelationFunction, GPParams, NngpFactor};
use crate::linalg::{cholesky_jittered, standard_normal_vector, symmetrize};

fn log_sigmoid(u: f64) -> f64 {
    -softplus(-u)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Bijection between θ and [`GPParams`], with the log prior density of θ.
#[derive(Debug, Clone)]
pub struct ThetaMap {
    k: usize,
    p: usize,
    lower: f64,
    upper: f64,
    beta_mean: f64,
    beta_var: f64,
    df: f64,
    s: DMatrix<f64>,
}

impl ThetaMap {
    pub fn new(k: usize, p: usize, priors: &Priors) -> Result<Self> {
        priors.validate(k)?;
        if p == 0 {
            return Err(Error::invalid("design needs at least one column"));
        }
        let scale_inv = cholesky_jittered(&priors.sigma_star_iw_scale, "Σ* prior scale")?.inverse();
        let s = cholesky_jittered(&scale_inv, "inverse Σ* prior scale")?.l();
        Ok(ThetaMap {
            k,
            p,
            lower: priors.decay_lower,
            upper: priors.decay_upper,
            beta_mean: priors.beta_mean,
            beta_var: priors.beta_var,
            df: priors.sigma_star_iw_df,
            s,
        })
    }

    fn n_beta(&self) -> usize {
        self.p * (self.k - 1)
    }

    pub fn dim(&self) -> usize {
        self.n_beta() + 2 * self.k + self.k * (self.k - 1) / 2
    }

    fn bartlett(&self, theta: &[f64]) -> DMatrix<f64> {
        let k = self.k;
        let base = self.n_beta() + k;
        let mut b = DMatrix::zeros(k, k);
        let mut off = base + k;
        for i in 0..k {
            b[(i, i)] = (0.5 * theta[base + i]).exp();
            for j in 0..i {
                b[(i, j)] = theta[off];
                off += 1;
            }
        }
        b
    }

    pub fn to_params(&self, theta: &[f64]) -> Result<GPParams> {
        if theta.len() != self.dim() {
            return Err(Error::Shape(format!("θ has {} entries, expected {}", theta.len(), self.dim())));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("θ has non-finite entries"));
        }
        let nb = self.n_beta();
        let beta = DVector::from_column_slice(&theta[..nb]);
        let decays = theta[nb..nb + self.k]
            .iter()
            .map(|&u| self.lower + (self.upper - self.lower) * log_sigmoid(u).exp())
            .collect();
        let m = &self.s * self.bartlett(theta);
        let m_inv = m
            .solve_lower_triangular(&DMatrix::identity(self.k, self.k))
            .ok_or_else(|| Error::Numerical("Bartlett factor is singular".into()))?;
        let mut sigma = m_inv.transpose() * m_inv;
        symmetrize(&mut sigma);
        GPParams::new(beta, sigma, decays)
    }

    pub fn from_params(&self, params: &GPParams) -> Result<Vec<f64>> {
        params.validate()?;
        if params.k() != self.k || params.beta.len() != self.n_beta() {
            return Err(Error::Shape("parameters do not match the θ layout".into()));
        }
        let mut theta = params.beta.as_slice().to_vec();
        for &phi in &params.decays {
            let x = (phi - self.lower) / (self.upper - self.lower);
            if !(x > 0.0 && x < 1.0) {
                return Err(Error::invalid(format!(
                    "decay {phi} outside the prior support ({}, {})",
                    self.lower, self.upper
                )));
            }
            theta.push((x / (1.0 - x)).ln());
        }
        let prec = cholesky_jittered(&params.sigma_star, "Σ*")?.inverse();
        let s_inv = self
            .s
            .solve_lower_triangular(&DMatrix::identity(self.k, self.k))
            .ok_or_else(|| Error::Numerical("prior scale factor is singular".into()))?;
        let mut bb = &s_inv * prec * s_inv.transpose();
        symmetrize(&mut bb);
        let b = cholesky_jittered(&bb, "Bartlett product")?.l();
        for i in 0..self.k {
            theta.push(2.0 * b[(i, i)].ln());
        }
        for i in 0..self.k {
            for j in 0..i {
                theta.push(b[(i, j)]);
            }
        }
        Ok(theta)
    }

    /// Log density of θ under the priors, including all change-of-variable terms.
    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        let nb = self.n_beta();
        let k = self.k;
        let mut lp = 0.0;
        for &b in &theta[..nb] {
            lp -= 0.5 * (b - self.beta_mean).powi(2) / self.beta_var;
        }
        for &u in &theta[nb..nb + k] {
            lp += log_sigmoid(u) + log_sigmoid(-u);
        }
        for i in 0..k {
            let u = theta[nb + k + i];
            lp += 0.5 * (self.df - i as f64) * u - 0.5 * u.exp();
        }
        for &v in &theta[nb + 2 * k..] {
            lp -= 0.5 * v * v;
        }
        lp
    }
}

/// Gaussian random-walk proposal with adaptive covariance and global scale.
#[derive(Debug, Clone)]
pub struct AdaptiveProposal {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_scale: f64,
    steps: usize,
    target: f64,
    decay: f64,
    adapt: bool,
}

impl AdaptiveProposal {
    pub fn new(start: &[f64], initial_sd: f64, target: f64, decay: f64, adapt: bool) -> Self {
        let n = start.len();
        let cov = DMatrix::identity(n, n) * (initial_sd * initial_sd);
        AdaptiveProposal {
            mean: DVector::from_column_slice(start),
            chol: DMatrix::identity(n, n) * initial_sd,
            cov,
            log_scale: (2.38 / (n as f64).sqrt()).ln(),
            steps: 0,
            target,
            decay,
            adapt,
        }
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// Stop adapting; the proposal is fixed from here on.
    pub fn freeze(&mut self) {
        self.adapt = false;
    }

    pub fn is_adapting(&self) -> bool {
        self.adapt
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn propose<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Vec<f64> {
        let step = &self.chol * standard_normal_vector(theta.len(), rng) * self.log_scale.exp();
        theta.iter().zip(step.iter()).map(|(a, b)| a + b).collect()
    }

    /// Robbins-Monro update after a move to `theta` with acceptance probability `alpha`.
    pub fn adapt(&mut self, theta: &[f64], alpha: f64) {
        if !self.adapt {
            return;
        }
        self.steps += 1;
        let gamma = (self.steps as f64 + 1.0).powf(-self.decay);
        self.log_scale += gamma * (alpha.min(1.0) - self.target);
        let x = DVector::from_column_slice(theta);
        let dev = &x - &self.mean;
        self.mean += &dev * gamma;
        self.cov = &self.cov * (1.0 - gamma) + &dev * dev.transpose() * gamma;
        symmetrize(&mut self.cov);
        if self.cov.abs().max() == 0.0 {
            self.chol.fill(0.0);
        } else if let Ok(c) = cholesky_jittered(&self.cov, "proposal covariance") {
            self.chol = c.l();
        }
    }

    /// One Metropolis-Hastings step. `log_target` returns `None` for
    /// proposals that cannot be evaluated; those are rejected.
    pub fn step<R, F>(&mut self, theta: &mut Vec<f64>, current: &mut f64, mut log_target: F, rng: &mut R) -> bool
    where
        R: Rng + ?Sized,
        F: FnMut(&[f64]) -> Option<f64>,
    {
        let prop = self.propose(theta, rng);
        let (alpha, accept) = match log_target(&prop) {
            Some(t) if t.is_finite() => {
                let alpha = (t - *current).min(0.0).exp();
                let accept = rng.random::<f64>() < alpha;
                if accept {
                    *theta = prop;
                    *current = t;
                }
                (alpha, accept)
            }
            _ => (0.0, false),
        };
        self.adapt(theta, alpha);
        accept
    }
}

/// State of the hyperparameter block.
#[derive(Debug, Clone)]
pub struct HyperBlock {
    pub map: ThetaMap,
    pub theta: Vec<f64>,
    pub params: GPParams,
    pub proposal: AdaptiveProposal,
    pub corr: Arc<dyn CorrelationFunction>,
    pub m: usize,
    pub accepted: usize,
    pub proposed: usize,
}

impl HyperBlock {
    pub fn new(map: ThetaMap, params: GPParams, corr: Arc<dyn CorrelationFunction>, config: &ChainConfig) -> Result<Self> {
        let theta = map.from_params(&params)?;
        // Round-trip so that the stored parameters are exactly those encoded by θ.
        let params = map.to_params(&theta)?;
        let proposal =
            AdaptiveProposal::new(&theta, config.proposal_sd, config.adapt_target, config.adapt_decay, config.adapt);
        Ok(HyperBlock { map, theta, params, proposal, corr, m: config.m, accepted: 0, proposed: 0 })
    }

    pub fn factor(&self, times: &[f64]) -> Result<NngpFactor> {
        let co = Coregionalization::new(&self.params, self.corr.clone())?;
        build_nngp_factor(times, &co, self.m)
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// One adaptive Metropolis move of θ targeting `p̃(ω | θ) p(θ)`. On
/// acceptance the factor and the field's prior mean are replaced.
pub fn update_gp_hyper<R: Rng + ?Sized>(
    block: &mut HyperBlock,
    field: &mut LatentField,
    factor: &mut NngpFactor,
    times: &[f64],
    design: &DMatrix<f64>,
    rng: &mut R,
) -> Result<bool> {
    let mut current = nngp_logdensity(field.omega(), field.mean(), factor)? + block.map.log_prior(&block.theta);
    let mut built: Option<(GPParams, NngpFactor, DMatrix<f64>)> = None;
    let (map, corr, m) = (&block.map, block.corr.clone(), block.m);
    let omega = field.omega();
    let accepted = block.proposal.step(
        &mut block.theta,
        &mut current,
        |theta| {
            let attempt = || -> Result<(GPParams, NngpFactor, DMatrix<f64>, f64)> {
                let params = map.to_params(theta)?;
                let co = Coregionalization::new(&params, corr.clone())?;
                let factor = build_nngp_factor(times, &co, m)?;
                let mean = params.omega_mean(design)?;
                let ld = nngp_logdensity(omega, &mean, &factor)?;
                Ok((params, factor, mean, ld))
            };
            match attempt() {
                Ok((params, factor, mean, ld)) => {
                    built = Some((params, factor, mean));
                    Some(ld + map.log_prior(theta))
                }
                Err(e) => {
                    log::warn!("hyperparameter proposal rejected: {e}");
                    None
                }
            }
        },
        rng,
    );
    block.proposed += 1;
    if accepted {
        let (params, new_factor, mean) = built.expect("accepted proposal was evaluated");
        block.accepted += 1;
        block.params = params;
        *factor = new_factor;
        field.set_prior(mean, factor);
    }
    Ok(accepted)
}
