use std::collections::VecDeque;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::hyper::{update_gp_hyper, HyperBlock, ThetaMap};
use super::init::initial_mixture;
use super::labels::{component_densities, draw_labels_into};
use super::missing::{update_missing, Imputation};
use super::mixture::update_mixture;
use super::omega::{update_omega_field, LatentField};
use super::prior::PriorState;
use super::{ChainConfig, MixtureParams, ModelData, Priors};
use crate::error::{Error, Result};
use crate::evaluation::complete_loglik;
use crate::gpcore::{CorrelationFunction, Exponential, GPParams, NngpFactor};
use crate::linalg::Vec2;
use crate::logitn::ProbField;
use nalgebra::{DMatrix, DVector};

const RATE_WINDOW: usize = 100;

/// One retained state.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub iteration: usize,
    pub mixture: MixtureParams,
    pub gp: GPParams,
    /// Complete-data log-likelihood over observed increments.
    pub loglik: f64,
}

/// Acceptance rates over the last 100 iterations, recorded every `thin` iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptanceRecord {
    pub iteration: usize,
    pub hyper_rate: f64,
    pub log_scale: f64,
    /// `None` when nothing is imputed.
    pub missing_rate: Option<f64>,
}

/// Retained draws and diagnostics of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStore {
    pub k: usize,
    pub times: Vec<f64>,
    pub observed: Vec<bool>,
    pub draws: Vec<Draw>,
    /// Labels of every retained draw.
    pub labels: Vec<Vec<u8>>,
    /// Row-major `n × K` probability fields, when kept.
    pub prob_fields: Vec<Vec<f32>>,
    pub acceptance: Vec<AcceptanceRecord>,
    /// Post-burnin acceptance rate of the hyperparameter block.
    pub hyper_acceptance: f64,
}

impl SampleStore {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Number of time points.
    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }
}

/// A single chain with all of its state.
#[derive(Debug)]
pub struct Sampler {
    config: ChainConfig,
    priors: Priors,
    data: ModelData,
    y: Vec<Vec2>,
    observed: Vec<bool>,
    imputation: Option<Imputation>,
    z: Vec<usize>,
    mixture: MixtureParams,
    field: LatentField,
    factor: NngpFactor,
    hyper: HyperBlock,
    prob: ProbField,
    iteration: usize,
    rng: ChaCha8Rng,
}

impl Sampler {
    /// Default initialisation: k-means labels and moments, ω = 0, Σ* = I,
    /// decays at the geometric mean of their prior bounds, β = 0.
    pub fn new(data: ModelData, config: ChainConfig, priors: Priors, corr: Arc<dyn CorrelationFunction>) -> Result<Self> {
        config.validate()?;
        priors.validate(config.k)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let imputation = match data.coords() {
            Some(c) => Some(Imputation::new(c, &config, None)?),
            None => None,
        };
        let y = match &imputation {
            Some(imp) => imp.increments(),
            None => data.y().iter().map(|v| v.expect("complete increments")).collect(),
        };
        let (z, mixture) = initial_mixture(&y, config.k, &priors, &mut rng)?;
        let k = config.k;
        let decay = (priors.decay_lower * priors.decay_upper).sqrt();
        let gp = GPParams::new(
            DVector::zeros(data.design().ncols() * (k - 1)),
            DMatrix::identity(k, k),
            vec![decay; k],
        )?;
        let omega = DMatrix::zeros(data.len(), k - 1);
        Self::assemble(data, config, priors, corr, y, imputation, z, mixture, gp, omega, rng)
    }

    /// Start from a given joint state (fully observed data only); used for
    /// joint-distribution tests.
    pub fn from_state(
        data: ModelData,
        config: ChainConfig,
        priors: Priors,
        corr: Arc<dyn CorrelationFunction>,
        state: &PriorState,
    ) -> Result<Self> {
        config.validate()?;
        priors.validate(config.k)?;
        if data.coords().is_some() {
            return Err(Error::invalid("starting from a state requires fully observed increments"));
        }
        if state.y.len() != data.len() || state.z.len() != data.len() {
            return Err(Error::Shape("state does not match the data".into()));
        }
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::assemble(
            data,
            config,
            priors,
            corr,
            state.y.clone(),
            None,
            state.z.clone(),
            state.mixture.clone(),
            state.gp.clone(),
            state.omega.clone(),
            rng,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        data: ModelData,
        config: ChainConfig,
        priors: Priors,
        corr: Arc<dyn CorrelationFunction>,
        y: Vec<Vec2>,
        imputation: Option<Imputation>,
        z: Vec<usize>,
        mixture: MixtureParams,
        gp: GPParams,
        omega: DMatrix<f64>,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        if mixture.k() != config.k || gp.k() != config.k {
            return Err(Error::Shape("initial state has the wrong number of components".into()));
        }
        let map = ThetaMap::new(config.k, data.design().ncols(), &priors)?;
        let hyper = HyperBlock::new(map, gp, corr, &config)?;
        let factor = hyper.factor(data.times())?;
        let field = LatentField::new(omega, hyper.params.omega_mean(data.design())?, &factor)?;
        let prob = ProbField::from_omega(field.omega())?;
        let observed = data.observed_mask();
        Ok(Sampler {
            config,
            priors,
            data,
            y,
            observed,
            imputation,
            z,
            mixture,
            field,
            factor,
            hyper,
            prob,
            iteration: 0,
            rng,
        })
    }

    /// One full sweep of all updates. Proposals adapt during burnin only.
    pub fn step(&mut self) -> Result<()> {
        let it = self.iteration;
        if it == self.config.burnin {
            self.hyper.proposal.freeze();
            if let Some(imp) = self.imputation.as_mut() {
                imp.freeze();
            }
        }
        let wrap = |e: Error| Error::Chain { iteration: it + 1, source: Box::new(e) };
        if let Some(imp) = self.imputation.as_mut() {
            update_missing(imp, &mut self.y, &self.prob, &self.mixture, &mut self.rng).map_err(wrap)?;
        }
        let dens = component_densities(&self.mixture).map_err(wrap)?;
        draw_labels_into(&self.y, &self.prob, &dens, &mut self.z, &mut self.rng).map_err(wrap)?;
        self.mixture = update_mixture(&self.y, &self.z, &self.priors, &self.mixture, &mut self.rng).map_err(wrap)?;
        update_omega_field(&mut self.field, &self.factor, Some(&self.z), &mut self.rng).map_err(wrap)?;
        update_gp_hyper(
            &mut self.hyper,
            &mut self.field,
            &mut self.factor,
            self.data.times(),
            self.data.design(),
            &mut self.rng,
        )
        .map_err(wrap)?;
        self.prob = ProbField::from_omega(self.field.omega()).map_err(wrap)?;
        self.iteration += 1;
        Ok(())
    }

    /// Replace the increments (fully observed chains only).
    pub fn set_increments(&mut self, y: Vec<Vec2>) -> Result<()> {
        if self.imputation.is_some() || y.len() != self.y.len() {
            return Err(Error::invalid("increments can only be replaced on fully observed data of equal length"));
        }
        self.y = y;
        Ok(())
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn mixture(&self) -> &MixtureParams {
        &self.mixture
    }

    pub fn gp_params(&self) -> &GPParams {
        &self.hyper.params
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        self.field.omega()
    }

    pub fn labels(&self) -> &[usize] {
        &self.z
    }

    pub fn prob(&self) -> &ProbField {
        &self.prob
    }

    pub fn increments(&self) -> &[Vec2] {
        &self.y
    }

    pub fn hyper(&self) -> &HyperBlock {
        &self.hyper
    }

    pub fn imputation(&self) -> Option<&Imputation> {
        self.imputation.as_ref()
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn complete_loglik(&self) -> Result<f64> {
        complete_loglik(&self.y, &self.z, &self.mixture, &self.prob, Some(&self.observed))
    }

    /// Run the configured number of iterations. `progress` is called with
    /// `(done, total)` after each completed percent.
    pub fn run(mut self, mut progress: impl FnMut(usize, usize)) -> Result<SampleStore> {
        let cfg = self.config.clone();
        let n = self.data.len();
        let mut store = SampleStore {
            k: cfg.k,
            times: self.data.times().to_vec(),
            observed: self.observed.clone(),
            draws: Vec::with_capacity(cfg.retained()),
            labels: Vec::with_capacity(cfg.retained()),
            prob_fields: Vec::new(),
            acceptance: Vec::new(),
            hyper_acceptance: 0.0,
        };
        let mut hyper_window: VecDeque<bool> = VecDeque::with_capacity(RATE_WINDOW);
        let mut missing_window: VecDeque<f64> = VecDeque::with_capacity(RATE_WINDOW);
        let mut post_accepted = 0usize;
        let percent = (cfg.iters / 100).max(1);
        for _ in 0..cfg.iters {
            let before = self.hyper.accepted;
            let miss_before = self.imputation.as_ref().map(|m| (m.accepted, m.proposed));
            self.step()?;
            let it = self.iteration;
            let accepted = self.hyper.accepted > before;
            if hyper_window.len() == RATE_WINDOW {
                hyper_window.pop_front();
            }
            hyper_window.push_back(accepted);
            if let (Some((a0, p0)), Some(m)) = (miss_before, self.imputation.as_ref()) {
                if missing_window.len() == RATE_WINDOW {
                    missing_window.pop_front();
                }
                let p = m.proposed - p0;
                missing_window.push_back(if p == 0 { 0.0 } else { (m.accepted - a0) as f64 / p as f64 });
            }
            if it > cfg.burnin && accepted {
                post_accepted += 1;
            }
            if it % cfg.thin == 0 {
                store.acceptance.push(AcceptanceRecord {
                    iteration: it,
                    hyper_rate: hyper_window.iter().filter(|&&a| a).count() as f64 / hyper_window.len() as f64,
                    log_scale: self.hyper.proposal.log_scale(),
                    missing_rate: self
                        .imputation
                        .as_ref()
                        .map(|_| missing_window.iter().sum::<f64>() / missing_window.len().max(1) as f64),
                });
            }
            if it > cfg.burnin && (it - cfg.burnin) % cfg.thin == 0 {
                store.draws.push(Draw {
                    iteration: it,
                    mixture: self.mixture.clone(),
                    gp: self.hyper.params.clone(),
                    loglik: self.complete_loglik()?,
                });
                store.labels.push(self.z.iter().map(|&v| v as u8).collect());
                if cfg.keep_prob_fields {
                    let pi = self.prob.matrix();
                    let mut row_major = Vec::with_capacity(n * cfg.k);
                    for t in 0..n {
                        for j in 0..cfg.k {
                            row_major.push(pi[(t, j)] as f32);
                        }
                    }
                    store.prob_fields.push(row_major);
                }
            }
            if it % percent == 0 {
                progress(it, cfg.iters);
            }
        }
        store.hyper_acceptance = post_accepted as f64 / (cfg.iters - cfg.burnin) as f64;
        Ok(store)
    }
}

/// Run one chain with the exponential correlation function.
pub fn run_chain(data: ModelData, config: ChainConfig, priors: Priors) -> Result<SampleStore> {
    Sampler::new(data, config, priors, Arc::new(Exponential))?.run(|_, _| {})
}
