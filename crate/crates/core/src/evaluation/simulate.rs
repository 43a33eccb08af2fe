use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::gpcore::{Coregionalization, CorrelationFunction, Exponential, GPParams};
use crate::linalg::{cholesky_jittered, standard_normal_vector, Mat2, Vec2};
use crate::logitn::ProbField;
use crate::sampler::{simulate_increments, MixtureParams};
use crate::trajectory::{reconstruct, Increments};

/// Parameters of a synthetic track on the regular grid `t_i = span·i/T`,
/// `i = 1..=T`, with covariates `(1, t_i/span)`.
#[derive(Debug, Clone)]
pub struct SimScenario {
    pub t: usize,
    pub span: f64,
    pub mixture: MixtureParams,
    pub gp: GPParams,
}

impl SimScenario {
    /// Three behaviours with component correlations 0, ≈0.9 and −0.5,
    /// `Σ*` with a zero and two nonzero off-diagonals, and time trends in β.
    pub fn paper_default(t: usize) -> Self {
        let mixture = MixtureParams::new(
            vec![Vec2::new(0.0, 0.0), Vec2::new(3.0, 0.0), Vec2::new(0.0, -3.0)],
            vec![
                Mat2::new(1.0, 0.0, 0.0, 3.0),
                Mat2::new(1.0, 1.272, 1.272, 2.0),
                Mat2::new(2.0, -0.5, -0.5, 0.5),
            ],
        )
        .expect("valid default mixture");
        let gp = GPParams::new(
            DVector::from_vec(vec![0.0, -5.0, 3.0, -7.0]),
            DMatrix::from_row_slice(3, 3, &[5.0, -2.0, 0.0, -2.0, 5.0, 3.0, 0.0, 3.0, 5.0]),
            vec![1.0, 0.8, 1.5],
        )
        .expect("valid default GP parameters");
        SimScenario { t, span: 20.0, mixture, gp }
    }

    pub fn k(&self) -> usize {
        self.mixture.k()
    }

    pub fn validate(&self) -> Result<()> {
        if self.t < 2 {
            return Err(Error::invalid("a scenario needs at least 2 time points"));
        }
        if !(self.span > 0.0 && self.span.is_finite()) {
            return Err(Error::invalid("time span must be positive"));
        }
        if self.mixture.k() != self.gp.k() {
            return Err(Error::Shape("mixture and GP disagree on K".into()));
        }
        if self.gp.p() != 2 {
            return Err(Error::Shape("the scenario design has an intercept and a time slope, so p = 2".into()));
        }
        self.gp.validate()
    }

    pub fn times(&self) -> Vec<f64> {
        (1..=self.t).map(|i| self.span * i as f64 / self.t as f64).collect()
    }

    pub fn design(&self) -> DMatrix<f64> {
        let times = self.times();
        DMatrix::from_fn(self.t, 2, |i, j| if j == 0 { 1.0 } else { times[i] / self.span })
    }
}

/// A simulated track and every latent quantity behind it.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub times: Vec<f64>,
    pub design: DMatrix<f64>,
    /// `T × K` independent unit-variance factors.
    pub eta: DMatrix<f64>,
    /// `T × K` unreduced latent field.
    pub gamma: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub prob: ProbField,
    pub z: Vec<usize>,
    pub y: Vec<Vec2>,
    /// `T + 2` grid coordinates starting at (0,0), (1,0).
    pub coords: Vec<Vec2>,
}

/// Draw factors from their exact (dense) GPs, mix them with `A*`, and
/// simulate labels and increments.
pub fn simulate_dataset<R: Rng + ?Sized>(scenario: &SimScenario, rng: &mut R) -> Result<SimulatedData> {
    simulate_with(scenario, Arc::new(Exponential), rng)
}

pub fn simulate_with<R: Rng + ?Sized>(
    scenario: &SimScenario,
    corr: Arc<dyn CorrelationFunction>,
    rng: &mut R,
) -> Result<SimulatedData> {
    scenario.validate()?;
    let (n, k) = (scenario.t, scenario.k());
    let times = scenario.times();
    let design = scenario.design();
    let mut eta = DMatrix::zeros(n, k);
    for (d, &phi) in scenario.gp.decays.iter().enumerate() {
        let c = DMatrix::from_fn(n, n, |i, j| corr.correlation((times[i] - times[j]).abs(), phi));
        let l = cholesky_jittered(&c, "factor correlation")?.l();
        eta.set_column(d, &(l * standard_normal_vector(n, rng)));
    }
    let co = Coregionalization::new(&scenario.gp, corr)?;
    let mean = scenario.gp.omega_mean(&design)?;
    let mut gamma = &eta * co.a_star().transpose();
    for t in 0..n {
        for j in 0..k - 1 {
            gamma[(t, j)] += mean[(t, j)];
        }
    }
    let omega = DMatrix::from_fn(n, k - 1, |t, j| gamma[(t, j)] - gamma[(t, k - 1)]);
    let prob = ProbField::from_omega(&omega)?;
    let z = crate::sampler::sample_labels(&prob, rng);
    let y = simulate_increments(&scenario.mixture, &z, rng)?;
    let incs = Increments { y: y.iter().map(|v| Some(*v)).collect(), bearings: Vec::new() };
    let coords = reconstruct([Vec2::zeros(), Vec2::new(1.0, 0.0)], &incs)?;
    Ok(SimulatedData { times, design, eta, gamma, omega, prob, z, y, coords })
}
