//! Nearest-neighbour GP factorisation `p̃(ω) = Π_t p(ω_t | ω_{N(t)})` with
//! temporally ordered neighbour sets of at most `m` predecessors. Each
//! conditioning block is the whole (K−1)-vector `ω_t`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::coreg::Coregionalization;
use crate::error::{Error, Result};
use crate::linalg::{chol_log_det, cholesky_jittered, standard_normal_vector, symmetrize};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `N(t) = [t-1, t-2, …, max(0, t-m)]` (zero-based).
pub fn build_neighbor_sets(t: usize, m: usize) -> Vec<Vec<usize>> {
    (0..t).map(|i| (i.saturating_sub(m)..i).rev().collect()).collect()
}

/// Gaussian conditional of one block given its neighbours:
/// `ω_t | ω_N ~ N(μ_t + W (ω_N - μ_N), F)`.
#[derive(Debug, Clone)]
pub struct Conditional {
    /// `d × (|N|·d)`; columns `j·d..(j+1)·d` act on neighbour `j`.
    pub weights: DMatrix<f64>,
    pub cov: DMatrix<f64>,
    pub cov_chol: DMatrix<f64>,
    pub precision: DMatrix<f64>,
    pub log_det: f64,
}

#[derive(Debug, Clone)]
pub struct NngpFactor {
    dim: usize,
    neighbors: Vec<Vec<usize>>,
    conditionals: Vec<Arc<Conditional>>,
    children: Vec<Vec<(usize, usize)>>,
    log_det: f64,
}

impl NngpFactor {
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// Block dimension `K - 1`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn neighbors(&self, t: usize) -> &[usize] {
        &self.neighbors[t]
    }

    pub fn conditional(&self, t: usize) -> &Conditional {
        &self.conditionals[t]
    }

    /// `(s, j)` pairs such that `t` is the `j`-th neighbour of `s`.
    pub fn children(&self, t: usize) -> &[(usize, usize)] {
        &self.children[t]
    }

    /// Sum of the conditional log-determinants.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Innovation residuals `r_t = dev_t - W_t dev_{N(t)}` of a centred field.
    pub fn residuals(&self, dev: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.dim;
        let mut r = dev.clone();
        for t in 0..self.len() {
            let c = &self.conditionals[t];
            for (j, &nb) in self.neighbors[t].iter().enumerate() {
                for a in 0..d {
                    let mut acc = 0.0;
                    for b in 0..d {
                        acc += c.weights[(a, j * d + b)] * dev[(nb, b)];
                    }
                    r[(t, a)] -= acc;
                }
            }
        }
        r
    }
}

fn same_lags(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()))
}

fn conditional_for(times: &[f64], t: usize, neighbors: &[usize], coreg: &Coregionalization) -> Result<Conditional> {
    let d = coreg.k() - 1;
    let n = neighbors.len();
    let c0 = coreg.omega_cross_cov(0.0);
    let mut cov = c0.clone();
    let mut weights = DMatrix::zeros(d, n * d);
    if n > 0 {
        let mut c_nn = DMatrix::zeros(n * d, n * d);
        for a in 0..n {
            c_nn.view_mut((a * d, a * d), (d, d)).copy_from(&c0);
            for b in 0..a {
                let block = coreg.omega_cross_cov((times[neighbors[a]] - times[neighbors[b]]).abs());
                c_nn.view_mut((a * d, b * d), (d, d)).copy_from(&block);
                c_nn.view_mut((b * d, a * d), (d, d)).copy_from(&block.transpose());
            }
        }
        let mut c_nt = DMatrix::zeros(n * d, d);
        for a in 0..n {
            let block = coreg.omega_cross_cov((times[t] - times[neighbors[a]]).abs());
            c_nt.view_mut((a * d, 0), (d, d)).copy_from(&block);
        }
        let chol = cholesky_jittered(&c_nn, &format!("neighbour covariance at index {t}"))?;
        let solved = chol.solve(&c_nt);
        weights = solved.transpose();
        cov -= &weights * &c_nt;
        symmetrize(&mut cov);
    }
    let chol = cholesky_jittered(&cov, &format!("conditional covariance at index {t}"))?;
    let cov_chol = chol.l();
    let log_det = chol_log_det(&cov_chol);
    let mut precision = chol.inverse();
    symmetrize(&mut precision);
    Ok(Conditional { weights, cov, cov_chol, precision, log_det })
}

/// Conditional regressions of each block on its neighbours. Blocks whose lag
/// pattern repeats the previous block's (e.g. on a regular grid) share one
/// conditional.
pub fn build_nngp_factor(times: &[f64], coreg: &Coregionalization, m: usize) -> Result<NngpFactor> {
    if times.is_empty() {
        return Err(Error::invalid("no time points"));
    }
    if m == 0 {
        return Err(Error::invalid("neighbour count m must be at least 1"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("times must be strictly increasing"));
    }
    let d = coreg.k() - 1;
    let neighbors = build_neighbor_sets(times.len(), m);
    let mut conditionals: Vec<Arc<Conditional>> = Vec::with_capacity(times.len());
    let mut previous: Option<Vec<f64>> = None;
    for (t, nb) in neighbors.iter().enumerate() {
        let lags: Vec<f64> = nb.iter().map(|&j| times[t] - times[j]).collect();
        let reuse = match (&previous, conditionals.last()) {
            (Some(prev), Some(c)) if same_lags(prev, &lags) => Some(Arc::clone(c)),
            _ => None,
        };
        let cond = match reuse {
            Some(c) => c,
            None => Arc::new(conditional_for(times, t, nb, coreg)?),
        };
        conditionals.push(cond);
        previous = Some(lags);
    }
    let mut children = vec![Vec::new(); times.len()];
    for (s, nb) in neighbors.iter().enumerate() {
        for (j, &t) in nb.iter().enumerate() {
            children[t].push((s, j));
        }
    }
    let log_det = conditionals.iter().map(|c| c.log_det).sum();
    Ok(NngpFactor { dim: d, neighbors, conditionals, children, log_det })
}

fn check_shape(name: &str, m: &DMatrix<f64>, factor: &NngpFactor) -> Result<()> {
    if m.nrows() != factor.len() || m.ncols() != factor.dim {
        return Err(Error::Shape(format!(
            "{name} is {}x{}, factor expects {}x{}",
            m.nrows(),
            m.ncols(),
            factor.len(),
            factor.dim
        )));
    }
    Ok(())
}

/// `log p̃(ω)` for a field with the given mean, both `T × (K−1)`.
pub fn nngp_logdensity(omega: &DMatrix<f64>, mean: &DMatrix<f64>, factor: &NngpFactor) -> Result<f64> {
    check_shape("omega", omega, factor)?;
    check_shape("mean", mean, factor)?;
    let d = factor.dim;
    let r = factor.residuals(&(omega - mean));
    let mut quad = 0.0;
    for t in 0..factor.len() {
        let p = &factor.conditionals[t].precision;
        for a in 0..d {
            for b in 0..d {
                quad += r[(t, a)] * p[(a, b)] * r[(t, b)];
            }
        }
    }
    Ok(-0.5 * (quad + factor.log_det + (factor.len() * d) as f64 * LN_2PI))
}

/// Ancestral draw from the NNGP prior.
pub fn nngp_sample_prior<R: Rng + ?Sized>(mean: &DMatrix<f64>, factor: &NngpFactor, rng: &mut R) -> Result<DMatrix<f64>> {
    check_shape("mean", mean, factor)?;
    let d = factor.dim;
    let mut dev = DMatrix::zeros(factor.len(), d);
    for t in 0..factor.len() {
        let c = &factor.conditionals[t];
        let noise: DVector<f64> = &c.cov_chol * standard_normal_vector(d, rng);
        for a in 0..d {
            let mut v = noise[a];
            for (j, &nb) in factor.neighbors[t].iter().enumerate() {
                for b in 0..d {
                    v += c.weights[(a, j * d + b)] * dev[(nb, b)];
                }
            }
            dev[(t, a)] = v;
        }
    }
    Ok(dev + mean)
}
