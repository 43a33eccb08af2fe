//! Logistic-normal algebra: softmax maps between the γ / ω scales and the
//! simplex, and log-ratio covariances of the induced compositions.
//!
//! Category indices are zero-based; the last category is the reference.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gpcore::Coregionalization;

const FLUSH: f64 = 1e-300;

fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::invalid("NaN in logit vector"));
    }
    Ok(())
}

fn softmax_into(v: &[f64], out: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, x) in out.iter_mut().zip(v) {
        *o = (x - max).exp();
        sum += *o;
    }
    let mut renorm = 0.0;
    for o in out.iter_mut() {
        *o /= sum;
        if *o < FLUSH {
            *o = 0.0;
        }
        renorm += *o;
    }
    if renorm != 1.0 {
        for o in out.iter_mut() {
            *o /= renorm;
        }
    }
}

/// `π_k = exp(γ_k) / Σ_j exp(γ_j)`, evaluated after subtracting the maximum.
pub fn softmax_full(gamma: &[f64]) -> Result<Vec<f64>> {
    check_finite(gamma)?;
    if gamma.is_empty() {
        return Err(Error::invalid("empty logit vector"));
    }
    let mut out = vec![0.0; gamma.len()];
    softmax_into(gamma, &mut out);
    Ok(out)
}

/// `ω_k = γ_k - γ_K` for `k < K`.
pub fn gamma_to_omega(gamma: &[f64]) -> Vec<f64> {
    match gamma.split_last() {
        Some((last, rest)) => rest.iter().map(|g| g - last).collect(),
        None => Vec::new(),
    }
}

/// Softmax of `(ω, 0)`: the reference category has logit zero.
pub fn softmax_reduced(omega: &[f64]) -> Result<Vec<f64>> {
    check_finite(omega)?;
    let mut ext = Vec::with_capacity(omega.len() + 1);
    ext.extend_from_slice(omega);
    ext.push(0.0);
    let mut out = vec![0.0; ext.len()];
    softmax_into(&ext, &mut out);
    Ok(out)
}

/// `τ_{ij,kl}(dt) = Cov(γ_{t,i} - γ_{t,k}, γ_{t',j} - γ_{t',l})` with `|t - t'| = dt`.
pub fn logratio_cov(co: &Coregionalization, i: usize, j: usize, k: usize, l: usize, dt: f64) -> Result<f64> {
    let n = co.k();
    if [i, j, k, l].iter().any(|&x| x >= n) {
        return Err(Error::invalid(format!("category index out of range 0..{n}")));
    }
    if !(dt >= 0.0) {
        return Err(Error::invalid("lag must be nonnegative"));
    }
    if i == k || j == l {
        return Ok(0.0);
    }
    let g = co.gamma_cross_cov(dt);
    Ok(g[(i, j)] + g[(k, l)] - g[(i, l)] - g[(k, j)])
}

/// `τ(dt) / τ(0)` at each lag.
pub fn logratio_corr_curve(co: &Coregionalization, i: usize, j: usize, k: usize, l: usize, lags: &[f64]) -> Result<Vec<f64>> {
    let zero = logratio_cov(co, i, j, k, l, 0.0)?;
    if zero.abs() <= 1e-12 * co.gamma_cross_cov(0.0).abs().max() {
        return Err(Error::invalid("log-ratio covariance at lag 0 is zero"));
    }
    lags.iter().map(|&dt| Ok(logratio_cov(co, i, j, k, l, dt)? / zero)).collect()
}

/// The (K−1)×(K−1) covariance of ω for independent γ components with variances
/// `a`: diagonal `a_k + a_K`, off-diagonal `a_K`.
pub fn independence_structure(a: &[f64]) -> Result<DMatrix<f64>> {
    if a.len() < 2 {
        return Err(Error::invalid("need at least two variances"));
    }
    if a.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::invalid("variances must be positive"));
    }
    let last = a[a.len() - 1];
    let d = a.len() - 1;
    Ok(DMatrix::from_fn(d, d, |r, c| if r == c { a[r] + last } else { last }))
}

/// A T×K matrix of row-stochastic probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbField {
    pi: DMatrix<f64>,
}

impl ProbField {
    pub fn new(pi: DMatrix<f64>) -> Result<Self> {
        for (t, row) in pi.row_iter().enumerate() {
            if row.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::invalid(format!("row {t} has negative or NaN probabilities")));
            }
            if (row.sum() - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("row {t} sums to {}", row.sum())));
            }
        }
        Ok(ProbField { pi })
    }

    /// Rows `softmax_reduced(ω_t)` of a T×(K−1) field.
    pub fn from_omega(omega: &DMatrix<f64>) -> Result<Self> {
        let (t, d) = omega.shape();
        let mut pi = DMatrix::zeros(t, d + 1);
        let mut ext = vec![0.0; d + 1];
        let mut out = vec![0.0; d + 1];
        for r in 0..t {
            for c in 0..d {
                ext[c] = omega[(r, c)];
            }
            check_finite(&ext)?;
            softmax_into(&ext, &mut out);
            for c in 0..=d {
                pi[(r, c)] = out[c];
            }
        }
        Ok(ProbField { pi })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.pi
    }

    pub fn len(&self) -> usize {
        self.pi.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.nrows() == 0
    }

    pub fn k(&self) -> usize {
        self.pi.ncols()
    }

    pub fn get(&self, t: usize, k: usize) -> f64 {
        self.pi[(t, k)]
    }
}
