//! Linear model of coregionalisation for the K-dimensional γ process and the
//! reduced (K−1)-dimensional ω process.
//!
//! `γ_t = A* η_t` with independent unit-variance factors `η_{·,d}` and `A*`
//! the symmetric square root of `Σ*`. Subtracting the last row gives the
//! loading matrix of `ω_t = γ_{t,1:K-1} - γ_{t,K}`.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use super::correlation::CorrelationFunction;
use super::GPParams;
use crate::error::{Error, Result};
use crate::linalg::symmetrize;

/// Unique symmetric positive semi-definite square root `ΔΞΔ'`.
pub fn symmetric_sqrt(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = sigma.nrows();
    if k == 0 || sigma.ncols() != k {
        return Err(Error::Shape(format!("expected a square matrix, got {}x{}", k, sigma.ncols())));
    }
    let scale = sigma.abs().max();
    if !scale.is_finite() {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    if (sigma - sigma.transpose()).abs().max() > 1e-10 * scale.max(1e-300) {
        return Err(Error::invalid("matrix is not symmetric"));
    }
    let mut s = sigma.clone();
    symmetrize(&mut s);
    let eig = SymmetricEigen::new(s);
    let trace: f64 = eig.eigenvalues.iter().sum();
    let floor = 1e-12 * trace.abs();
    if eig.eigenvalues.iter().any(|&l| l < -floor) || !(trace > 0.0) {
        return Err(Error::invalid("matrix is not positive definite"));
    }
    let roots = eig.eigenvalues.map(|l| l.max(floor).sqrt());
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&roots) * v.transpose();
    symmetrize(&mut out);
    Ok(out)
}

/// Row `i` of the result is row `i` of `A*` minus its last row.
pub fn reduce_a(a_star: &DMatrix<f64>) -> DMatrix<f64> {
    let k = a_star.nrows();
    let last = a_star.row(k - 1).into_owned();
    DMatrix::from_fn(k - 1, a_star.ncols(), |i, j| a_star[(i, j)] - last[j])
}

/// Loadings and correlations of the γ / ω processes for a fixed parameter set.
#[derive(Debug, Clone)]
pub struct Coregionalization {
    a_star: DMatrix<f64>,
    a: DMatrix<f64>,
    decays: Vec<f64>,
    corr: Arc<dyn CorrelationFunction>,
}

impl Coregionalization {
    pub fn new(params: &GPParams, corr: Arc<dyn CorrelationFunction>) -> Result<Self> {
        params.validate()?;
        let a_star = symmetric_sqrt(&params.sigma_star)?;
        let a = reduce_a(&a_star);
        Ok(Coregionalization { a_star, a, decays: params.decays.clone(), corr })
    }

    pub fn k(&self) -> usize {
        self.decays.len()
    }

    pub fn a_star(&self) -> &DMatrix<f64> {
        &self.a_star
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    fn weighted_outer(&self, m: &DMatrix<f64>, lag: f64) -> DMatrix<f64> {
        let c: Vec<f64> = self.decays.iter().map(|&phi| self.corr.correlation(lag, phi)).collect();
        let (r, k) = (m.nrows(), m.ncols());
        DMatrix::from_fn(r, r, |i, j| (0..k).map(|d| m[(i, d)] * c[d] * m[(j, d)]).sum())
    }

    /// `Cov(ω_t, ω_{t'})` at `|t - t'| = lag`: `A diag(C_d(lag)) A'`.
    pub fn omega_cross_cov(&self, lag: f64) -> DMatrix<f64> {
        self.weighted_outer(&self.a, lag)
    }

    /// `Cov(γ_t, γ_{t'})` at `|t - t'| = lag`: `A* diag(C_d(lag)) A*'`.
    pub fn gamma_cross_cov(&self, lag: f64) -> DMatrix<f64> {
        self.weighted_outer(&self.a_star, lag)
    }
}

/// Convenience wrapper of [`Coregionalization::omega_cross_cov`].
pub fn omega_cross_cov(lag: f64, params: &GPParams, corr: Arc<dyn CorrelationFunction>) -> Result<DMatrix<f64>> {
    if !(lag >= 0.0) {
        return Err(Error::invalid("lag must be nonnegative"));
    }
    Ok(Coregionalization::new(params, corr)?.omega_cross_cov(lag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpcore::Exponential;
    use approx::assert_abs_diff_eq;

    fn m(rows: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, data.len() / rows, data)
    }

    #[test]
    fn sqrt_examples() {
        assert_abs_diff_eq!(symmetric_sqrt(&m(2, &[4.0, 0.0, 0.0, 9.0])).unwrap(), m(2, &[2.0, 0.0, 0.0, 3.0]), epsilon = 1e-14);
        assert_abs_diff_eq!(symmetric_sqrt(&DMatrix::identity(4, 4)).unwrap(), DMatrix::identity(4, 4), epsilon = 1e-14);
        // Eigenpairs (7, (1,-1)/√2) and (3, (1,1)/√2).
        let s = m(2, &[5.0, -2.0, -2.0, 5.0]);
        let a = symmetric_sqrt(&s).unwrap();
        let diag = (7f64.sqrt() + 3f64.sqrt()) / 2.0;
        let off = (3f64.sqrt() - 7f64.sqrt()) / 2.0;
        assert_abs_diff_eq!(a, m(2, &[diag, off, off, diag]), epsilon = 1e-13);
        assert_abs_diff_eq!(a[(0, 0)], 2.189, epsilon = 1e-3);
        assert_abs_diff_eq!(a[(0, 1)], -0.457, epsilon = 1e-3);
        assert_abs_diff_eq!(&a * &a, s, epsilon = 1e-12);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        assert!(symmetric_sqrt(&m(2, &[1.0, 2.0, 2.0, 1.0])).is_err());
        assert!(symmetric_sqrt(&m(2, &[1.0, 0.5, 0.0, 1.0])).is_err());
    }

    #[test]
    fn reduce_examples() {
        let a = reduce_a(&DMatrix::identity(3, 3));
        assert_eq!(a, m(2, &[1.0, 0.0, -1.0, 0.0, 1.0, -1.0]));
        let same = m(3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        assert_eq!(reduce_a(&same), DMatrix::zeros(2, 3));
        let r = reduce_a(&symmetric_sqrt(&m(2, &[5.0, -2.0, -2.0, 5.0])).unwrap());
        assert_abs_diff_eq!(r[(0, 0)], 7f64.sqrt(), epsilon = 1e-13);
        assert_abs_diff_eq!(r[(0, 1)], -(7f64.sqrt()), epsilon = 1e-13);
    }

    fn params(sigma: DMatrix<f64>, decays: Vec<f64>) -> GPParams {
        let k = decays.len();
        GPParams::new(nalgebra::DVector::zeros(k - 1), sigma, decays).unwrap()
    }

    #[test]
    fn iid_gamma_gives_equicorrelated_omega() {
        let s2 = 1.7;
        let p = params(DMatrix::identity(3, 3) * s2, vec![1.0, 0.8, 1.5]);
        let c = omega_cross_cov(0.0, &p, Arc::new(Exponential)).unwrap();
        assert_abs_diff_eq!(c, m(2, &[2.0 * s2, s2, s2, 2.0 * s2]), epsilon = 1e-12);
    }

    #[test]
    fn cross_cov_decays_and_separates() {
        let sigma = m(3, &[5.0, -2.0, 0.0, -2.0, 5.0, 3.0, 0.0, 3.0, 5.0]);
        let p = params(sigma.clone(), vec![1.0, 0.8, 1.5]);
        let far = omega_cross_cov(100.0 / 0.8, &p, Arc::new(Exponential)).unwrap();
        assert!(far.abs().max() < 1e-12);

        let eq = params(sigma, vec![0.7; 3]);
        let co = Coregionalization::new(&eq, Arc::new(Exponential)).unwrap();
        let c0 = co.omega_cross_cov(0.0);
        for lag in [0.1, 1.0, 3.3] {
            assert_abs_diff_eq!(co.omega_cross_cov(lag), &c0 * (-0.7f64 * lag).exp(), epsilon = 1e-12);
        }
        assert!(nalgebra::Cholesky::new(c0).is_some());
    }
}
