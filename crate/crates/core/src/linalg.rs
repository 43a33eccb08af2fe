//! Small dense linear-algebra helpers shared by the GP and sampler code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix2, Vector2};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

const JITTERS: [f64; 2] = [1e-10, 1e-8];

/// Cholesky factorisation with the jitter ladder used throughout the crate:
/// plain attempt, then `1e-10` and `1e-8` (relative to the mean diagonal) added
/// to the diagonal. A third failure is an error.
pub fn cholesky_jittered(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let n = m.nrows();
    let scale = (m.trace() / n.max(1) as f64).abs().max(f64::MIN_POSITIVE);
    for jitter in JITTERS {
        let mut jittered = m.clone();
        for i in 0..n {
            jittered[(i, i)] += jitter * scale;
        }
        if let Some(c) = Cholesky::new(jittered) {
            return Ok(c);
        }
    }
    Err(Error::Numerical(format!("{what} is not positive definite")))
}

/// log-determinant of `L L'` given the lower Cholesky factor.
pub fn chol_log_det(l: &DMatrix<f64>) -> f64 {
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn standard_normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Draw `W ~ Wishart(df, S S')` from the lower Cholesky factor `S` of the scale.
pub fn sample_wishart<R: Rng + ?Sized>(df: f64, scale_chol: &DMatrix<f64>, rng: &mut R) -> DMatrix<f64> {
    let p = scale_chol.nrows();
    let mut b = DMatrix::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(df - i as f64).expect("wishart degrees of freedom");
        b[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            b[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let lb = scale_chol * b;
    &lb * lb.transpose()
}

/// Draw `Σ ~ IW(df, Ψ)`, i.e. `Σ⁻¹ ~ Wishart(df, Ψ⁻¹)`.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(
    df: f64,
    scale: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let scale_inv = cholesky_jittered(scale, "inverse-Wishart scale")?.inverse();
    let chol = cholesky_jittered(&scale_inv, "inverse-Wishart scale inverse")?;
    let w = sample_wishart(df, &chol.l(), rng);
    let mut sigma = cholesky_jittered(&w, "Wishart draw")?.inverse();
    symmetrize(&mut sigma);
    Ok(sigma)
}

pub fn mat2_to_dmatrix(m: &Mat2) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]])
}

pub fn dmatrix_to_mat2(m: &DMatrix<f64>) -> Mat2 {
    Mat2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
}

/// Bivariate normal with cached precision and normalising constant.
#[derive(Debug, Clone)]
pub struct Gaussian2 {
    mean: Vec2,
    precision: Mat2,
    chol: Mat2,
    log_norm: f64,
}

impl Gaussian2 {
    pub fn new(mean: Vec2, cov: Mat2) -> Result<Self> {
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::Numerical("2x2 covariance is not positive definite".into()))?;
        let l = chol.l();
        let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
        let precision = chol.inverse();
        Ok(Gaussian2 {
            mean,
            precision,
            chol: l,
            log_norm: -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln(),
        })
    }

    pub fn ln_pdf(&self, y: &Vec2) -> f64 {
        let d = y - self.mean;
        self.log_norm - 0.5 * d.dot(&(self.precision * d))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec2 {
        let e = Vec2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        self.mean + self.chol * e
    }
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// log of the standard normal CDF, accurate in the far left tail.
pub fn ln_norm_cdf(x: f64) -> f64 {
    if x > -30.0 {
        norm_cdf(x).ln()
    } else {
        // Mills-ratio asymptotics.
        let x2 = x * x;
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

/// Numerically stable log-sum-exp.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn jitter_rescues_semidefinite_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(cholesky_jittered(&m, "test").is_ok());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(cholesky_jittered(&bad, "test"), Err(Error::Numerical(_))));
    }

    #[test]
    fn gaussian2_matches_closed_form() {
        let g = Gaussian2::new(Vec2::new(1.0, -1.0), Mat2::new(2.0, 0.5, 0.5, 1.0)).unwrap();
        let det: f64 = 2.0 - 0.25;
        let expected = -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln();
        assert!((g.ln_pdf(&Vec2::new(1.0, -1.0)) - expected).abs() < 1e-14);
    }

    #[test]
    fn inverse_wishart_mean() {
        // E[Σ] = Ψ / (df - p - 1)
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let n = 40_000;
        let mut acc = DMatrix::zeros(2, 2);
        for _ in 0..n {
            acc += sample_inverse_wishart(8.0, &psi, &mut rng).unwrap();
        }
        acc /= n as f64;
        let expected = &psi / 5.0;
        assert!((acc - expected).abs().max() < 0.01);
    }

    #[test]
    fn ln_norm_cdf_is_continuous_at_switch() {
        let a = ln_norm_cdf(-29.999_999);
        let b = ln_norm_cdf(-30.000_001);
        assert!((a - b).abs() < 1e-4);
        assert!((ln_norm_cdf(0.0) - 0.5f64.ln()).abs() < 1e-15);
    }
}
