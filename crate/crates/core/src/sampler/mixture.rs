use rand::Rng;
use rand_distr::StandardNormal;

use super::{MixtureParams, Priors};
use crate::error::{Error, Result};
use crate::linalg::{dmatrix_to_mat2, mat2_to_dmatrix, sample_inverse_wishart, Mat2, Vec2};

fn invert2(m: &Mat2, what: &str) -> Result<Mat2> {
    m.try_inverse().ok_or_else(|| Error::Numerical(format!("{what} is singular")))
}

/// Gibbs update of every `(ξ_k, Ω_k)` given the labels: first
/// `ξ_k | Ω_k, y` (normal), then `Ω_k | ξ_k, y` (inverse Wishart). Components
/// without data are drawn from the prior.
pub fn update_mixture<R: Rng + ?Sized>(
    y: &[Vec2],
    z: &[usize],
    priors: &Priors,
    current: &MixtureParams,
    rng: &mut R,
) -> Result<MixtureParams> {
    if y.len() != z.len() {
        return Err(Error::Shape(format!("{} increments but {} labels", y.len(), z.len())));
    }
    let k = current.k();
    let mut count = vec![0usize; k];
    let mut sum = vec![Vec2::zeros(); k];
    for (yt, &zt) in y.iter().zip(z) {
        if zt >= k {
            return Err(Error::invalid(format!("label {zt} out of range for K = {k}")));
        }
        count[zt] += 1;
        sum[zt] += yt;
    }
    let prior_prec = invert2(&priors.xi_cov, "prior covariance of ξ")?;
    let prior_lin = prior_prec * priors.xi_mean;
    let mut xi = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    for j in 0..k {
        let omega_inv = invert2(&current.omega_cov[j], "Ω")?;
        let prec = prior_prec + omega_inv * count[j] as f64;
        let cov = invert2(&prec, "posterior precision of ξ")?;
        let cov = 0.5 * (cov + cov.transpose());
        let mean = cov * (prior_lin + omega_inv * sum[j]);
        let l = cov
            .cholesky()
            .ok_or_else(|| Error::Numerical("posterior covariance of ξ is not positive definite".into()))?
            .l();
        let e = Vec2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        let x = mean + l * e;

        let mut scatter = priors.omega_iw_scale;
        for (yt, _) in y.iter().zip(z).filter(|(_, &zt)| zt == j) {
            let d = yt - x;
            scatter += d * d.transpose();
        }
        let draw = sample_inverse_wishart(priors.omega_iw_df + count[j] as f64, &mat2_to_dmatrix(&scatter), rng)?;
        xi.push(x);
        covs.push(dmatrix_to_mat2(&draw));
    }
    MixtureParams::new(xi, covs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn start(k: usize) -> MixtureParams {
        MixtureParams::new(vec![Vec2::zeros(); k], vec![Mat2::identity(); k]).unwrap()
    }

    #[test]
    fn empty_component_draws_from_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let priors = Priors { omega_iw_df: 6.0, ..Priors::paper_default(2) };
        let n = 10_000;
        let mut xs = Vec::with_capacity(n);
        let mut om = Vec::with_capacity(n);
        let mut cur = start(1);
        for _ in 0..n {
            cur = update_mixture(&[], &[], &priors, &cur, &mut rng).unwrap();
            xs.push(cur.xi[0][0]);
            om.push(cur.omega_cov[0][(0, 0)]);
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 * (100.0 / n as f64).sqrt());
        assert!((var - 100.0).abs() < 5.0, "{var}");
        // IW(6, I) in 2D: E[Ω_11] = 1 / (6 - 3).
        let om_mean = om.iter().sum::<f64>() / n as f64;
        let om_sd = (om.iter().map(|x| (x - om_mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((om_mean - 1.0 / 3.0).abs() < 4.0 * om_sd / (n as f64).sqrt(), "{om_mean}");
    }

    #[test]
    fn concentrates_on_data_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = crate::linalg::Gaussian2::new(Vec2::new(3.0, 0.0), Mat2::identity()).unwrap();
        let y: Vec<Vec2> = (0..10_000).map(|_| g.sample(&mut rng)).collect();
        let z = vec![1; y.len()];
        let priors = Priors::paper_default(2);
        let mut cur = start(2);
        let mut acc = Vec2::zeros();
        for i in 0..60 {
            cur = update_mixture(&y, &z, &priors, &cur, &mut rng).unwrap();
            if i >= 10 {
                acc += cur.xi[1];
            }
        }
        let post = acc / 50.0;
        assert!((post - Vec2::new(3.0, 0.0)).norm() < 0.05, "{post}");
        assert!((cur.omega_cov[1] - Mat2::identity()).abs().max() < 0.1);
    }

    #[test]
    fn tight_prior_pins_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let priors = Priors { xi_mean: Vec2::new(1.0, -2.0), xi_cov: Mat2::identity() * 1e-12, ..Priors::paper_default(2) };
        let y = vec![Vec2::new(40.0, 40.0); 50];
        let z = vec![0; 50];
        let out = update_mixture(&y, &z, &priors, &start(2), &mut rng).unwrap();
        assert!((out.xi[0] - priors.xi_mean).norm() < 1e-4);
    }

    #[test]
    fn rejects_bad_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let priors = Priors::paper_default(2);
        assert!(update_mixture(&[Vec2::zeros()], &[2], &priors, &start(2), &mut rng).is_err());
        assert!(update_mixture(&[Vec2::zeros()], &[], &priors, &start(2), &mut rng).is_err());
    }
}
