//! Pólya-Gamma augmented single-site Gibbs update of the ω field.
//!
//! For category `k` the multinomial likelihood of `z_t` is a Bernoulli in
//! `ψ = ω_{t,k} - c_{t,k}` with `c_{t,k} = log Σ_{j≠k} exp(ω̃_{t,j})`, so that
//! given `λ ~ PG(1, ψ)` the pseudo-likelihood of `ω_{t,k}` is Gaussian. The
//! NNGP prior enters through the innovation residuals `r_s` of `t` and its
//! children, which are kept in sync after every scalar move.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gpcore::NngpFactor;
use crate::pg::pg_sample_one;

/// Current ω field with its prior mean, PG auxiliaries and NNGP residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentField {
    omega: DMatrix<f64>,
    pg_aux: DMatrix<f64>,
    mean: DMatrix<f64>,
    residuals: DMatrix<f64>,
}

impl LatentField {
    pub fn new(omega: DMatrix<f64>, mean: DMatrix<f64>, factor: &NngpFactor) -> Result<Self> {
        if omega.shape() != mean.shape() || omega.nrows() != factor.len() || omega.ncols() != factor.dim() {
            return Err(Error::Shape(format!(
                "ω is {}x{}, mean {}x{}, factor {}x{}",
                omega.nrows(),
                omega.ncols(),
                mean.nrows(),
                mean.ncols(),
                factor.len(),
                factor.dim()
            )));
        }
        let residuals = factor.residuals(&(&omega - &mean));
        let pg_aux = DMatrix::from_element(omega.nrows(), omega.ncols(), 0.25);
        Ok(LatentField { omega, pg_aux, mean, residuals })
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn pg_aux(&self) -> &DMatrix<f64> {
        &self.pg_aux
    }

    pub fn mean(&self) -> &DMatrix<f64> {
        &self.mean
    }

    pub fn residuals(&self) -> &DMatrix<f64> {
        &self.residuals
    }

    /// Swap in a new prior mean and factor (after a hyperparameter move).
    pub fn set_prior(&mut self, mean: DMatrix<f64>, factor: &NngpFactor) {
        self.residuals = factor.residuals(&(&self.omega - &mean));
        self.mean = mean;
    }
}

fn other_logsumexp(row: &[f64], k: usize) -> f64 {
    // row holds ω̃_{t,1..K-1}; the reference logit is 0.
    let mut max: f64 = 0.0;
    for (j, &v) in row.iter().enumerate() {
        if j != k && v > max {
            max = v;
        }
    }
    let mut s = (-max).exp();
    for (j, &v) in row.iter().enumerate() {
        if j != k {
            s += (v - max).exp();
        }
    }
    max + s.ln()
}

/// One sweep over time (increasing) and categories (random order). With
/// `labels = None` the likelihood is dropped and the sweep targets the NNGP
/// prior.
pub fn update_omega_field<R: Rng + ?Sized>(
    field: &mut LatentField,
    factor: &NngpFactor,
    labels: Option<&[usize]>,
    rng: &mut R,
) -> Result<()> {
    let n = factor.len();
    let d = factor.dim();
    if field.omega.nrows() != n || field.omega.ncols() != d {
        return Err(Error::Shape("ω field does not match the factor".into()));
    }
    if let Some(z) = labels {
        if z.len() != n {
            return Err(Error::Shape(format!("{} labels for {n} time points", z.len())));
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(rng);
    let mut row = vec![0.0; d];
    for t in 0..n {
        for &k in &order {
            let x_old = field.omega[(t, k)];
            let own = factor.conditional(t);
            let mut q = own.precision[(k, k)];
            let mut h = 0.0;
            for b in 0..d {
                h -= own.precision[(k, b)] * field.residuals[(t, b)];
            }
            for &(s, j) in factor.children(t) {
                let c = factor.conditional(s);
                let col = j * d + k;
                for a in 0..d {
                    let wa = c.weights[(a, col)];
                    if wa == 0.0 {
                        continue;
                    }
                    for b in 0..d {
                        let pab = c.precision[(a, b)];
                        q += wa * pab * c.weights[(b, col)];
                        h += wa * pab * field.residuals[(s, b)];
                    }
                }
            }
            let (lin, lam) = match labels {
                Some(z) => {
                    for (j, r) in row.iter_mut().enumerate() {
                        *r = field.omega[(t, j)];
                    }
                    let offset = other_logsumexp(&row, k);
                    if !offset.is_finite() {
                        return Err(Error::Numerical(format!("non-finite logit offset at time index {t}")));
                    }
                    let psi = x_old - offset;
                    let lam = pg_sample_one(psi, rng);
                    field.pg_aux[(t, k)] = lam;
                    let kappa = if z[t] == k { 0.5 } else { -0.5 };
                    (kappa - lam * psi, lam)
                }
                None => (0.0, 0.0),
            };
            let prec = q + lam;
            let noise: f64 = rng.sample(StandardNormal);
            let delta = (h + lin) / prec + noise / prec.sqrt();
            if !delta.is_finite() {
                return Err(Error::Numerical(format!("non-finite ω update at time index {t}")));
            }
            field.omega[(t, k)] += delta;
            field.residuals[(t, k)] += delta;
            for &(s, j) in factor.children(t) {
                let c = factor.conditional(s);
                let col = j * d + k;
                for a in 0..d {
                    field.residuals[(s, a)] -= delta * c.weights[(a, col)];
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpcore::{build_nngp_factor, Coregionalization, Exponential, GPParams};
    use crate::logitn::softmax_reduced;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn factor(times: &[f64], sigma: DMatrix<f64>, m: usize) -> NngpFactor {
        let k = sigma.nrows();
        let decays = [1.0, 0.8, 1.5][..k].to_vec();
        let p = GPParams::new(DVector::zeros(k - 1), sigma, decays).unwrap();
        let co = Coregionalization::new(&p, Arc::new(Exponential)).unwrap();
        build_nngp_factor(times, &co, m).unwrap()
    }

    #[test]
    fn residuals_stay_in_sync() {
        let times: Vec<f64> = (0..12).map(|i| i as f64 * 0.3).collect();
        let sigma = DMatrix::from_row_slice(3, 3, &[5.0, -2.0, 0.0, -2.0, 5.0, 3.0, 0.0, 3.0, 5.0]);
        let f = factor(&times, sigma, 4);
        let mean = DMatrix::from_fn(12, 2, |i, j| 0.1 * i as f64 - j as f64);
        let mut field = LatentField::new(DMatrix::zeros(12, 2), mean.clone(), &f).unwrap();
        let z: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            update_omega_field(&mut field, &f, Some(&z), &mut rng).unwrap();
        }
        let fresh = f.residuals(&(field.omega() - &mean));
        assert!((fresh - field.residuals()).abs().max() < 1e-10);
        assert!(field.pg_aux().iter().all(|&v| v > 0.0 && v.is_finite()));
        assert!(field.omega().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn prior_only_sweeps_reproduce_nngp_prior() {
        let times = [0.0, 0.4, 0.9, 1.2, 2.0];
        let sigma = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.3, 0.0, 0.3, 1.5]);
        let f = factor(&times, sigma, 2);
        let mean = DMatrix::from_fn(5, 2, |i, j| i as f64 * 0.2 - j as f64 * 0.5);
        let mut field = LatentField::new(mean.clone(), mean.clone(), &f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // Reference: direct ancestral draws.
        let n = 30_000;
        let mut gibbs = Vec::with_capacity(n);
        let mut direct = Vec::with_capacity(n);
        for _ in 0..n {
            update_omega_field(&mut field, &f, None, &mut rng).unwrap();
            gibbs.push((field.omega()[(4, 0)], field.omega()[(1, 1)]));
            let d = crate::gpcore::nngp_sample_prior(&mean, &f, &mut rng).unwrap();
            direct.push((d[(4, 0)], d[(1, 1)]));
        }
        let stats = |v: &[(f64, f64)]| {
            let m0 = v.iter().map(|x| x.0).sum::<f64>() / n as f64;
            let m1 = v.iter().map(|x| x.1).sum::<f64>() / n as f64;
            let c = v.iter().map(|x| (x.0 - m0) * (x.1 - m1)).sum::<f64>() / n as f64;
            let v0 = v.iter().map(|x| (x.0 - m0).powi(2)).sum::<f64>() / n as f64;
            (m0, m1, v0, c)
        };
        let (a0, a1, av, ac) = stats(&gibbs);
        let (b0, b1, bv, bc) = stats(&direct);
        // Gibbs draws are autocorrelated; allow a generous multiple of the iid SE.
        let se = (bv / n as f64).sqrt();
        assert!((a0 - b0).abs() < 12.0 * se, "{a0} vs {b0}");
        assert!((a1 - b1).abs() < 12.0 * se, "{a1} vs {b1}");
        assert!((av - bv).abs() < 0.1 * bv, "{av} vs {bv}");
        assert!((ac - bc).abs() < 0.1 * bv, "{ac} vs {bc}");
    }

    /// Posterior of a single logistic intercept on a grid.
    fn grid_posterior(prior_var: f64, success: bool) -> (Vec<f64>, Vec<f64>) {
        let h = 1e-3;
        let xs: Vec<f64> = (0..40_001).map(|i| -20.0 + i as f64 * h).collect();
        let dens: Vec<f64> = xs
            .iter()
            .map(|&x| {
                let p = 1.0 / (1.0 + (-x).exp());
                let lik = if success { p } else { 1.0 - p };
                lik * (-0.5 * x * x / prior_var).exp()
            })
            .collect();
        let mut cdf = Vec::with_capacity(xs.len());
        let mut acc = 0.0;
        for i in 0..xs.len() {
            if i > 0 {
                acc += 0.5 * (dens[i] + dens[i - 1]) * h;
            }
            cdf.push(acc);
        }
        let total = acc;
        (xs, cdf.into_iter().map(|c| c / total).collect())
    }

    #[test]
    fn single_logistic_intercept_matches_grid_posterior() {
        // K=2, one time point: ω ~ N(0, 2σ²) with σ² = 2, one observation z = 1.
        let sigma = DMatrix::identity(2, 2) * 2.0;
        let f = factor(&[0.0], sigma, 1);
        let mut field = LatentField::new(DMatrix::zeros(1, 1), DMatrix::zeros(1, 1), &f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut draws = Vec::with_capacity(20_000);
        for i in 0..100_500 {
            update_omega_field(&mut field, &f, Some(&[0]), &mut rng).unwrap();
            if i >= 500 && i % 5 == 0 {
                draws.push(field.omega()[(0, 0)]);
            }
        }
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (xs, cdf) = grid_posterior(4.0, true);
        let n = draws.len() as f64;
        let mut ks: f64 = 0.0;
        for (i, x) in draws.iter().enumerate() {
            let pos = xs.partition_point(|g| g < x).min(xs.len() - 1);
            let f = cdf[pos];
            ks = ks.max((f - i as f64 / n).abs()).max((f - (i + 1) as f64 / n).abs());
        }
        assert!(ks < 0.02, "KS distance {ks}");
    }

    #[test]
    fn three_categories_match_grid_means() {
        // K=3, one time point: 2-D grid oracle for E[ω | z].
        let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.0, 0.3, 1.5, 0.2, 0.0, 0.2, 0.8]);
        let f = factor(&[0.0], sigma, 1);
        let cov = f.conditional(0).cov.clone();
        let prec = cov.clone().try_inverse().unwrap();
        for z in 0..3 {
            let h = 0.01;
            let (mut w, mut m0, mut m1) = (0.0, 0.0, 0.0);
            for i in 0..1600 {
                for j in 0..1600 {
                    let x = [-8.0 + i as f64 * h, -8.0 + j as f64 * h];
                    let q = prec[(0, 0)] * x[0] * x[0] + 2.0 * prec[(0, 1)] * x[0] * x[1] + prec[(1, 1)] * x[1] * x[1];
                    let p = softmax_reduced(&x).unwrap()[z] * (-0.5 * q).exp();
                    w += p;
                    m0 += p * x[0];
                    m1 += p * x[1];
                }
            }
            let (e0, e1) = (m0 / w, m1 / w);
            let mut field = LatentField::new(DMatrix::zeros(1, 2), DMatrix::zeros(1, 2), &f).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(10 + z as u64);
            let (mut s0, mut s1, mut cnt) = (0.0, 0.0, 0.0);
            for i in 0..60_000 {
                update_omega_field(&mut field, &f, Some(&[z]), &mut rng).unwrap();
                if i >= 1000 {
                    s0 += field.omega()[(0, 0)];
                    s1 += field.omega()[(0, 1)];
                    cnt += 1.0;
                }
            }
            assert!((s0 / cnt - e0).abs() < 0.03, "z={z}: {} vs {e0}", s0 / cnt);
            assert!((s1 / cnt - e1).abs() < 0.03, "z={z}: {} vs {e1}", s1 / cnt);
        }
    }
}
