use std::f64::consts::PI;
use std::sync::Arc;

use itertools::Itertools;
use nalgebra::DMatrix;
use rand::Rng;
use statrs::statistics::{Data, OrderStatistics};

use crate::error::{Error, Result};
use crate::gpcore::{Coregionalization, CorrelationFunction};
use crate::linalg::{norm_cdf, Gaussian2, Mat2, Vec2};
use crate::logitn::logratio_corr_curve;
use crate::sampler::SampleStore;

/// Empirical quantile of `values` at level `q`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    Data::new(values.to_vec()).quantile(q)
}

/// Pointwise posterior mean and quantile bands of π.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbSummary {
    pub mean: DMatrix<f64>,
    /// `(level, T × K band)` in the order requested.
    pub bands: Vec<(f64, DMatrix<f64>)>,
}

pub fn probability_timeseries(store: &SampleStore, quantiles: &[f64]) -> Result<ProbSummary> {
    if store.prob_fields.is_empty() {
        return Err(Error::invalid("the store holds no probability fields"));
    }
    if let Some(q) = quantiles.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(Error::invalid(format!("quantile level {q} outside [0, 1]")));
    }
    let (n, k) = (store.n(), store.k);
    let draws = store.prob_fields.len();
    let mut mean = DMatrix::zeros(n, k);
    let mut bands: Vec<(f64, DMatrix<f64>)> = quantiles.iter().map(|&q| (q, DMatrix::zeros(n, k))).collect();
    let mut column = vec![0.0; draws];
    for t in 0..n {
        for j in 0..k {
            for (c, f) in column.iter_mut().zip(&store.prob_fields) {
                *c = f64::from(f[t * k + j]);
            }
            mean[(t, j)] = column.iter().sum::<f64>() / draws as f64;
            let mut data = Data::new(column.clone());
            for (q, band) in bands.iter_mut() {
                band[(t, j)] = data.quantile(*q);
            }
        }
        // Stored fields are single precision; restore exact row sums.
        let s: f64 = mean.row(t).sum();
        mean.row_mut(t).unscale_mut(s);
    }
    Ok(ProbSummary { mean, bands })
}

/// Density of the direction of `N(mean, cov)` at angle `theta`.
pub fn projected_normal_density(theta: f64, mean: &Vec2, cov: &Mat2) -> Result<f64> {
    let ridge = cov + Mat2::identity() * 1e-10 * cov.trace().abs().max(1e-300);
    let det = ridge.determinant();
    let inv = ridge
        .try_inverse()
        .filter(|_| det > 0.0)
        .ok_or_else(|| Error::Numerical("projected normal covariance is singular".into()))?;
    let u = Vec2::new(theta.cos(), theta.sin());
    let a = (u.transpose() * inv * u)[0];
    let b = (u.transpose() * inv * mean)[0];
    let c = (mean.transpose() * inv * mean)[0];
    let d = b / a.sqrt();
    let tail = (-0.5 * (c - d * d).max(0.0)).exp() * d * norm_cdf(d) * (2.0 * PI).sqrt();
    Ok(((-0.5 * c).exp() + tail) / (2.0 * PI * a * det.sqrt()))
}

/// Silverman bandwidth of a sample.
fn silverman(sample: &[f64]) -> f64 {
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let sd = (sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let iqr = quantile(sample, 0.75) - quantile(sample, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n.powf(-0.2);
    if h > 0.0 { h } else { 1e-3 }
}

/// Gaussian KDE on `r ≥ 0` with reflection at zero.
pub fn reflected_kde(sample: &[f64], grid: &[f64]) -> Vec<f64> {
    if sample.is_empty() {
        return vec![0.0; grid.len()];
    }
    let h = silverman(sample);
    let norm = 1.0 / (sample.len() as f64 * h * (2.0 * PI).sqrt());
    grid.iter()
        .map(|&r| {
            if r < 0.0 {
                return 0.0;
            }
            norm * sample
                .iter()
                .map(|&x| (-0.5 * ((r - x) / h).powi(2)).exp() + (-0.5 * ((r + x) / h).powi(2)).exp())
                .sum::<f64>()
        })
        .collect()
}

/// Posterior predictive densities per component: columns index components.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDensities {
    pub grid_theta: Vec<f64>,
    pub angle: DMatrix<f64>,
    pub grid_r: Vec<f64>,
    pub step: DMatrix<f64>,
}

pub fn predictive_densities<R: Rng + ?Sized>(
    store: &SampleStore,
    grid_r: &[f64],
    grid_theta: &[f64],
    mc_draws: usize,
    rng: &mut R,
) -> Result<PredictiveDensities> {
    if grid_r.is_empty() || grid_theta.is_empty() {
        return Err(Error::invalid("density grids must be nonempty"));
    }
    if store.is_empty() {
        return Err(Error::invalid("the store holds no draws"));
    }
    let k = store.k;
    let mut angle = DMatrix::zeros(grid_theta.len(), k);
    let mut step = DMatrix::zeros(grid_r.len(), k);
    let w = 1.0 / store.len() as f64;
    for j in 0..k {
        let mut lengths = Vec::with_capacity(store.len() * mc_draws);
        for d in &store.draws {
            let (xi, om) = (d.mixture.xi[j], d.mixture.omega_cov[j]);
            for (g, &th) in grid_theta.iter().enumerate() {
                angle[(g, j)] += w * projected_normal_density(th, &xi, &om)?;
            }
            let gauss = Gaussian2::new(xi, om)?;
            lengths.extend((0..mc_draws).map(|_| gauss.sample(rng).norm()));
        }
        for (g, v) in reflected_kde(&lengths, grid_r).into_iter().enumerate() {
            step[(g, j)] = v;
        }
    }
    Ok(PredictiveDensities { grid_theta: grid_theta.to_vec(), angle, grid_r: grid_r.to_vec(), step })
}

/// Posterior summary of one normalised log-ratio correlation curve.
#[derive(Debug, Clone, PartialEq)]
pub struct LogratioSummary {
    pub indices: [usize; 4],
    pub lags: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub fn logratio_report(
    store: &SampleStore,
    indices: [usize; 4],
    lags: &[f64],
    corr: Arc<dyn CorrelationFunction>,
) -> Result<LogratioSummary> {
    if store.is_empty() {
        return Err(Error::invalid("the store holds no draws"));
    }
    let [i, j, k, l] = indices;
    let curves: Vec<Vec<f64>> = store
        .draws
        .iter()
        .map(|d| logratio_corr_curve(&Coregionalization::new(&d.gp, corr.clone())?, i, j, k, l, lags))
        .try_collect()?;
    let at = |g: usize| curves.iter().map(|c| c[g]).collect::<Vec<_>>();
    let n = curves.len() as f64;
    Ok(LogratioSummary {
        indices,
        lags: lags.to_vec(),
        mean: (0..lags.len()).map(|g| at(g).iter().sum::<f64>() / n).collect(),
        lower: (0..lags.len()).map(|g| quantile(&at(g), 0.025)).collect(),
        upper: (0..lags.len()).map(|g| quantile(&at(g), 0.975)).collect(),
    })
}

/// Permutation `perm` with `estimate[perm[r]]` matched to `reference[r]`,
/// minimising the total squared distance. Exhaustive for K ≤ 6, greedy above.
pub fn match_components(estimate: &[Vec2], reference: &[Vec2]) -> Result<Vec<usize>> {
    let k = reference.len();
    if estimate.len() != k {
        return Err(Error::Shape(format!("{} estimated and {k} reference components", estimate.len())));
    }
    let cost = |r: usize, e: usize| (estimate[e] - reference[r]).norm_squared();
    if k <= 6 {
        return Ok((0..k)
            .permutations(k)
            .min_by(|a, b| {
                let ca: f64 = a.iter().enumerate().map(|(r, &e)| cost(r, e)).sum();
                let cb: f64 = b.iter().enumerate().map(|(r, &e)| cost(r, e)).sum();
                ca.total_cmp(&cb)
            })
            .expect("at least one permutation"));
    }
    let mut perm = vec![usize::MAX; k];
    let mut used = vec![false; k];
    let mut pairs: Vec<(usize, usize)> = (0..k).cartesian_product(0..k).collect();
    pairs.sort_by(|a, b| cost(a.0, a.1).total_cmp(&cost(b.0, b.1)));
    for (r, e) in pairs {
        if perm[r] == usize::MAX && !used[e] {
            perm[r] = e;
            used[e] = true;
        }
    }
    Ok(perm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpcore::{Exponential, GPParams};
    use crate::sampler::{Draw, MixtureParams};
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store(mixtures: Vec<MixtureParams>, fields: Vec<Vec<f32>>, n: usize) -> SampleStore {
        let k = mixtures[0].k();
        let gp = GPParams::new(
            DVector::zeros(k - 1),
            DMatrix::from_fn(k, k, |i, j| if i == j { 2.0 } else { 0.5 }),
            (0..k).map(|d| 0.5 + d as f64).collect(),
        )
        .unwrap();
        SampleStore {
            k,
            times: (0..n).map(|t| t as f64).collect(),
            observed: vec![true; n],
            draws: mixtures
                .into_iter()
                .enumerate()
                .map(|(i, mixture)| Draw { iteration: i, mixture, gp: gp.clone(), loglik: 0.0 })
                .collect(),
            labels: Vec::new(),
            prob_fields: fields,
            acceptance: Vec::new(),
            hyper_acceptance: 0.0,
        }
    }

    fn trapezoid(x: &[f64], y: impl Fn(usize) -> f64) -> f64 {
        x.windows(2).enumerate().map(|(i, w)| 0.5 * (w[1] - w[0]) * (y(i) + y(i + 1))).sum()
    }

    #[test]
    fn single_draw_bands_collapse() {
        let m = MixtureParams::new(vec![Vec2::zeros(); 2], vec![Mat2::identity(); 2]).unwrap();
        let s = store(vec![m], vec![vec![0.25, 0.75, 0.6, 0.4]], 2);
        let p = probability_timeseries(&s, &[0.025, 0.975]).unwrap();
        for (_, band) in &p.bands {
            assert!((band - &p.mean).amax() < 1e-7);
        }
        for t in 0..2 {
            assert!((p.mean.row(t).sum() - 1.0).abs() < 1e-10);
        }
        assert!(probability_timeseries(&s, &[1.5]).is_err());
    }

    #[test]
    fn isotropic_angle_density_is_uniform() {
        for g in 0..50 {
            let th = 2.0 * PI * g as f64 / 50.0;
            let f = projected_normal_density(th, &Vec2::zeros(), &Mat2::identity()).unwrap();
            assert!((f - 1.0 / (2.0 * PI)).abs() < 1e-10);
        }
    }

    #[test]
    fn angle_density_integrates_and_matches_monte_carlo() {
        let mean = Vec2::new(1.0, -0.5);
        let cov = Mat2::new(2.0, 0.6, 0.6, 0.7);
        let grid: Vec<f64> = (0..=720).map(|g| 2.0 * PI * g as f64 / 720.0).collect();
        let f: Vec<f64> = grid.iter().map(|&t| projected_normal_density(t, &mean, &cov).unwrap()).collect();
        assert!((trapezoid(&grid, |i| f[i]) - 1.0).abs() < 1e-3);
        assert!((f[0] - f[720]).abs() < 1e-8);
        // Fraction of directions in the first quadrant.
        let g = Gaussian2::new(mean, cov).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let hits = (0..n).filter(|_| {
            let v = g.sample(&mut rng);
            v[0] > 0.0 && v[1] > 0.0
        });
        let p_mc = hits.count() as f64 / n as f64;
        let p = trapezoid(&grid[..=180], |i| f[i]);
        assert!((p - p_mc).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt() + 1e-4, "{p} {p_mc}");
    }

    #[test]
    fn far_mean_peaks_where_expected() {
        let m = MixtureParams::new(vec![Vec2::new(10.0, 0.0); 2], vec![Mat2::identity(); 2]).unwrap();
        let s = store(vec![m.clone(), m], Vec::new(), 1);
        let theta: Vec<f64> = (0..720).map(|g| 2.0 * PI * g as f64 / 720.0).collect();
        let r: Vec<f64> = (0..=400).map(|g| g as f64 * 0.05).collect();
        let d = predictive_densities(&s, &r, &theta, 20_000, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let amax = (0..720).max_by(|&a, &b| d.angle[(a, 0)].total_cmp(&d.angle[(b, 0)])).unwrap();
        assert_eq!(amax, 0);
        let rmax = (0..r.len()).max_by(|&a, &b| d.step[(a, 0)].total_cmp(&d.step[(b, 0)])).unwrap();
        assert!((r[rmax] - 10.0).abs() < 0.3, "{}", r[rmax]);
        assert!(d.step.iter().all(|&v| v >= 0.0));
        assert!((trapezoid(&r, |i| d.step[(i, 0)]) - 1.0).abs() < 0.02);
    }

    #[test]
    fn kde_reflection_keeps_mass_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sample: Vec<f64> = (0..5000).map(|_| rng.random::<f64>().powi(2)).collect();
        let grid: Vec<f64> = (0..=300).map(|g| g as f64 * 0.01).collect();
        let f = reflected_kde(&sample, &grid);
        assert!((trapezoid(&grid, |i| f[i]) - 1.0).abs() < 0.02);
    }

    #[test]
    fn logratio_bands() {
        let m = MixtureParams::new(vec![Vec2::zeros(); 3], vec![Mat2::identity(); 3]).unwrap();
        let s = store(vec![m], Vec::new(), 1);
        let lags = [0.0, 0.5, 1.0, 4.0];
        let r = logratio_report(&s, [0, 0, 2, 2], &lags, Arc::new(Exponential)).unwrap();
        assert!((r.mean[0] - 1.0).abs() < 1e-12);
        assert_eq!(r.lower, r.mean);
        assert_eq!(r.upper, r.mean);
        assert!(r.mean.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn component_matching() {
        let reference = [Vec2::new(0.0, 0.0), Vec2::new(3.0, 0.0), Vec2::new(0.0, -3.0)];
        let est = [Vec2::new(0.1, -2.9), Vec2::new(-0.2, 0.1), Vec2::new(2.8, 0.3)];
        assert_eq!(match_components(&est, &reference).unwrap(), vec![1, 2, 0]);
        let big: Vec<Vec2> = (0..8).map(|i| Vec2::new(i as f64 * 5.0, 0.0)).collect();
        let shuffled: Vec<Vec2> = [3, 1, 7, 0, 2, 6, 5, 4].iter().map(|&i| big[i] + Vec2::new(0.1, 0.0)).collect();
        let perm = match_components(&shuffled, &big).unwrap();
        for (r, &e) in perm.iter().enumerate() {
            assert!((shuffled[e] - big[r]).norm() < 0.2);
        }
    }
}
