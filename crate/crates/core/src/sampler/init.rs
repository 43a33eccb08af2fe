use nalgebra::DMatrix;
use rand::Rng;

use super::{MixtureParams, Priors};
use crate::error::Result;
use crate::linalg::{Mat2, Vec2};

/// Lloyd's algorithm with k-means++ seeding on the rows of `points`.
pub fn kmeans<R: Rng + ?Sized>(points: &DMatrix<f64>, k: usize, max_iter: usize, rng: &mut R) -> Vec<usize> {
    let n = points.nrows();
    if n == 0 || k == 0 {
        return vec![0; n];
    }
    let dist2 = |i: usize, c: &DMatrix<f64>, j: usize| -> f64 {
        (0..points.ncols()).map(|f| (points[(i, f)] - c[(j, f)]).powi(2)).sum()
    };
    let mut centers = DMatrix::zeros(k, points.ncols());
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from(&points.row(first));
    let mut best = vec![f64::INFINITY; n];
    for j in 1..k {
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(dist2(i, &centers, j - 1));
        }
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, b) in best.iter().enumerate() {
                if u < *b {
                    pick = i;
                    break;
                }
                u -= b;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(j).copy_from(&points.row(pick));
    }
    let mut labels = vec![usize::MAX; n];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let mut arg = 0;
            let mut min = f64::INFINITY;
            for j in 0..k {
                let d = dist2(i, &centers, j);
                if d < min {
                    min = d;
                    arg = j;
                }
            }
            if *label != arg {
                *label = arg;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = DMatrix::<f64>::zeros(k, points.ncols());
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for f in 0..points.ncols() {
                sums[(l, f)] += points[(i, f)];
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                for f in 0..points.ncols() {
                    centers[(j, f)] = sums[(j, f)] / counts[j] as f64;
                }
            }
        }
    }
    labels
}

/// Labels from k-means on (standardised step length, cos θ, sin θ) and
/// per-cluster moments shrunk towards the Ω prior scale.
pub(crate) fn initial_mixture<R: Rng + ?Sized>(
    y: &[Vec2],
    k: usize,
    priors: &Priors,
    rng: &mut R,
) -> Result<(Vec<usize>, MixtureParams)> {
    let n = y.len();
    let r: Vec<f64> = y.iter().map(|v| v.norm()).collect();
    let mean_r = r.iter().sum::<f64>() / n as f64;
    let sd_r = (r.iter().map(|x| (x - mean_r).powi(2)).sum::<f64>() / n as f64).sqrt();
    let sd_r = if sd_r > 0.0 { sd_r } else { 1.0 };
    let features = DMatrix::from_fn(n, 3, |i, f| match f {
        0 => (r[i] - mean_r) / sd_r,
        1 => y[i][1].atan2(y[i][0]).cos(),
        _ => y[i][1].atan2(y[i][0]).sin(),
    });
    let labels = kmeans(&features, k, 100, rng);
    let mut xi = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    for j in 0..k {
        let members: Vec<&Vec2> = y.iter().zip(&labels).filter(|(_, &l)| l == j).map(|(v, _)| v).collect();
        let c = members.len() as f64;
        let mean = if members.is_empty() {
            priors.xi_mean
        } else {
            members.iter().fold(Vec2::zeros(), |a, v| a + *v) / c
        };
        let mut scatter = priors.omega_iw_scale;
        for v in &members {
            let d = *v - mean;
            scatter += d * d.transpose();
        }
        let cov: Mat2 = scatter / (c + priors.omega_iw_df + 3.0);
        xi.push(mean);
        covs.push(cov);
    }
    Ok((labels, MixtureParams::new(xi, covs)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn separates_obvious_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = DMatrix::from_fn(60, 2, |i, f| {
            let c = (i / 20) as f64 * 10.0;
            c + if f == 0 { (i % 5) as f64 * 0.1 } else { (i % 3) as f64 * 0.1 }
        });
        let labels = kmeans(&pts, 3, 50, &mut rng);
        for g in 0..3 {
            let first = labels[g * 20];
            assert!(labels[g * 20..(g + 1) * 20].iter().all(|&l| l == first));
        }
        let mut distinct = labels.clone();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct.len(), 3);
    }

    #[test]
    fn initial_mixture_is_valid_and_seeded() {
        let y: Vec<Vec2> = (0..50).map(|i| Vec2::new((i % 7) as f64, -((i % 4) as f64))).collect();
        let priors = Priors::paper_default(3);
        let a = initial_mixture(&y, 3, &priors, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = initial_mixture(&y, 3, &priors, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.k(), 3);
        // More clusters than distinct points still yields SPD covariances.
        let few = vec![Vec2::new(1.0, 0.0); 5];
        let (_, m) = initial_mixture(&few, 4, &priors, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(m.k(), 4);
    }
}
