//! Metropolis imputation of missing grid coordinates.
//!
//! A coordinate `s_g` enters the increments `y_{g-2}, y_{g-1}, y_g` directly
//! or through the bearings of the displacements that touch it (and any later
//! bearings carried across zero-length displacements). Each missing point gets
//! a Gaussian random-walk proposal whose target is the label-marginal mixture
//! density of those increments.

use rand::Rng;
use rand_distr::StandardNormal;

use super::labels::component_densities;
use super::{ChainConfig, MixtureParams};
use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, Gaussian2, Vec2};
use crate::logitn::ProbField;
use crate::trajectory::{decompose_coords, heading, rotation_matrix};

/// Current completion of a gappy coordinate sequence.
#[derive(Debug, Clone)]
pub struct Imputation {
    coords: Vec<Vec2>,
    bearings: Vec<f64>,
    missing: Vec<usize>,
    log_scales: Vec<f64>,
    visits: Vec<usize>,
    target: f64,
    decay: f64,
    adapt: bool,
    pub accepted: usize,
    pub proposed: usize,
}

impl Imputation {
    /// Linear interpolation in grid index between observed neighbours. The
    /// first two and the last coordinates must be observed. The initial
    /// proposal scale defaults to half the median observed displacement.
    pub fn new(coords: &[Option<Vec2>], config: &ChainConfig, initial_scale: Option<f64>) -> Result<Self> {
        let n = coords.len();
        if n < 3 || coords[0].is_none() || coords[1].is_none() || coords[n - 1].is_none() {
            return Err(Error::invalid("imputation needs the first two and the last coordinates observed"));
        }
        let mut full = Vec::with_capacity(n);
        let mut missing = Vec::new();
        let mut last_obs = 0;
        for i in 0..n {
            match coords[i] {
                Some(c) => {
                    full.push(c);
                    last_obs = i;
                }
                None => {
                    let next = (i + 1..n).find(|&j| coords[j].is_some()).expect("last coordinate observed");
                    let (a, b) = (coords[last_obs].unwrap(), coords[next].unwrap());
                    let w = (i - last_obs) as f64 / (next - last_obs) as f64;
                    full.push(a + (b - a) * w);
                    missing.push(i);
                }
            }
        }
        let scale = match initial_scale {
            Some(s) if s >= 0.0 => s,
            Some(s) => return Err(Error::invalid(format!("imputation scale must be nonnegative, got {s}"))),
            None => {
                let mut steps: Vec<f64> = coords
                    .windows(2)
                    .filter_map(|w| match (w[0], w[1]) {
                        (Some(a), Some(b)) => Some((b - a).norm()),
                        _ => None,
                    })
                    .collect();
                steps.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let med = steps.get(steps.len() / 2).copied().unwrap_or(1.0);
                if med > 0.0 { 0.5 * med } else { 1.0 }
            }
        };
        let bearings = decompose_coords(&full.iter().map(|c| Some(*c)).collect::<Vec<_>>())
            .bearings
            .into_iter()
            .map(|b| b.expect("complete track has all bearings"))
            .collect();
        Ok(Imputation {
            coords: full,
            bearings,
            log_scales: vec![scale.ln(); missing.len()],
            visits: vec![0; missing.len()],
            missing,
            target: config.adapt_target,
            decay: config.adapt_decay,
            adapt: config.adapt,
            accepted: 0,
            proposed: 0,
        })
    }

    /// Stop adapting the proposal scales.
    pub fn freeze(&mut self) {
        self.adapt = false;
    }

    pub fn coords(&self) -> &[Vec2] {
        &self.coords
    }

    pub fn missing(&self) -> &[usize] {
        &self.missing
    }

    pub fn is_empty(&self) -> bool {
        self.missing.is_empty()
    }

    /// Increments of the completed track.
    pub fn increments(&self) -> Vec<Vec2> {
        (0..self.coords.len() - 2).map(|i| self.increment(i)).collect()
    }

    fn increment(&self, i: usize) -> Vec2 {
        rotation_matrix(self.bearings[i]).transpose() * (self.coords[i + 2] - self.coords[i + 1])
    }

    fn refresh_bearings(&mut self, from: usize, to: usize) {
        for i in from..=to {
            let prev = if i == 0 { 0.0 } else { self.bearings[i - 1] };
            self.bearings[i] = heading(&(self.coords[i + 1] - self.coords[i]), prev);
        }
    }

    /// Last bearing index affected by moving coordinate `g`.
    fn carry_end(&self, g: usize) -> usize {
        let mut e = g;
        while e + 1 < self.bearings.len() && self.coords[e + 2] == self.coords[e + 1] {
            e += 1;
        }
        e
    }
}

fn mixture_log_density(y: &Vec2, prob: &ProbField, t: usize, dens: &[Gaussian2]) -> f64 {
    let w: Vec<f64> = dens
        .iter()
        .enumerate()
        .map(|(j, d)| {
            let p = prob.get(t, j);
            if p > 0.0 { p.ln() + d.ln_pdf(y) } else { f64::NEG_INFINITY }
        })
        .collect();
    log_sum_exp(&w)
}

/// One random-walk Metropolis move per missing coordinate. `y` is the
/// increment vector of the completed track and is kept in sync.
pub fn update_missing<R: Rng + ?Sized>(
    imp: &mut Imputation,
    y: &mut [Vec2],
    prob: &ProbField,
    mixture: &MixtureParams,
    rng: &mut R,
) -> Result<()> {
    if imp.missing.is_empty() {
        return Ok(());
    }
    let n = imp.coords.len() - 2;
    if y.len() != n || prob.len() != n {
        return Err(Error::Shape(format!("imputation over {n} increments, got {} and {}", y.len(), prob.len())));
    }
    let dens = component_densities(mixture)?;
    for idx in 0..imp.missing.len() {
        let g = imp.missing[idx];
        let end_b = imp.carry_end(g);
        let lo = g.saturating_sub(2);
        let hi = end_b.min(n - 1);
        let old_ll: f64 = (lo..=hi).map(|i| mixture_log_density(&y[i], prob, i, &dens)).sum();
        let old_coord = imp.coords[g];
        let old_bearings: Vec<f64> = imp.bearings[g - 1..=end_b].to_vec();

        let scale = imp.log_scales[idx].exp();
        let e = Vec2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        imp.coords[g] = old_coord + e * scale;
        imp.refresh_bearings(g - 1, end_b);
        let mut new_ll = 0.0;
        let mut fresh = Vec::with_capacity(hi + 1 - lo);
        for i in lo..=hi {
            let v = imp.increment(i);
            new_ll += mixture_log_density(&v, prob, i, &dens);
            fresh.push(v);
        }
        let alpha = if new_ll.is_finite() { (new_ll - old_ll).min(0.0).exp() } else { 0.0 };
        imp.proposed += 1;
        if rng.random::<f64>() < alpha {
            imp.accepted += 1;
            y[lo..=hi].copy_from_slice(&fresh);
        } else {
            imp.coords[g] = old_coord;
            imp.bearings[g - 1..=end_b].copy_from_slice(&old_bearings);
        }
        if imp.adapt {
            imp.visits[idx] += 1;
            let gamma = (imp.visits[idx] as f64 + 1.0).powf(-imp.decay);
            imp.log_scales[idx] += gamma * (alpha - imp.target);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat2;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pts(v: &[Option<(f64, f64)>]) -> Vec<Option<Vec2>> {
        v.iter().map(|p| p.map(|(a, b)| Vec2::new(a, b))).collect()
    }

    fn config() -> ChainConfig {
        ChainConfig { iters: 10, burnin: 0, ..Default::default() }
    }

    #[test]
    fn initial_fill_is_linear() {
        let c = pts(&[Some((0.0, 0.0)), Some((1.0, 0.0)), None, None, Some((4.0, 3.0))]);
        let imp = Imputation::new(&c, &config(), None).unwrap();
        assert_eq!(imp.missing(), &[2, 3]);
        assert!((imp.coords()[2] - Vec2::new(2.0, 1.0)).norm() < 1e-12);
        assert!((imp.coords()[3] - Vec2::new(3.0, 2.0)).norm() < 1e-12);
        let full: Vec<Option<Vec2>> = imp.coords().iter().map(|c| Some(*c)).collect();
        let expected: Vec<Vec2> = decompose_coords(&full).y.into_iter().map(|v| v.unwrap()).collect();
        assert_eq!(imp.increments(), expected);
        assert!(Imputation::new(&pts(&[Some((0.0, 0.0)), None, Some((1.0, 0.0))]), &config(), None).is_err());
    }

    #[test]
    fn nothing_missing_is_a_no_op() {
        let c = pts(&[Some((0.0, 0.0)), Some((1.0, 0.0)), Some((2.0, 0.5))]);
        let mut imp = Imputation::new(&c, &config(), None).unwrap();
        let mut y = imp.increments();
        let before = y.clone();
        let prob = ProbField::new(DMatrix::from_element(1, 2, 0.5)).unwrap();
        let m = MixtureParams::new(vec![Vec2::zeros(); 2], vec![Mat2::identity(); 2]).unwrap();
        update_missing(&mut imp, &mut y, &prob, &m, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(y, before);
        assert_eq!(imp.proposed, 0);
    }

    fn straight_line_setup() -> (Vec<Option<Vec2>>, ProbField, MixtureParams) {
        let c = pts(&[Some((0.0, 0.0)), Some((1.0, 0.0)), Some((2.0, 0.0)), None, Some((4.0, 0.0)), Some((5.0, 0.0))]);
        let prob = ProbField::new(DMatrix::from_element(4, 1, 1.0)).unwrap();
        let m = MixtureParams::new(vec![Vec2::new(1.0, 0.0)], vec![Mat2::identity() * 1e-4]).unwrap();
        (c, prob, m)
    }

    #[test]
    fn straight_line_gap_concentrates_on_midpoint() {
        let (c, prob, m) = straight_line_setup();
        let mut imp = Imputation::new(&c, &config(), Some(0.3)).unwrap();
        // Start away from the answer.
        imp.coords[3] = Vec2::new(2.6, 0.4);
        imp.refresh_bearings(2, 3);
        let mut y = imp.increments();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut acc = Vec2::zeros();
        let n = 10_000;
        for i in 0..n + 1000 {
            update_missing(&mut imp, &mut y, &prob, &m, &mut rng).unwrap();
            if i >= 1000 {
                acc += imp.coords()[3];
            }
            let full: Vec<Option<Vec2>> = imp.coords().iter().map(|c| Some(*c)).collect();
            if i % 997 == 0 {
                let fresh: Vec<Vec2> = decompose_coords(&full).y.into_iter().map(|v| v.unwrap()).collect();
                for (a, b) in fresh.iter().zip(&y) {
                    assert!((a - b).norm() < 1e-12);
                }
            }
        }
        let mean = acc / n as f64;
        // Segment length between the observed neighbours is 2.
        assert!((mean - Vec2::new(3.0, 0.0)).norm() < 0.05 * 2.0, "{mean}");
    }

    #[test]
    fn zero_scale_keeps_initial_value() {
        let (c, prob, m) = straight_line_setup();
        let mut imp = Imputation::new(&c, &config(), Some(0.0)).unwrap();
        let start = imp.coords()[3];
        let mut y = imp.increments();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            update_missing(&mut imp, &mut y, &prob, &m, &mut rng).unwrap();
        }
        assert_eq!(imp.coords()[3], start);
    }
}
