use crate::error::{Error, Result};
use crate::linalg::Vec2;
use crate::logitn::ProbField;
use crate::sampler::{component_densities, MixtureParams, SampleStore};

/// `Σ_t [log π_t(z_t) + log N(y_t; ξ_{z_t}, Ω_{z_t})]` over the increments
/// flagged in `mask` (all of them when `None`).
pub fn complete_loglik(
    y: &[Vec2],
    z: &[usize],
    mixture: &MixtureParams,
    prob: &ProbField,
    mask: Option<&[bool]>,
) -> Result<f64> {
    let n = y.len();
    if z.len() != n || prob.len() != n || mask.is_some_and(|m| m.len() != n) {
        return Err(Error::Shape(format!(
            "{n} increments, {} labels, {} probability rows",
            z.len(),
            prob.len()
        )));
    }
    let dens = component_densities(mixture)?;
    let mut total = 0.0;
    for t in 0..n {
        if mask.is_some_and(|m| !m[t]) {
            continue;
        }
        let k = z[t];
        let d = dens.get(k).ok_or_else(|| Error::invalid(format!("label {k} out of range")))?;
        total += prob.get(t, k).ln() + d.ln_pdf(&y[t]);
    }
    Ok(total)
}

/// Number of free parameters: means and covariances of the mixture, the
/// regression coefficients, the decays and Σ*.
pub fn icl_free_parameters(k: usize, p: usize) -> usize {
    5 * k + p * (k - 1) + k + k * (k + 1) / 2
}

/// Integrated completed likelihood of one fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IclReport {
    pub k: usize,
    /// Iteration of the retained draw with the largest complete-data likelihood.
    pub map_iteration: usize,
    /// Largest complete-data log-likelihood over the retained draws.
    pub max_loglik: f64,
    pub free_parameters: usize,
    pub observed: usize,
    /// `max_loglik − (ν/2) log T_obs`; larger is better.
    pub icl: f64,
}

impl IclReport {
    /// Sign-flipped ICL as reported in tables, where smaller is better.
    pub fn table_value(&self) -> f64 {
        -self.icl
    }
}

pub fn icl(store: &SampleStore, p: usize) -> Result<IclReport> {
    let best = store
        .draws
        .iter()
        .filter(|d| d.loglik.is_finite())
        .max_by(|a, b| a.loglik.total_cmp(&b.loglik))
        .ok_or_else(|| Error::invalid("ICL needs at least one retained draw with finite likelihood"))?;
    let max_loglik = best.loglik;
    let observed = store.observed_count();
    if observed == 0 {
        return Err(Error::invalid("ICL needs observed increments"));
    }
    let nu = icl_free_parameters(store.k, p);
    Ok(IclReport {
        k: store.k,
        map_iteration: best.iteration,
        max_loglik,
        free_parameters: nu,
        observed,
        icl: max_loglik - 0.5 * nu as f64 * (observed as f64).ln(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Gaussian2, Mat2};
    use nalgebra::DMatrix;

    #[test]
    fn loglik_matches_hand_sum() {
        let m = MixtureParams::new(
            vec![Vec2::new(0.0, 0.0), Vec2::new(2.0, 1.0)],
            vec![Mat2::identity(), Mat2::new(2.0, 0.5, 0.5, 1.0)],
        )
        .unwrap();
        let y = vec![Vec2::new(0.3, -0.2), Vec2::new(1.5, 1.1), Vec2::new(-1.0, 0.4)];
        let z = vec![0, 1, 1];
        let prob = ProbField::new(DMatrix::from_row_slice(3, 2, &[0.7, 0.3, 0.2, 0.8, 0.5, 0.5])).unwrap();
        let g0 = Gaussian2::new(m.xi[0], m.omega_cov[0]).unwrap();
        let g1 = Gaussian2::new(m.xi[1], m.omega_cov[1]).unwrap();
        let expect = 0.7f64.ln() + g0.ln_pdf(&y[0]) + 0.8f64.ln() + g1.ln_pdf(&y[1]) + 0.5f64.ln() + g1.ln_pdf(&y[2]);
        assert!((complete_loglik(&y, &z, &m, &prob, None).unwrap() - expect).abs() < 1e-12);
        let masked = complete_loglik(&y, &z, &m, &prob, Some(&[true, false, true])).unwrap();
        assert!((masked - (expect - 0.8f64.ln() - g1.ln_pdf(&y[1]))).abs() < 1e-12);
        assert!(complete_loglik(&y, &[0, 1], &m, &prob, None).is_err());
    }

    #[test]
    fn parameter_count() {
        // K = 3, intercept and slope: 15 + 4 + 3 + 6.
        assert_eq!(icl_free_parameters(3, 2), 28);
        assert_eq!(icl_free_parameters(2, 1), 10 + 1 + 2 + 3);
    }
}
