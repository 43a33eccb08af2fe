use rand::Rng;

use super::MixtureParams;
use crate::error::{Error, Result};
use crate::linalg::{Gaussian2, Vec2};
use crate::logitn::ProbField;

pub(crate) fn component_densities(mixture: &MixtureParams) -> Result<Vec<Gaussian2>> {
    mixture.xi.iter().zip(&mixture.omega_cov).map(|(m, c)| Gaussian2::new(*m, *c)).collect()
}

/// Draw `z_t ∝ π_{t,k} N(y_t | ξ_k, Ω_k)` independently for every `t`.
pub fn update_labels<R: Rng + ?Sized>(
    y: &[Vec2],
    prob: &ProbField,
    mixture: &MixtureParams,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let mut z = vec![0; y.len()];
    draw_labels_into(y, prob, &component_densities(mixture)?, &mut z, rng)?;
    Ok(z)
}

pub(crate) fn draw_labels_into<R: Rng + ?Sized>(
    y: &[Vec2],
    prob: &ProbField,
    dens: &[Gaussian2],
    z: &mut [usize],
    rng: &mut R,
) -> Result<()> {
    let k = dens.len();
    if prob.k() != k || prob.len() != y.len() || z.len() != y.len() {
        return Err(Error::Shape(format!(
            "labels: {} increments, probability field {}x{}, {k} components",
            y.len(),
            prob.len(),
            prob.k()
        )));
    }
    let mut w = vec![0.0; k];
    for (t, yt) in y.iter().enumerate() {
        let mut max = f64::NEG_INFINITY;
        for j in 0..k {
            let p = prob.get(t, j);
            w[j] = if p > 0.0 { p.ln() + dens[j].ln_pdf(yt) } else { f64::NEG_INFINITY };
            max = max.max(w[j]);
        }
        if !max.is_finite() {
            return Err(Error::Numerical(format!("all label weights vanish at time index {t}")));
        }
        let mut total = 0.0;
        for v in w.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = k - 1;
        for (j, v) in w.iter().enumerate() {
            if u < *v {
                pick = j;
                break;
            }
            u -= v;
        }
        // Guard against landing on a zero-weight tail entry through roundoff.
        while w[pick] == 0.0 {
            pick -= 1;
        }
        z[t] = pick;
    }
    Ok(())
}
