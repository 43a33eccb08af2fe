//! Pólya-Gamma variates.
//!
//! `PG(1, c)` is drawn exactly with Devroye's alternating-series method on
//! the exponentially tilted Jacobi density (proposal: truncated exponential
//! right of 0.64, truncated inverse Gaussian left of it). `PG(b, c)` for
//! integer `b` is the sum of `b` such draws.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::ln_norm_cdf;

const TRUNC: f64 = 0.64;
const MAX_C: f64 = 700.0;

/// Coefficient `a_n(x)` of the alternating series for the Jacobi density.
fn series_coef(n: u32, x: f64) -> f64 {
    let k = (n as f64 + 0.5) * PI;
    if x > TRUNC {
        k * (-0.5 * k * k * x).exp()
    } else if x > 0.0 {
        let h = n as f64 + 0.5;
        (-1.5 * ((0.5 * PI).ln() + x.ln()) + k.ln() - 2.0 * h * h / x).exp()
    } else {
        0.0
    }
}

/// Probability of proposing from the exponential piece.
fn mass_texpon(z: f64) -> f64 {
    let t = TRUNC;
    let fz = 0.125 * PI * PI + 0.5 * z * z;
    let b = (1.0 / t).sqrt() * (t * z - 1.0);
    let a = -(1.0 / t).sqrt() * (t * z + 1.0);
    let x0 = fz.ln() + fz * t;
    let xb = x0 - z + ln_norm_cdf(b);
    let xa = x0 + z + ln_norm_cdf(a);
    let qdivp = 4.0 / PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + qdivp)
}

/// Inverse Gaussian `IG(1/z, 1)` truncated to `(0, 0.64)`.
fn truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let t = TRUNC;
    if z < 1.0 / t {
        loop {
            let (mut e1, mut e2): (f64, f64) = (rng.sample(Exp1), rng.sample(Exp1));
            while e1 * e1 > 2.0 * e2 / t {
                e1 = rng.sample(Exp1);
                e2 = rng.sample(Exp1);
            }
            let x = 1.0 + e1 * t;
            let x = t / (x * x);
            if rng.random::<f64>() <= (-0.5 * z * z * x).exp() {
                return x;
            }
        }
    }
    let mu = 1.0 / z;
    loop {
        let y: f64 = rng.sample(StandardNormal);
        let mu_y = mu * y * y;
        let mut x = mu + 0.5 * mu * mu_y - 0.5 * mu * (4.0 * mu_y + mu_y * mu_y).sqrt();
        if rng.random::<f64>() > mu / (mu + x) {
            x = mu * mu / x;
        }
        if x <= t {
            return x;
        }
    }
}

/// One `PG(1, c)` draw.
pub fn pg_sample_one<R: Rng + ?Sized>(c: f64, rng: &mut R) -> f64 {
    let z = 0.5 * c.abs().min(MAX_C);
    let fz = 0.125 * PI * PI + 0.5 * z * z;
    let p_exp = mass_texpon(z);
    loop {
        let x = if rng.random::<f64>() < p_exp {
            TRUNC + rng.sample::<f64, _>(Exp1) / fz
        } else {
            truncated_inverse_gaussian(z, rng)
        };
        let mut s = series_coef(0, x);
        let y = rng.random::<f64>() * s;
        let mut n = 0;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= series_coef(n, x);
                if y <= s {
                    return 0.25 * x;
                }
            } else {
                s += series_coef(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

fn integer_b(b: f64) -> Result<u64> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::invalid(format!("PG shape must be positive, got {b}")));
    }
    if b.fract() != 0.0 {
        return Err(Error::invalid(format!("only integer PG shapes are supported, got {b}")));
    }
    Ok(b as u64)
}

/// `PG(b, c)` for positive integer `b`.
pub fn pg_sample<R: Rng + ?Sized>(b: f64, c: f64, rng: &mut R) -> Result<f64> {
    let n = integer_b(b)?;
    if c.is_nan() {
        return Err(Error::invalid("PG tilt is NaN"));
    }
    Ok((0..n).map(|_| pg_sample_one(c, rng)).sum())
}

fn check_shape(b: f64) -> Result<()> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::invalid(format!("PG shape must be positive, got {b}")));
    }
    Ok(())
}

/// `E[PG(b, c)] = b/(2c) tanh(c/2)`.
pub fn pg_mean(b: f64, c: f64) -> Result<f64> {
    check_shape(b)?;
    let c = c.abs().min(MAX_C);
    if c < 1e-4 {
        let c2 = c * c;
        return Ok(b / 4.0 * (1.0 - c2 / 12.0 + c2 * c2 / 120.0));
    }
    Ok(b / (2.0 * c) * (0.5 * c).tanh())
}

/// `Var[PG(b, c)] = b/(4c³) (sinh c - c) sech²(c/2)`.
pub fn pg_variance(b: f64, c: f64) -> Result<f64> {
    check_shape(b)?;
    let c = c.abs().min(MAX_C);
    if c == 0.0 {
        return Ok(b / 24.0);
    }
    let g = if c < 1.0 {
        // sinh c - c by its Taylor series, then divide by cosh²(c/2).
        let c2 = c * c;
        let mut term = c * c2 / 6.0;
        let mut sum = term;
        let mut n = 3.0;
        while term > 1e-18 * sum {
            term *= c2 / ((n + 1.0) * (n + 2.0));
            sum += term;
            n += 2.0;
        }
        sum / (0.5 * c).cosh().powi(2)
    } else {
        let e = (-c).exp();
        2.0 * (1.0 - e * e - 2.0 * c * e) / (1.0 + e).powi(2)
    };
    Ok(b * g / (4.0 * c * c * c))
}
