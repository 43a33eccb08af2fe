//! Column layout of `samples.csv`.

use logitn_core::sampler::Draw;

use crate::output::num;

/// `iteration`, then ξ, Ω (upper triangle), β, decays, Σ* (upper triangle)
/// and `loglik`. Components are numbered from 1; `beta.j` runs over the
/// stacked coefficients, `p` per non-reference category.
pub fn header(k: usize, p: usize) -> Vec<String> {
    let mut h = vec!["iteration".to_string()];
    for j in 1..=k {
        h.push(format!("xi.{j}.1"));
        h.push(format!("xi.{j}.2"));
    }
    for j in 1..=k {
        for ab in ["11", "12", "22"] {
            h.push(format!("Omega.{j}.{ab}"));
        }
    }
    h.extend((1..=p * (k - 1)).map(|j| format!("beta.{j}")));
    h.extend((1..=k).map(|j| format!("phi.{j}")));
    for a in 1..=k {
        for b in a..=k {
            h.push(sigma_name(k, a, b));
        }
    }
    h.push("loglik".into());
    h
}

/// `Sigma.ab`, with a dot between the indices once they reach two digits.
fn sigma_name(k: usize, a: usize, b: usize) -> String {
    if k < 10 {
        format!("Sigma.{a}{b}")
    } else {
        format!("Sigma.{a}.{b}")
    }
}

pub fn row(d: &Draw) -> Vec<String> {
    let k = d.mixture.k();
    let mut r = vec![d.iteration.to_string()];
    for xi in &d.mixture.xi {
        r.push(num(xi[0]));
        r.push(num(xi[1]));
    }
    for om in &d.mixture.omega_cov {
        r.push(num(om[(0, 0)]));
        r.push(num(om[(0, 1)]));
        r.push(num(om[(1, 1)]));
    }
    r.extend(d.gp.beta.iter().map(|&b| num(b)));
    r.extend(d.gp.decays.iter().map(|&v| num(v)));
    for a in 0..k {
        for b in a..k {
            r.push(num(d.gp.sigma_star[(a, b)]));
        }
    }
    r.push(num(d.loglik));
    r
}

/// Table group and display label of a parameter column; `None` for
/// bookkeeping columns.
pub fn label(column: &str) -> Option<(&'static str, String)> {
    let parts: Vec<&str> = column.split('.').collect();
    match parts.as_slice() {
        ["xi", j, c] => Some(("xi", format!("ξ{j}[{c}]"))),
        ["Omega", j, ab] => Some(("Omega", format!("Ω{j}[{ab}]"))),
        ["beta", j] => Some(("beta", format!("β{j}"))),
        ["phi", j] => Some(("phi", format!("φ{j}"))),
        ["Sigma", ab] => Some(("Sigma*", format!("Σ*[{ab}]"))),
        ["Sigma", a, b] => Some(("Sigma*", format!("Σ*[{a},{b}]"))),
        _ => None,
    }
}
