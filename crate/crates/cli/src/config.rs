//! TOML run configuration. Every field has a default, so an empty file is a
//! valid configuration.

use std::path::{Path, PathBuf};

use logitn_core::design::DesignOptions;
use logitn_core::evaluation::SimScenario;
use logitn_core::gpcore::GPParams;
use logitn_core::linalg::{Mat2, Vec2};
use logitn_core::sampler::{ChainConfig, MixtureParams, Priors};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Output directory, overridden by `--out`.
    pub out: Option<PathBuf>,
    pub chain: ChainSection,
    pub priors: PriorSection,
    pub data: DataSection,
    pub design: DesignSection,
    pub simulate: SimulateSection,
    pub select: SelectSection,
    pub summarize: SummarizeSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSection {
    pub k: usize,
    pub m: usize,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub adapt_target: f64,
    pub adapt_decay: f64,
    pub adapt: bool,
    pub proposal_sd: f64,
    pub keep_prob_fields: bool,
    pub correlation: String,
}

impl Default for ChainSection {
    fn default() -> Self {
        let c = ChainConfig::default();
        ChainSection {
            k: c.k,
            m: c.m,
            iters: c.iters,
            burnin: c.burnin,
            thin: c.thin,
            seed: c.seed,
            adapt_target: c.adapt_target,
            adapt_decay: c.adapt_decay,
            adapt: c.adapt,
            proposal_sd: c.proposal_sd,
            keep_prob_fields: c.keep_prob_fields,
            correlation: "exponential".into(),
        }
    }
}

impl ChainSection {
    pub fn to_core(&self) -> ChainConfig {
        ChainConfig {
            k: self.k,
            m: self.m,
            iters: self.iters,
            burnin: self.burnin,
            thin: self.thin,
            seed: self.seed,
            adapt_target: self.adapt_target,
            adapt_decay: self.adapt_decay,
            adapt: self.adapt,
            proposal_sd: self.proposal_sd,
            keep_prob_fields: self.keep_prob_fields,
        }
    }
}

/// Σ* prior settings default to `IW(K + 1, I_K)` when left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    pub xi_mean: [f64; 2],
    pub xi_cov: [[f64; 2]; 2],
    pub omega_df: f64,
    pub omega_scale: [[f64; 2]; 2],
    pub decay_lower: f64,
    pub decay_upper: f64,
    pub beta_mean: f64,
    pub beta_var: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_star_df: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_star_scale: Option<Vec<Vec<f64>>>,
}

impl Default for PriorSection {
    fn default() -> Self {
        let p = Priors::paper_default(2);
        PriorSection {
            xi_mean: [p.xi_mean[0], p.xi_mean[1]],
            xi_cov: mat2_rows(&p.xi_cov),
            omega_df: p.omega_iw_df,
            omega_scale: mat2_rows(&p.omega_iw_scale),
            decay_lower: p.decay_lower,
            decay_upper: p.decay_upper,
            beta_mean: p.beta_mean,
            beta_var: p.beta_var,
            sigma_star_df: None,
            sigma_star_scale: None,
        }
    }
}

impl PriorSection {
    pub fn to_core(&self, k: usize) -> Result<Priors> {
        let mut p = Priors::paper_default(k);
        p.xi_mean = Vec2::new(self.xi_mean[0], self.xi_mean[1]);
        p.xi_cov = rows_mat2(&self.xi_cov);
        p.omega_iw_df = self.omega_df;
        p.omega_iw_scale = rows_mat2(&self.omega_scale);
        p.decay_lower = self.decay_lower;
        p.decay_upper = self.decay_upper;
        p.beta_mean = self.beta_mean;
        p.beta_var = self.beta_var;
        if let Some(df) = self.sigma_star_df {
            p.sigma_star_iw_df = df;
        }
        if let Some(rows) = &self.sigma_star_scale {
            p.sigma_star_iw_scale = square(rows, k, "priors.sigma_star_scale")?;
        }
        p.validate(k)?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    /// A `data.csv` written by `simulate`.
    Simulated,
    /// Raw fixes with header `timestamp,x,y`.
    Track,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub kind: DataKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub step_minutes: f64,
    pub snap_tol_minutes: f64,
    /// Grid origin (RFC 3339); the first fix when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t0: Option<String>,
    /// Length of one model time unit.
    pub time_unit_minutes: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            kind: DataKind::Simulated,
            path: None,
            step_minutes: 30.0,
            snap_tol_minutes: 1.0,
            t0: None,
            time_unit_minutes: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSection {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub span: Option<f64>,
    pub windows: Vec<[usize; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

impl Default for DesignSection {
    fn default() -> Self {
        DesignSection { kind: "linear_time".into(), span: None, windows: Vec::new(), csv: None }
    }
}

impl DesignSection {
    pub fn to_core(&self) -> DesignOptions {
        DesignOptions { kind: self.kind.clone(), span: self.span, windows: self.windows.clone(), csv: self.csv.clone() }
    }
}

/// Synthetic scenario; every parameter left out takes its default value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub t: usize,
    pub span: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<[[f64; 2]; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_star: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decays: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection { t: 500, span: 20.0, xi: None, omega: None, sigma_star: None, decays: None, beta: None }
    }
}

impl SimulateSection {
    pub fn to_core(&self) -> Result<SimScenario> {
        let mut s = SimScenario::paper_default(self.t);
        s.span = self.span;
        if self.xi.is_some() || self.omega.is_some() {
            let xi = match &self.xi {
                Some(v) => v.iter().map(|m| Vec2::new(m[0], m[1])).collect(),
                None => s.mixture.xi.clone(),
            };
            let omega = match &self.omega {
                Some(v) => v.iter().map(rows_mat2).collect(),
                None => s.mixture.omega_cov.clone(),
            };
            s.mixture = MixtureParams::new(xi, omega)?;
        }
        let k = s.mixture.k();
        if self.sigma_star.is_some() || self.decays.is_some() || self.beta.is_some() {
            let sigma = match &self.sigma_star {
                Some(rows) => square(rows, k, "simulate.sigma_star")?,
                None => s.gp.sigma_star.clone(),
            };
            let decays = self.decays.clone().unwrap_or_else(|| s.gp.decays.clone());
            let beta = match &self.beta {
                Some(b) => DVector::from_vec(b.clone()),
                None => s.gp.beta.clone(),
            };
            s.gp = GPParams::new(beta, sigma, decays)?;
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectSection {
    pub ks: Vec<usize>,
    pub ms: Vec<usize>,
}

impl Default for SelectSection {
    fn default() -> Self {
        SelectSection { ks: vec![2, 3, 4], ms: vec![10] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummarizeSection {
    pub quantiles: [f64; 2],
    pub angle_points: usize,
    pub step_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_max: Option<f64>,
    pub mc_draws: usize,
    /// Retained draws used for the density and log-ratio reports.
    pub max_draws: usize,
    pub lag_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lag_max: Option<f64>,
    /// Index quadruples `[i, j, k, l]` correlating `log(π_i/π_k)` at `t` with
    /// `log(π_j/π_l)` at `t + lag`; default `[c, c, 0, 0]` for every `c > 0`.
    pub logratios: Vec<[usize; 4]>,
}

impl Default for SummarizeSection {
    fn default() -> Self {
        SummarizeSection {
            quantiles: [0.025, 0.975],
            angle_points: 720,
            step_points: 400,
            step_max: None,
            mc_draws: 50,
            max_draws: 500,
            lag_points: 50,
            lag_max: None,
            logratios: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Relative paths in the file are taken relative to the file itself.
    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.out, &mut self.data.path, &mut self.design.csv].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Checks everything that does not need the data.
    pub fn validate(&self) -> Result<()> {
        self.chain.to_core().validate()?;
        self.priors.to_core(self.chain.k)?;
        if self.select.ks.is_empty() || self.select.ms.is_empty() {
            return Err(CliError::Config("select.ks and select.ms must be nonempty".into()));
        }
        for &k in &self.select.ks {
            ChainConfig { k, ..self.chain.to_core() }.validate()?;
            self.priors.to_core(k)?;
        }
        if self.select.ms.contains(&0) {
            return Err(CliError::Config("select.ms entries must be positive".into()));
        }
        let s = &self.summarize;
        if !(0.0..=1.0).contains(&s.quantiles[0]) || !(0.0..=1.0).contains(&s.quantiles[1]) || s.quantiles[0] >= s.quantiles[1] {
            return Err(CliError::Config("summarize.quantiles must be increasing levels in [0, 1]".into()));
        }
        if s.angle_points < 2 || s.step_points < 2 || s.lag_points < 2 || s.mc_draws == 0 || s.max_draws == 0 {
            return Err(CliError::Config("summarize grid sizes and draw counts must be positive".into()));
        }
        if !(self.data.step_minutes > 0.0 && self.data.time_unit_minutes > 0.0 && self.data.snap_tol_minutes >= 0.0) {
            return Err(CliError::Config("data step, snap tolerance and time unit must be positive".into()));
        }
        Ok(())
    }
}

fn mat2_rows(m: &Mat2) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

fn rows_mat2(r: &[[f64; 2]; 2]) -> Mat2 {
    Mat2::new(r[0][0], r[0][1], r[1][0], r[1][1])
}

fn square(rows: &[Vec<f64>], k: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != k || rows.iter().any(|r| r.len() != k) {
        return Err(CliError::Config(format!("{what} must be a {k}×{k} matrix")));
    }
    Ok(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default_profile() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.chain.to_core(), ChainConfig::default());
        assert_eq!(c.priors.to_core(3).unwrap(), Priors::paper_default(3));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::default();
        c.out = Some("runs/a".into());
        c.chain.k = 4;
        c.chain.seed = 99;
        c.priors.sigma_star_scale = Some(vec![vec![2.0, 0.0], vec![0.0, 2.0]]);
        c.data.kind = DataKind::Track;
        c.data.t0 = Some("2010-03-01T00:00:00Z".into());
        c.design.kind = "windows".into();
        c.design.windows = vec![[1, 100], [150, 300]];
        c.simulate.decays = Some(vec![0.1 + 0.2, 1.0 / 3.0, 2.5]);
        c.summarize.logratios = vec![[1, 1, 0, 0]];
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn validation_failures() {
        assert!(RunConfig::from_toml("[chain]\nk = 1\n").unwrap().validate().is_err());
        assert!(RunConfig::from_toml("[chain]\nburnin = 2000000\n").unwrap().validate().is_err());
        assert!(RunConfig::from_toml("[select]\nks = []\n").unwrap().validate().is_err());
        assert!(RunConfig::from_toml("[priors]\ndecay_lower = 7.0\n").unwrap().validate().is_err());
        assert!(RunConfig::from_toml("[chain]\nbogus = 1\n").is_err());
        assert!(RunConfig::from_toml("[summarize]\nquantiles = [0.9, 0.1]\n").unwrap().validate().is_err());
    }

    #[test]
    fn scenario_overrides() {
        let c = RunConfig::from_toml("[simulate]\nt = 50\ndecays = [2.0, 2.0, 2.0]\n").unwrap();
        let s = c.simulate.to_core().unwrap();
        assert_eq!(s.t, 50);
        assert_eq!(s.gp.decays, vec![2.0; 3]);
        let bad = RunConfig::from_toml("[simulate]\nsigma_star = [[1.0, 0.0], [0.0, 1.0]]\n").unwrap();
        assert!(bad.simulate.to_core().is_err());
    }
}
