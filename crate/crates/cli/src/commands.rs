//! The four subcommands.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use logitn_core::evaluation::{
    icl, logratio_report, predictive_densities, probability_timeseries, quantile, simulate_with, IclReport,
};
use logitn_core::gpcore::CorrelationRegistry;
use logitn_core::sampler::{SampleStore, Sampler};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{matrix_rows, RunConfig};
use crate::data::{self, Loaded};
use crate::error::{CliError, Result};
use crate::output::{num, sha256_file, strings, OutDir};
use crate::samples;

pub const SIMULATE_FILES: [&str; 2] = ["data.csv", "truth.json"];
pub const FIT_FILES: [&str; 8] = [
    "samples.csv",
    "acceptance.csv",
    "prob_timeseries.csv",
    "angle_density.csv",
    "step_density.csv",
    "logratio.csv",
    "index.json",
    "manifest.json",
];
pub const SELECT_FILES: [&str; 1] = ["icl_table.csv"];

/// Options shared by every command.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub force: bool,
    pub quiet: bool,
}

impl RunOptions {
    fn out_dir(&self, cfg: &RunConfig) -> Result<PathBuf> {
        self.out.clone().or_else(|| cfg.out.clone()).ok_or(CliError::NoOutput)
    }

    fn apply(&self, cfg: &RunConfig) -> RunConfig {
        let mut cfg = cfg.clone();
        if let Some(s) = self.seed {
            cfg.chain.seed = s;
        }
        cfg
    }
}

#[derive(Debug, Serialize)]
struct Truth {
    seed: u64,
    t: usize,
    span: f64,
    xi: Vec<[f64; 2]>,
    omega: Vec<[[f64; 2]; 2]>,
    beta: Vec<f64>,
    decays: Vec<f64>,
    sigma_star: Vec<Vec<f64>>,
    /// Component label of each increment, numbered from 1.
    labels: Vec<usize>,
}

/// Simulate a track and write `data.csv` (one row per grid vertex) and `truth.json`.
pub fn cmd_simulate(cfg: &RunConfig, opts: &RunOptions) -> Result<PathBuf> {
    let cfg = opts.apply(cfg);
    cfg.validate()?;
    let scenario = cfg.simulate.to_core()?;
    let corr = CorrelationRegistry::default().get(&cfg.chain.correlation)?;
    let root = opts.out_dir(&cfg)?;
    OutDir::check(&root, &SIMULATE_FILES, opts.force)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.chain.seed);
    let sim = simulate_with(&scenario, corr, &mut rng)?;

    let header = strings(["grid_index", "time", "x", "y", "y1", "y2", "step_length", "turning_angle", "observed"]);
    let t = scenario.t;
    let rows: Vec<Vec<String>> = sim
        .coords
        .iter()
        .enumerate()
        .map(|(g, c)| {
            let mut r = vec![g.to_string(), num(scenario.span * g as f64 / t as f64), num(c[0]), num(c[1])];
            if (1..=t).contains(&g) {
                let y = sim.y[g - 1];
                r.extend([num(y[0]), num(y[1]), num(y.norm()), num(logitn_core::trajectory::turning_angle(&y))]);
            } else {
                r.extend(std::iter::repeat_n(String::new(), 4));
            }
            r.push("1".into());
            r
        })
        .collect();
    let truth = Truth {
        seed: cfg.chain.seed,
        t,
        span: scenario.span,
        xi: scenario.mixture.xi.iter().map(|x| [x[0], x[1]]).collect(),
        omega: scenario.mixture.omega_cov.iter().map(|m| [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]).collect(),
        beta: scenario.gp.beta.iter().copied().collect(),
        decays: scenario.gp.decays.clone(),
        sigma_star: matrix_rows(&scenario.gp.sigma_star),
        labels: sim.z.iter().map(|z| z + 1).collect(),
    };
    let mut out = OutDir::create(&root)?;
    out.write_csv("data.csv", &header, &rows)?;
    out.write_json("truth.json", &truth)?;
    log::info!("simulated {t} increments into {}", root.display());
    Ok(root)
}

/// Run one chain of the configured size on loaded data.
pub fn run_fit(cfg: &RunConfig, loaded: &Loaded, quiet: bool) -> Result<SampleStore> {
    let corr = CorrelationRegistry::default().get(&cfg.chain.correlation)?;
    let priors = cfg.priors.to_core(cfg.chain.k)?;
    let sampler = Sampler::new(loaded.model.clone(), cfg.chain.to_core(), priors, corr)?;
    let label = format!("K={} m={}", cfg.chain.k, cfg.chain.m);
    let store = sampler.run(|done, total| {
        if !quiet {
            let mut err = std::io::stderr().lock();
            let _ = write!(err, "\r{label}: {:3}%", (100 * done) / total);
            if done == total {
                let _ = writeln!(err);
            }
        }
    })?;
    Ok(store)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IclEntry {
    /// Sign-flipped ICL; smaller is better.
    pub icl: f64,
    pub max_loglik: f64,
    pub map_iteration: usize,
    pub free_parameters: usize,
    pub observed: usize,
}

impl From<IclReport> for IclEntry {
    fn from(r: IclReport) -> Self {
        IclEntry {
            icl: r.table_value(),
            max_loglik: r.max_loglik,
            map_iteration: r.map_iteration,
            free_parameters: r.free_parameters,
            observed: r.observed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitIndex {
    pub k: usize,
    pub m: usize,
    pub p: usize,
    pub increments: usize,
    pub retained_draws: usize,
    pub hyper_acceptance: f64,
    pub icl: IclEntry,
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    /// Post-burnin acceptance rate of the hyperparameter block.
    pub hyper_acceptance: f64,
    /// Mean over the recorded rolling rates after burnin.
    pub missing_acceptance: Option<f64>,
    pub started_at: String,
    pub elapsed_seconds: f64,
    /// SHA-256 of every other output file.
    pub checksums: BTreeMap<String, String>,
}

/// Fit one chain and write samples, diagnostics, summaries and a manifest.
pub fn cmd_fit(cfg: &RunConfig, opts: &RunOptions) -> Result<PathBuf> {
    let cfg = opts.apply(cfg);
    cfg.validate()?;
    let root = opts.out_dir(&cfg)?;
    OutDir::check(&root, &FIT_FILES, opts.force)?;
    let loaded = data::load(&cfg)?;
    let started_at = chrono::Utc::now().to_rfc3339();
    let clock = Instant::now();
    let store = run_fit(&cfg, &loaded, opts.quiet)?;
    let p = loaded.design.ncols();
    let report = icl(&store, p)?;

    let tables = summaries(&cfg, &loaded, &store)?;

    let mut out = OutDir::create(&root)?;
    let sample_rows: Vec<Vec<String>> = store.draws.iter().map(samples::row).collect();
    out.write_csv("samples.csv", &samples::header(store.k, p), &sample_rows)?;
    let acc_rows: Vec<Vec<String>> = store
        .acceptance
        .iter()
        .map(|a| {
            vec![a.iteration.to_string(), num(a.hyper_rate), num(a.log_scale), a.missing_rate.map(num).unwrap_or_default()]
        })
        .collect();
    out.write_csv("acceptance.csv", &strings(["iteration", "hyper_rate", "log_scale", "missing_rate"]), &acc_rows)?;
    for (name, header, rows) in &tables {
        out.write_csv(name, header, rows)?;
    }

    let files = [
        ("samples.csv", "retained draws"),
        ("acceptance.csv", "rolling acceptance rates"),
        ("prob_timeseries.csv", "posterior mean and band of each state probability"),
        ("angle_density.csv", "posterior predictive turning-angle densities"),
        ("step_density.csv", "posterior predictive step-length densities"),
        ("logratio.csv", "log-ratio correlation curves"),
    ];
    let index = FitIndex {
        k: store.k,
        m: cfg.chain.m,
        p,
        increments: store.n(),
        retained_draws: store.len(),
        hyper_acceptance: store.hyper_acceptance,
        icl: report.into(),
        files: files.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
    };
    out.write_json("index.json", &index)?;
    let checksums = out
        .written()
        .iter()
        .map(|name| Ok((name.clone(), sha256_file(&out.path(name))?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let manifest = Manifest {
        command: "fit".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.chain.seed,
        config: cfg.clone(),
        hyper_acceptance: store.hyper_acceptance,
        missing_acceptance: missing_acceptance(&store, cfg.chain.burnin),
        started_at,
        elapsed_seconds: clock.elapsed().as_secs_f64(),
        checksums,
    };
    out.write_json("manifest.json", &manifest)?;
    Ok(root)
}

type Table = (&'static str, Vec<String>, Vec<Vec<String>>);

fn summaries(cfg: &RunConfig, loaded: &Loaded, store: &SampleStore) -> Result<Vec<Table>> {
    let mut tables = Vec::new();
    let s = &cfg.summarize;
    let k = store.k;
    let [lo, hi] = s.quantiles;

    let mut header = strings(["grid_index", "time"]);
    for j in 1..=k {
        header.extend([format!("mean_{j}"), format!("lower_{j}"), format!("upper_{j}")]);
    }
    let mut rows = Vec::new();
    if !store.prob_fields.is_empty() {
        let ps = probability_timeseries(store, &[lo, hi])?;
        for t in 0..store.n() {
            let mut r = vec![loaded.grid_index[t].to_string(), num(store.times[t])];
            for j in 0..k {
                r.extend([num(ps.mean[(t, j)]), num(ps.bands[0].1[(t, j)]), num(ps.bands[1].1[(t, j)])]);
            }
            rows.push(r);
        }
    }
    tables.push(("prob_timeseries.csv", header, rows));

    let thinned = subsample(store, s.max_draws);
    let grid_theta: Vec<f64> = (0..s.angle_points).map(|i| TAU * i as f64 / s.angle_points as f64).collect();
    let step_max = s.step_max.unwrap_or_else(|| {
        let longest = loaded.model.y().iter().flatten().map(|v| v.norm()).fold(0.0, f64::max);
        1.5 * longest.max(1e-6)
    });
    let grid_r: Vec<f64> = (0..s.step_points).map(|i| step_max * i as f64 / (s.step_points - 1) as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.chain.seed.wrapping_add(1));
    let dens = predictive_densities(&thinned, &grid_r, &grid_theta, s.mc_draws, &mut rng)?;
    let comp_header = |first: &str| {
        let mut h = vec![first.to_string()];
        h.extend((1..=k).map(|j| format!("component_{j}")));
        h
    };
    let table = |grid: &[f64], m: &nalgebra::DMatrix<f64>| -> Vec<Vec<String>> {
        grid.iter()
            .enumerate()
            .map(|(g, &x)| std::iter::once(num(x)).chain((0..k).map(|j| num(m[(g, j)]))).collect())
            .collect()
    };
    tables.push(("angle_density.csv", comp_header("theta"), table(&dens.grid_theta, &dens.angle)));
    tables.push(("step_density.csv", comp_header("step_length"), table(&dens.grid_r, &dens.step)));

    let times = &store.times;
    let lag_max = s.lag_max.unwrap_or_else(|| 0.5 * (times[times.len() - 1] - times[0]).max(1e-9));
    let lags: Vec<f64> = (0..s.lag_points).map(|i| lag_max * i as f64 / (s.lag_points - 1) as f64).collect();
    let quads: Vec<[usize; 4]> =
        if s.logratios.is_empty() { (1..k).map(|c| [c, c, 0, 0]).collect() } else { s.logratios.clone() };
    let corr = CorrelationRegistry::default().get(&cfg.chain.correlation)?;
    let mut rows = Vec::new();
    for q in quads {
        if q.iter().any(|&i| i >= k) {
            return Err(CliError::Config(format!("summarize.logratios entry {q:?} has an index ≥ K = {k}")));
        }
        let rep = logratio_report(&thinned, q, &lags, corr.clone())?;
        for (g, &lag) in rep.lags.iter().enumerate() {
            let mut r: Vec<String> = q.iter().map(|i| i.to_string()).collect();
            r.extend([num(lag), num(rep.mean[g]), num(rep.lower[g]), num(rep.upper[g])]);
            rows.push(r);
        }
    }
    tables.push(("logratio.csv", strings(["i", "j", "k", "l", "lag", "mean", "lower", "upper"]), rows));
    Ok(tables)
}

fn missing_acceptance(store: &SampleStore, burnin: usize) -> Option<f64> {
    let rates: Vec<f64> = store.acceptance.iter().filter(|a| a.iteration > burnin).filter_map(|a| a.missing_rate).collect();
    (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
}

/// At most `max` draws, evenly spaced.
fn subsample(store: &SampleStore, max: usize) -> SampleStore {
    let n = store.len();
    if n <= max {
        return store.clone();
    }
    let picks: Vec<usize> = (0..max).map(|i| i * n / max).collect();
    SampleStore {
        draws: picks.iter().map(|&i| store.draws[i].clone()).collect(),
        labels: picks.iter().map(|&i| store.labels[i].clone()).collect(),
        prob_fields: if store.prob_fields.is_empty() {
            Vec::new()
        } else {
            picks.iter().map(|&i| store.prob_fields[i].clone()).collect()
        },
        ..store.clone()
    }
}

/// One row of the selection table.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectCell {
    pub k: usize,
    pub m: usize,
    pub result: std::result::Result<IclEntry, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub cells: Vec<SelectCell>,
    /// Index into `cells` of the smallest table ICL.
    pub selected: usize,
}

/// Fit every `(K, m)` pair and write `icl_table.csv`; the smallest value is marked.
pub fn cmd_select(cfg: &RunConfig, opts: &RunOptions) -> Result<Selection> {
    let cfg = opts.apply(cfg);
    cfg.validate()?;
    let root = opts.out_dir(&cfg)?;
    OutDir::check(&root, &SELECT_FILES, opts.force)?;
    let loaded = data::load(&cfg)?;
    let p = loaded.design.ncols();
    let mut cells = Vec::new();
    for &k in &cfg.select.ks {
        for &m in &cfg.select.ms {
            let mut c = cfg.clone();
            c.chain.k = k;
            c.chain.m = m;
            let result = run_fit(&c, &loaded, opts.quiet).and_then(|s| Ok(icl(&s, p)?)).map(IclEntry::from);
            if let Err(e) = &result {
                log::warn!("K={k} m={m} failed: {e}");
            }
            cells.push(SelectCell { k, m, result: result.map_err(|e| e.to_string()) });
        }
    }
    let selected = cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.result.as_ref().ok().map(|r| (i, r.icl)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .ok_or(CliError::AllCellsFailed)?;
    let header =
        strings(["k", "m", "status", "icl", "max_loglik", "free_parameters", "map_iteration", "selected", "message"]);
    let rows: Vec<Vec<String>> = cells
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mark = if i == selected { "1" } else { "0" }.to_string();
            match &c.result {
                Ok(r) => vec![
                    c.k.to_string(),
                    c.m.to_string(),
                    "ok".into(),
                    num(r.icl),
                    num(r.max_loglik),
                    r.free_parameters.to_string(),
                    r.map_iteration.to_string(),
                    mark,
                    String::new(),
                ],
                Err(msg) => vec![
                    c.k.to_string(),
                    c.m.to_string(),
                    "failed".into(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    mark,
                    msg.clone(),
                ],
            }
        })
        .collect();
    let mut out = OutDir::create(&root)?;
    out.write_csv("icl_table.csv", &header, &rows)?;
    Ok(Selection { cells, selected })
}

/// Posterior summary of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    pub group: &'static str,
    pub label: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Read a fit directory and return posterior means and intervals in table
/// order. Nothing is written.
pub fn cmd_summarize(run_dir: &Path) -> Result<Vec<ParamSummary>> {
    let manifest_path = run_dir.join("manifest.json");
    if !manifest_path.is_file() {
        return Err(CliError::MissingManifest(run_dir.to_path_buf()));
    }
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| CliError::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| CliError::format(&manifest_path, e))?;
    let [lo, hi] = manifest.config.summarize.quantiles;

    let path = run_dir.join("samples.csv");
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| CliError::format(&path, e))?;
    let header = rdr.headers().map_err(|e| CliError::format(&path, e))?.clone();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::format(&path, e))?;
        for (c, v) in rec.iter().enumerate() {
            columns[c].push(v.parse().map_err(|_| CliError::format(&path, format!("bad number `{v}`")))?);
        }
    }
    if columns.first().is_none_or(|c| c.is_empty()) {
        return Err(CliError::format(&path, "no draws"));
    }
    let mut out = Vec::new();
    for (c, name) in header.iter().enumerate() {
        if let Some((group, label)) = samples::label(name) {
            let v = &columns[c];
            out.push(ParamSummary {
                group,
                label,
                mean: v.iter().sum::<f64>() / v.len() as f64,
                lower: quantile(v, lo),
                upper: quantile(v, hi),
            });
        }
    }
    Ok(out)
}

/// Group-by-group table of posterior means with their intervals.
pub fn render_table(rows: &[ParamSummary]) -> String {
    let mut s = String::new();
    let mut group = "";
    for r in rows {
        if r.group != group {
            group = r.group;
            s.push_str(&format!("{group}\n"));
        }
        s.push_str(&format!("  {:<10} {:>24}  ({}, {})\n", r.label, num(r.mean), num(r.lower), num(r.upper)));
    }
    s
}
