//! Reading observations into the model's grid layout.

use std::path::Path;

use chrono::{DateTime, TimeDelta, Utc};
use logitn_core::design::DesignRegistry;
use logitn_core::linalg::Vec2;
use logitn_core::sampler::ModelData;
use logitn_core::trajectory::{parse_timestamp, parse_track, regularize, TrackFormat};
use nalgebra::DMatrix;

use crate::config::{DataKind, RunConfig};
use crate::error::{CliError, Result};

/// Grid vertices and the model data derived from them. Increment `i` is
/// reported at vertex `i + 1`.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub coords: Vec<Option<Vec2>>,
    /// Model time of each vertex.
    pub vertex_times: Vec<f64>,
    pub grid_index: Vec<usize>,
    pub design: DMatrix<f64>,
    pub model: ModelData,
}

impl Loaded {
    pub fn times(&self) -> &[f64] {
        self.model.times()
    }
}

pub fn load(cfg: &RunConfig) -> Result<Loaded> {
    let path = cfg.data.path.as_deref().ok_or_else(|| CliError::Config("data.path is required".into()))?;
    let (coords, vertex_times) = match cfg.data.kind {
        DataKind::Simulated => read_grid_csv(path)?,
        DataKind::Track => read_track(cfg, path)?,
    };
    assemble(cfg, coords, vertex_times)
}

pub fn assemble(cfg: &RunConfig, coords: Vec<Option<Vec2>>, vertex_times: Vec<f64>) -> Result<Loaded> {
    if coords.len() < 3 {
        return Err(CliError::Core(logitn_core::Error::Invalid("need at least 3 grid vertices".into())));
    }
    let n = coords.len() - 2;
    let grid_index: Vec<usize> = (1..=n).collect();
    let times = vertex_times[1..=n].to_vec();
    let design = DesignRegistry::default().build(&cfg.design.to_core())?.matrix(&grid_index, &times)?;
    let model = ModelData::from_coords(coords.clone(), times, design.clone())?;
    Ok(Loaded { coords, vertex_times, grid_index, design, model })
}

/// A `data.csv` as written by `simulate`; blank `x,y` mark missing vertices.
pub fn read_grid_csv(path: &Path) -> Result<(Vec<Option<Vec2>>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::format(path, e))?;
    let header = rdr.headers().map_err(|e| CliError::format(path, e))?.clone();
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| CliError::format(path, format!("missing column `{name}`")))
    };
    let (gi, ti, xi, yi) = (col("grid_index")?, col("time")?, col("x")?, col("y")?);
    let mut coords = Vec::new();
    let mut times = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let rec = rec.map_err(|e| CliError::format(path, e))?;
        let bad = |what: &str| CliError::format(path, format!("line {line}: bad {what}"));
        let g: usize = rec[gi].trim().parse().map_err(|_| bad("grid_index"))?;
        if g != row {
            return Err(CliError::format(path, format!("line {line}: grid_index {g} out of sequence")));
        }
        times.push(rec[ti].trim().parse::<f64>().map_err(|_| bad("time"))?);
        let (x, y) = (rec[xi].trim(), rec[yi].trim());
        coords.push(if x.is_empty() && y.is_empty() {
            None
        } else {
            let x: f64 = x.parse().map_err(|_| bad("x"))?;
            let y: f64 = y.parse().map_err(|_| bad("y"))?;
            Some(Vec2::new(x, y))
        });
    }
    Ok((coords, times))
}

fn read_track(cfg: &RunConfig, path: &Path) -> Result<(Vec<Option<Vec2>>, Vec<f64>)> {
    let track = parse_track(path, TrackFormat::Csv)?;
    let first = track.records().first().map(|f| f.time).ok_or_else(|| CliError::format(path, "track is empty"))?;
    let t0: DateTime<Utc> = match &cfg.data.t0 {
        Some(s) => parse_timestamp(s).ok_or_else(|| CliError::Config(format!("data.t0: cannot parse `{s}`")))?,
        None => first,
    };
    let reg = regularize(&track, t0, minutes(cfg.data.step_minutes), minutes(cfg.data.snap_tol_minutes))?;
    if reg.dropped > 0 {
        log::warn!("{} fix(es) did not snap to the grid", reg.dropped);
    }
    let times = reg.grid.elapsed(minutes(cfg.data.time_unit_minutes));
    Ok((reg.grid.coords().to_vec(), times))
}

fn minutes(m: f64) -> TimeDelta {
    TimeDelta::milliseconds((m * 60_000.0).round() as i64)
}
