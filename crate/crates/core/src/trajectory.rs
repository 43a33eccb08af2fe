//! GPS track ingestion, regularisation onto a fixed-step grid, and the
//! coordinate ⇄ rotated-increment transform.
//!
//! A path `s_0, s_1, …, s_{T-1}` is described by the bearings
//! `b_i = atan2(s_{i+1} - s_i)` and the increments
//! `y_i = R(b_i)⁻¹ (s_{i+2} - s_{i+1})`, i.e. each displacement expressed in
//! the frame of the previous heading. The step-length is `‖y_i‖` and the
//! turning-angle `atan2(y_i2, y_i1)` wrapped to `[0, 2π)`. The first
//! displacement only fixes the initial frame, so a grid of `T` points yields
//! `T - 2` increments.
//!
//! A zero-length displacement has no heading; the previous bearing is carried
//! forward (or `0` at the start of the path).

use std::f64::consts::TAU;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, TimeDelta, Utc};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linalg::{Mat2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fix {
    pub time: DateTime<Utc>,
    pub position: Vec2,
}

/// Timestamped fixes, sorted by time with no duplicate timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrack {
    records: Vec<Fix>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackFormat {
    Csv,
}

impl RawTrack {
    pub fn from_records(mut records: Vec<Fix>) -> Result<Self> {
        records.sort_by_key(|r| r.time);
        if let Some(w) = records.windows(2).find(|w| w[0].time == w[1].time) {
            return Err(Error::DuplicateTimestamp(w[0].time.to_rfc3339()));
        }
        if records.len() < 3 {
            return Err(Error::invalid(format!(
                "a track needs at least 3 fixes, got {}",
                records.len()
            )));
        }
        Ok(RawTrack { records })
    }

    pub fn records(&self) -> &[Fix] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Parse CSV with header `timestamp,x,y`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            timestamp: String,
            x: f64,
            y: f64,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
            .clone();
        let names: Vec<&str> = headers.iter().collect();
        if names != ["timestamp", "x", "y"] {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `timestamp,x,y`, found `{}`", names.join(",")),
            });
        }
        let mut records = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let row = row.map_err(|e| Error::Parse {
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = records.len() as u64 + 2;
            let time = parse_timestamp(&row.timestamp).ok_or_else(|| Error::Parse {
                line,
                message: format!("unparseable timestamp `{}`", row.timestamp),
            })?;
            if !row.x.is_finite() || !row.y.is_finite() {
                return Err(Error::Parse { line, message: "non-finite coordinate".into() });
            }
            records.push(Fix { time, position: Vec2::new(row.x, row.y) });
        }
        RawTrack::from_records(records)
    }
}

/// Accepts RFC 3339 timestamps and offset-less ISO-8601 date-times (read as UTC).
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
        .map(|n| n.and_utc())
}

pub fn parse_track(path: &Path, format: TrackFormat) -> Result<RawTrack> {
    match format {
        TrackFormat::Csv => {
            let file = std::fs::File::open(path)
                .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
            RawTrack::from_csv_reader(file)
        }
    }
}

/// Fixed-step time grid of optional coordinates. Index `i` sits at `t0 + i·step`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackGrid {
    t0: DateTime<Utc>,
    step: TimeDelta,
    coords: Vec<Option<Vec2>>,
}

impl TrackGrid {
    pub fn new(t0: DateTime<Utc>, step: TimeDelta, coords: Vec<Option<Vec2>>) -> Result<Self> {
        if step <= TimeDelta::zero() {
            return Err(Error::invalid("grid step must be positive"));
        }
        if coords.len() < 3 {
            return Err(Error::invalid(format!("a grid needs at least 3 slots, got {}", coords.len())));
        }
        Ok(TrackGrid { t0, step, coords })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn t0(&self) -> DateTime<Utc> {
        self.t0
    }

    pub fn step(&self) -> TimeDelta {
        self.step
    }

    pub fn coords(&self) -> &[Option<Vec2>] {
        &self.coords
    }

    pub fn observed_mask(&self) -> Vec<bool> {
        self.coords.iter().map(Option::is_some).collect()
    }

    pub fn missing_count(&self) -> usize {
        self.coords.iter().filter(|c| c.is_none()).count()
    }

    pub fn time_of(&self, index: usize) -> DateTime<Utc> {
        self.t0 + self.step * index as i32
    }

    /// Grid times measured from `t0` in units of `unit`.
    pub fn elapsed(&self, unit: TimeDelta) -> Vec<f64> {
        let ratio = self.step.num_milliseconds() as f64 / unit.num_milliseconds() as f64;
        (0..self.coords.len()).map(|i| i as f64 * ratio).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Regularized {
    pub grid: TrackGrid,
    /// Records that fell outside every snap window.
    pub dropped: usize,
}

/// Snap each fix to the nearest grid slot within `snap_tol`; slots without a
/// fix are missing. The grid runs from `t0` to the last snapped fix.
pub fn regularize(
    track: &RawTrack,
    t0: DateTime<Utc>,
    step: TimeDelta,
    snap_tol: TimeDelta,
) -> Result<Regularized> {
    if step <= TimeDelta::zero() {
        return Err(Error::invalid("grid step must be positive"));
    }
    if snap_tol < TimeDelta::zero() || snap_tol * 2 >= step {
        return Err(Error::invalid("snap tolerance must be in [0, step/2)"));
    }
    let step_ms = step.num_milliseconds();
    let tol_ms = snap_tol.num_milliseconds();
    let mut slots: Vec<(usize, Vec2)> = Vec::with_capacity(track.len());
    let mut dropped = 0;
    for fix in track.records() {
        let offset = (fix.time - t0).num_milliseconds();
        let index = (offset as f64 / step_ms as f64).round();
        let residual = offset - index as i64 * step_ms;
        if index < 0.0 || residual.abs() > tol_ms {
            dropped += 1;
            continue;
        }
        let index = index as usize;
        if slots.last().is_some_and(|&(last, _)| last == index) {
            return Err(Error::invalid(format!(
                "two records snap to grid index {index} ({})",
                fix.time.to_rfc3339()
            )));
        }
        slots.push((index, fix.position));
    }
    let Some(&(last, _)) = slots.last() else {
        return Err(Error::invalid("no record falls on the grid"));
    };
    let mut coords = vec![None; last + 1];
    for (i, p) in slots {
        coords[i] = Some(p);
    }
    if dropped > 0 {
        log::warn!("{dropped} record(s) outside every snap window were dropped");
    }
    Ok(Regularized { grid: TrackGrid::new(t0, step, coords)?, dropped })
}

/// Counter-clockwise rotation by `bearing`.
pub fn rotation_matrix(bearing: f64) -> Mat2 {
    let (s, c) = bearing.rem_euclid(TAU).sin_cos();
    Mat2::new(c, -s, s, c)
}

pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU { 0.0 } else { w }
}

/// Rotated increments, bearings and their observation pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct Increments {
    pub y: Vec<Option<Vec2>>,
    pub bearings: Vec<Option<f64>>,
}

impl Increments {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn step_length(&self, i: usize) -> Option<f64> {
        self.y[i].map(|v| v.norm())
    }

    pub fn turning_angle(&self, i: usize) -> Option<f64> {
        self.y[i].map(|v| turning_angle(&v))
    }

    /// Export rows `grid_index,y1,y2,step_length,turning_angle,observed`.
    /// Increment `i` is reported at the vertex `i + 1` where the turn happens.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io {
            path: "<increments>".into(),
            source: std::io::Error::other(e.to_string()),
        };
        w.write_record(["grid_index", "y1", "y2", "step_length", "turning_angle", "observed"])
            .map_err(io)?;
        for (i, y) in self.y.iter().enumerate() {
            let row = match y {
                Some(v) => vec![
                    (i + 1).to_string(),
                    format!("{:.17e}", v[0]),
                    format!("{:.17e}", v[1]),
                    format!("{:.17e}", v.norm()),
                    format!("{:.17e}", turning_angle(v)),
                    "1".to_string(),
                ],
                None => vec![(i + 1).to_string(), String::new(), String::new(), String::new(), String::new(), "0".into()],
            };
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|source| Error::Io { path: "<increments>".into(), source })?;
        Ok(())
    }
}

pub fn turning_angle(y: &Vec2) -> f64 {
    wrap_angle(y[1].atan2(y[0]))
}

pub(crate) fn heading(d: &Vec2, previous: f64) -> f64 {
    if d[0] == 0.0 && d[1] == 0.0 {
        previous
    } else {
        wrap_angle(d[1].atan2(d[0]))
    }
}

/// Decompose a coordinate sequence (with gaps) into bearings and increments.
pub fn decompose_coords(coords: &[Option<Vec2>]) -> Increments {
    let n = coords.len();
    let mut bearings = Vec::with_capacity(n.saturating_sub(1));
    let mut previous = Some(0.0);
    for i in 0..n.saturating_sub(1) {
        let b = match (coords[i], coords[i + 1], previous) {
            (Some(a), Some(b), prev) => {
                let d = b - a;
                if d[0] == 0.0 && d[1] == 0.0 {
                    prev
                } else {
                    Some(heading(&d, 0.0))
                }
            }
            _ => None,
        };
        bearings.push(b);
        previous = b;
    }
    let y = (0..n.saturating_sub(2))
        .map(|i| match (bearings[i], coords[i + 1], coords[i + 2]) {
            (Some(b), Some(p), Some(q)) => Some(rotation_matrix(b).transpose() * (q - p)),
            _ => None,
        })
        .collect();
    Increments { y, bearings }
}

pub fn decompose(grid: &TrackGrid) -> Increments {
    decompose_coords(grid.coords())
}

/// Rebuild coordinates from the first two points and fully observed increments.
pub fn reconstruct(start: [Vec2; 2], increments: &Increments) -> Result<Vec<Vec2>> {
    let mut s = Vec::with_capacity(increments.len() + 2);
    s.extend_from_slice(&start);
    let mut bearing = heading(&(start[1] - start[0]), 0.0);
    for (i, y) in increments.y.iter().enumerate() {
        let y = y.ok_or_else(|| Error::invalid(format!("increment {i} is missing")))?;
        let next = s[i + 1] + rotation_matrix(bearing) * y;
        bearing = heading(&(next - s[i + 1]), bearing);
        s.push(next);
    }
    Ok(s)
}
