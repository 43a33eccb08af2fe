//! Covariate designs `X_t` for the mean of the latent field, registered by name.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Builds one covariate row per increment. `grid_index[i]` is the grid
/// vertex where increment `i` is reported and `times[i]` its model time.
pub trait CovariateDesign: fmt::Debug {
    fn name(&self) -> &'static str;

    fn matrix(&self, grid_index: &[usize], times: &[f64]) -> Result<DMatrix<f64>>;
}

/// Intercept and time divided by `span` (the last time when `None`).
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearTime {
    pub span: Option<f64>,
}

impl CovariateDesign for LinearTime {
    fn name(&self) -> &'static str {
        "linear_time"
    }

    fn matrix(&self, _grid_index: &[usize], times: &[f64]) -> Result<DMatrix<f64>> {
        let span = match self.span {
            Some(s) => s,
            None => times.last().copied().unwrap_or(1.0),
        };
        if !(span > 0.0 && span.is_finite()) {
            return Err(Error::invalid(format!("time span must be positive, got {span}")));
        }
        Ok(DMatrix::from_fn(times.len(), 2, |i, j| if j == 0 { 1.0 } else { times[i] / span }))
    }
}

/// One indicator column per inclusive grid-index window; rows outside every
/// window are zero.
#[derive(Debug, Clone, Default)]
pub struct Windows {
    pub windows: Vec<[usize; 2]>,
}

impl CovariateDesign for Windows {
    fn name(&self) -> &'static str {
        "windows"
    }

    fn matrix(&self, grid_index: &[usize], _times: &[f64]) -> Result<DMatrix<f64>> {
        if self.windows.is_empty() {
            return Err(Error::invalid("the windows design needs at least one window"));
        }
        let mut sorted = self.windows.clone();
        sorted.sort();
        for w in &sorted {
            if w[0] > w[1] {
                return Err(Error::invalid(format!("window [{}, {}] is reversed", w[0], w[1])));
            }
        }
        if sorted.windows(2).any(|p| p[1][0] <= p[0][1]) {
            return Err(Error::invalid("windows overlap"));
        }
        Ok(DMatrix::from_fn(grid_index.len(), self.windows.len(), |i, j| {
            let [a, b] = self.windows[j];
            if (a..=b).contains(&grid_index[i]) { 1.0 } else { 0.0 }
        }))
    }
}

/// Rows read from a CSV with a `grid_index` column followed by covariates.
#[derive(Debug, Clone, Default)]
pub struct CsvDesign {
    pub columns: Vec<String>,
    pub rows: BTreeMap<usize, Vec<f64>>,
}

impl CsvDesign {
    pub fn from_path(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let parse = |line: u64, message: String| Error::Parse { line, message };
        let header = rdr.headers().map_err(|e| parse(1, e.to_string()))?.clone();
        if header.get(0) != Some("grid_index") || header.len() < 2 {
            return Err(parse(1, "expected `grid_index` followed by at least one covariate column".into()));
        }
        let columns = header.iter().skip(1).map(str::to_string).collect();
        let mut rows = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i as u64 + 2;
            let rec = rec.map_err(|e| parse(line, e.to_string()))?;
            let index: usize = rec[0].trim().parse().map_err(|_| parse(line, format!("bad grid index `{}`", &rec[0])))?;
            let values = rec
                .iter()
                .skip(1)
                .map(|v| v.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| parse(line, "covariates must be finite numbers".into()))?;
            if rows.insert(index, values).is_some() {
                return Err(parse(line, format!("grid index {index} repeated")));
            }
        }
        Ok(CsvDesign { columns, rows })
    }
}

impl CovariateDesign for CsvDesign {
    fn name(&self) -> &'static str {
        "csv"
    }

    fn matrix(&self, grid_index: &[usize], _times: &[f64]) -> Result<DMatrix<f64>> {
        let p = self.columns.len();
        let mut x = DMatrix::zeros(grid_index.len(), p);
        for (i, g) in grid_index.iter().enumerate() {
            let row = self.rows.get(g).ok_or_else(|| Error::invalid(format!("no covariates for grid index {g}")))?;
            for (j, v) in row.iter().enumerate() {
                x[(i, j)] = *v;
            }
        }
        Ok(x)
    }
}

/// Settings consumed by the design factories.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DesignOptions {
    pub kind: String,
    pub span: Option<f64>,
    pub windows: Vec<[usize; 2]>,
    pub csv: Option<PathBuf>,
}

type Factory = fn(&DesignOptions) -> Result<Box<dyn CovariateDesign>>;

/// Name → design factory lookup.
#[derive(Debug, Clone)]
pub struct DesignRegistry {
    entries: BTreeMap<&'static str, Factory>,
}

impl Default for DesignRegistry {
    fn default() -> Self {
        let mut r = DesignRegistry { entries: BTreeMap::new() };
        r.register("linear_time", |o| Ok(Box::new(LinearTime { span: o.span })));
        r.register("windows", |o| Ok(Box::new(Windows { windows: o.windows.clone() })));
        r.register("csv", |o| {
            let path = o.csv.as_deref().ok_or_else(|| Error::invalid("the csv design needs a file path"))?;
            Ok(Box::new(CsvDesign::from_path(path)?))
        });
        r
    }
}

impl DesignRegistry {
    pub fn register(&mut self, name: &'static str, factory: Factory) {
        self.entries.insert(name, factory);
    }

    pub fn build(&self, options: &DesignOptions) -> Result<Box<dyn CovariateDesign>> {
        let f = self.entries.get(options.kind.as_str()).ok_or_else(|| {
            Error::invalid(format!("unknown covariate design `{}` (available: {})", options.kind, self.names().join(", ")))
        })?;
        f(options)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}
