//! Stationary temporal correlation functions, registered by name.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A stationary correlation `C(|t - t'|; φ)` with a single positive decay parameter.
pub trait CorrelationFunction: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Correlation at a nonnegative lag. Callers guarantee `decay > 0`.
    fn correlation(&self, lag: f64, decay: f64) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Exponential;

impl CorrelationFunction for Exponential {
    fn name(&self) -> &'static str {
        "exponential"
    }

    fn correlation(&self, lag: f64, decay: f64) -> f64 {
        (-decay * lag).exp()
    }
}

/// `exp(-φ·dt)`.
pub fn expo_corr(dt: f64, phi: f64) -> Result<f64> {
    if !(phi > 0.0) {
        return Err(Error::invalid(format!("decay must be positive, got {phi}")));
    }
    if !(dt >= 0.0) {
        return Err(Error::invalid(format!("lag must be nonnegative, got {dt}")));
    }
    Ok(Exponential.correlation(dt, phi))
}

/// Name → correlation function lookup.
#[derive(Debug, Clone)]
pub struct CorrelationRegistry {
    entries: BTreeMap<&'static str, Arc<dyn CorrelationFunction>>,
}

impl Default for CorrelationRegistry {
    fn default() -> Self {
        let mut r = CorrelationRegistry { entries: BTreeMap::new() };
        r.register(Arc::new(Exponential));
        r
    }
}

impl CorrelationRegistry {
    pub fn register(&mut self, f: Arc<dyn CorrelationFunction>) {
        self.entries.insert(f.name(), f);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn CorrelationFunction>> {
        self.entries.get(name).cloned().ok_or_else(|| {
            Error::invalid(format!(
                "unknown correlation function `{name}` (available: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}
