//! User-supplied screening and projection generators.
//!
//! Plugins are registered by name in a [`Plugins`] set and referenced from a
//! configuration through [`ScreenMethod::Plugin`](crate::ScreenMethod) or
//! [`RpKind::Plugin`](crate::RpKind), so configurations stay serializable.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Result, SparError};
use crate::projection::ProjectionMatrix;

/// Free-form options forwarded to plugins.
pub type Controls = BTreeMap<String, serde_json::Value>;

/// Computes one screening coefficient per column of `x`.
///
/// Must return a finite vector of length `x.ncols()`. The `controls` map
/// carries the user's options plus a `"family"` entry.
pub trait ScreeningPlugin: Send + Sync {
    fn coefficients(&self, x: &DMatrix<f64>, y: &[f64], controls: &Controls) -> Result<Vec<f64>>;
}

impl<F> ScreeningPlugin for F
where
    F: Fn(&DMatrix<f64>, &[f64], &Controls) -> Result<Vec<f64>> + Send + Sync,
{
    fn coefficients(&self, x: &DMatrix<f64>, y: &[f64], controls: &Controls) -> Result<Vec<f64>> {
        self(x, y, controls)
    }
}

/// Data handed to a projection plugin: standardized predictors and response.
#[derive(Clone, Copy)]
pub struct DataSnapshot<'a> {
    pub x: &'a DMatrix<f64>,
    pub y: &'a [f64],
}

/// Generates an `m x indices.len()` projection for one model.
pub trait ProjectionPlugin: Send + Sync {
    fn generate(
        &self,
        m: usize,
        indices: &[usize],
        data: Option<DataSnapshot<'_>>,
        controls: &Controls,
        rng: &mut crate::rng::SparRng,
    ) -> Result<ProjectionMatrix>;

    /// Whether [`generate`](Self::generate) wants the data snapshot.
    fn data_driven(&self) -> bool {
        false
    }
}

#[derive(Clone, Default)]
pub struct Plugins {
    screening: HashMap<String, Arc<dyn ScreeningPlugin>>,
    projection: HashMap<String, Arc<dyn ProjectionPlugin>>,
}

impl fmt::Debug for Plugins {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s: Vec<_> = self.screening.keys().collect();
        let mut p: Vec<_> = self.projection.keys().collect();
        s.sort();
        p.sort();
        f.debug_struct("Plugins")
            .field("screening", &s)
            .field("projection", &p)
            .finish()
    }
}

impl Plugins {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_screening(&mut self, name: impl Into<String>, plugin: impl ScreeningPlugin + 'static) -> &mut Self {
        self.screening.insert(name.into(), Arc::new(plugin));
        self
    }

    pub fn register_projection(&mut self, name: impl Into<String>, plugin: impl ProjectionPlugin + 'static) -> &mut Self {
        self.projection.insert(name.into(), Arc::new(plugin));
        self
    }

    pub fn screening(&self, name: &str) -> Result<&Arc<dyn ScreeningPlugin>> {
        self.screening
            .get(name)
            .ok_or_else(|| SparError::config(format!("no screening plugin registered as '{name}'")))
    }

    pub fn projection(&self, name: &str) -> Result<&Arc<dyn ProjectionPlugin>> {
        self.projection
            .get(name)
            .ok_or_else(|| SparError::config(format!("no projection plugin registered as '{name}'")))
    }
}
