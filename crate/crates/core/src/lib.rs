#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod family;
pub mod glm;
pub mod plugin;
pub mod persist;
pub mod projection;
pub mod report;
pub mod rng;
pub mod screening;
pub mod selection;
pub mod spar;

pub use ensemble::{
    AvgType, Coefficients, Ensemble, FixedProjection, MarginalModel, Measure, ModelSpec, PredictType,
    StandardizationStats,
};
pub use data::{Dataset, SyntheticSpec, Truth};
pub use error::{Result, SparError};
pub use family::{Family, FamilySpec, Link};
pub use glm::{fit_penalized_glm, GlmFit, GlmOptions};
pub use plugin::{Controls, DataSnapshot, Plugins, ProjectionPlugin, ScreeningPlugin};
pub use projection::{ProjectionMatrix, RpKind, RpSpec};
pub use screening::{ScreenMethod, ScreenSpec, ScreeningResult, SelectionType};
pub use selection::{GridCell, GridChoice, SelectionGrid};
pub use spar::{OptPar, PredictRequest, Spar, SparConfig, SparEnsemble};
