//! Screening coefficients and per-model variable selection.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SparError};
use crate::family::FamilySpec;
use crate::glm::{fit_penalized_glm, GlmOptions};
use crate::plugin::{Controls, Plugins};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScreenMethod {
    /// Pearson correlation with the response.
    Cor,
    /// Slope of a univariate GLM per predictor.
    Marglik,
    /// Multivariate ridge coefficients with a small penalty.
    Ridge,
    /// A user function registered under this name.
    Plugin(String),
}

impl fmt::Display for ScreenMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScreenMethod::Cor => f.write_str("cor"),
            ScreenMethod::Marglik => f.write_str("marglik"),
            ScreenMethod::Ridge => f.write_str("ridge"),
            ScreenMethod::Plugin(name) => f.write_str(name),
        }
    }
}

impl FromStr for ScreenMethod {
    type Err = SparError;

    /// Unknown names are taken as plugin names.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "cor" => ScreenMethod::Cor,
            "marglik" => ScreenMethod::Marglik,
            "ridge" | "glmnet" => ScreenMethod::Ridge,
            "" => return Err(SparError::config("empty screening method")),
            other => ScreenMethod::Plugin(other.to_string()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SelectionType {
    /// Weighted sampling without replacement, weights proportional to |omega|.
    #[default]
    Prob,
    /// The `nscreen` largest |omega|.
    Fixed,
}

impl FromStr for SelectionType {
    type Err = SparError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prob" => Ok(SelectionType::Prob),
            "fixed" => Ok(SelectionType::Fixed),
            other => Err(SparError::config(format!("unknown screening type '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScreenSpec {
    pub method: ScreenMethod,
    /// Number of predictors kept per model; `None` means `2n`.
    pub nscreen: Option<usize>,
    pub selection_type: SelectionType,
    /// Fraction of rows used only for computing the screening coefficients.
    pub split_data_prop: Option<f64>,
    /// Penalty for `Marglik` (default 0) and `Ridge` (default `1e-2 * n`).
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub controls: Controls,
}

impl Default for ScreenSpec {
    fn default() -> Self {
        ScreenSpec::ridge()
    }
}

impl ScreenSpec {
    pub fn new(method: ScreenMethod) -> Self {
        ScreenSpec {
            method,
            nscreen: None,
            selection_type: SelectionType::Prob,
            split_data_prop: None,
            epsilon: None,
            controls: Controls::new(),
        }
    }

    pub fn cor() -> Self {
        Self::new(ScreenMethod::Cor)
    }

    pub fn marglik() -> Self {
        Self::new(ScreenMethod::Marglik)
    }

    pub fn ridge() -> Self {
        Self::new(ScreenMethod::Ridge)
    }

    pub fn plugin(name: impl Into<String>) -> Self {
        Self::new(ScreenMethod::Plugin(name.into()))
    }

    pub fn nscreen(mut self, nscreen: usize) -> Self {
        self.nscreen = Some(nscreen);
        self
    }

    pub fn fixed(mut self) -> Self {
        self.selection_type = SelectionType::Fixed;
        self
    }

    pub fn split_data_prop(mut self, prop: f64) -> Self {
        self.split_data_prop = Some(prop);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.nscreen == Some(0) {
            return Err(SparError::config("nscreen must be at least 1"));
        }
        if let Some(prop) = self.split_data_prop {
            if !(prop > 0.0 && prop < 1.0) {
                return Err(SparError::config("split_data_prop must lie strictly in (0, 1)"));
            }
        }
        if let Some(eps) = self.epsilon {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(SparError::config("screening penalty must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningResult {
    pub omega: Vec<f64>,
    /// Constant columns; their coefficient is exactly zero.
    pub excluded: Vec<usize>,
    pub method: ScreenMethod,
    /// Univariate fits that did not converge (marglik only).
    pub nonconverged: usize,
}

impl ScreeningResult {
    fn new(mut omega: Vec<f64>, excluded: Vec<usize>, method: ScreenMethod) -> Self {
        for &j in &excluded {
            omega[j] = 0.0;
        }
        ScreeningResult {
            omega,
            excluded,
            method,
            nonconverged: 0,
        }
    }
}

/// Indices of columns whose values are all identical.
pub fn constant_columns(x: &DMatrix<f64>) -> Vec<usize> {
    if x.nrows() == 0 {
        return (0..x.ncols()).collect();
    }
    (0..x.ncols())
        .filter(|&j| {
            let col = x.column(j);
            let first = col[0];
            col.iter().all(|&v| v == first)
        })
        .collect()
}

fn require_rows(n: usize) -> Result<()> {
    if n < 3 {
        return Err(SparError::InsufficientData { needed: 3, got: n });
    }
    Ok(())
}

fn is_constant(y: &[f64]) -> bool {
    y.iter().all(|&v| v == y[0])
}

/// Pearson correlation of every column with `y`.
pub fn screen_cor(x: &DMatrix<f64>, y: &[f64]) -> Result<ScreeningResult> {
    let n = x.nrows();
    require_rows(n)?;
    check_rows(x, y)?;
    let excluded = constant_columns(x);
    let nf = n as f64;
    let ybar = y.iter().sum::<f64>() / nf;
    let syy: f64 = y.iter().map(|v| (v - ybar) * (v - ybar)).sum();
    let omega = (0..x.ncols())
        .map(|j| {
            let col = x.column(j);
            let xbar = col.sum() / nf;
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for (xi, yi) in col.iter().zip(y) {
                sxy += (xi - xbar) * (yi - ybar);
                sxx += (xi - xbar) * (xi - xbar);
            }
            if sxx > 0.0 && syy > 0.0 {
                (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    Ok(ScreeningResult::new(omega, excluded, ScreenMethod::Cor))
}

/// Slope of `y ~ 1 + x_j` under `fam` for every column.
pub fn screen_marglik(
    x: &DMatrix<f64>,
    y: &[f64],
    fam: FamilySpec,
    opts: &GlmOptions,
) -> Result<ScreeningResult> {
    let n = x.nrows();
    require_rows(n)?;
    check_rows(x, y)?;
    fam.family.validate_response(y)?;
    let excluded = constant_columns(x);
    let p = x.ncols();
    if is_constant(y) {
        return Ok(ScreeningResult::new(vec![0.0; p], excluded, ScreenMethod::Marglik));
    }
    let fits: Vec<Result<Option<f64>>> = (0..p)
        .into_par_iter()
        .map(|j| {
            let z = DMatrix::from_column_slice(n, 1, x.column(j).as_slice());
            match fit_penalized_glm(&z, y, fam, opts) {
                Ok(fit) if fit.converged => Ok(Some(fit.coefficients[0])),
                Ok(_) | Err(SparError::Singular) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut omega = Vec::with_capacity(p);
    let mut nonconverged = 0;
    for (j, fit) in fits.into_iter().enumerate() {
        match fit? {
            Some(slope) => omega.push(slope),
            None => {
                if excluded.binary_search(&j).is_err() {
                    nonconverged += 1;
                }
                omega.push(0.0)
            }
        }
    }
    if nonconverged > 0 {
        log::warn!("{nonconverged} univariate screening fits did not converge; their coefficient is set to 0");
    }
    let mut res = ScreeningResult::new(omega, excluded, ScreenMethod::Marglik);
    res.nonconverged = nonconverged;
    Ok(res)
}

/// Default penalty for ridge screening.
pub fn default_ridge_epsilon(n: usize) -> f64 {
    1e-2 * n as f64
}

/// Ridge coefficients of `y` on all columns with penalty `epsilon`. Wide
/// designs are solved in dual form.
pub fn screen_ridge(
    x: &DMatrix<f64>,
    y: &[f64],
    fam: FamilySpec,
    epsilon: f64,
) -> Result<ScreeningResult> {
    let n = x.nrows();
    require_rows(n)?;
    check_rows(x, y)?;
    let excluded = constant_columns(x);
    if is_constant(y) {
        fam.family.validate_response(y)?;
        return Ok(ScreeningResult::new(vec![0.0; x.ncols()], excluded, ScreenMethod::Ridge));
    }
    let opts = GlmOptions::with_epsilon(epsilon);
    let fit = fit_penalized_glm(x, y, fam, &opts)?;
    if !fit.converged {
        log::warn!("ridge screening fit did not converge; using the last iterate");
    }
    let omega = fit.coefficients.iter().copied().collect();
    let mut res = ScreeningResult::new(omega, excluded, ScreenMethod::Ridge);
    res.nonconverged = usize::from(!fit.converged);
    Ok(res)
}

/// Compute screening coefficients as described by `spec`.
pub fn compute_screening(
    x: &DMatrix<f64>,
    y: &[f64],
    fam: FamilySpec,
    spec: &ScreenSpec,
    plugins: &Plugins,
) -> Result<ScreeningResult> {
    let n = x.nrows();
    match &spec.method {
        ScreenMethod::Cor => screen_cor(x, y),
        ScreenMethod::Marglik => {
            let opts = GlmOptions::with_epsilon(spec.epsilon.unwrap_or(0.0));
            screen_marglik(x, y, fam, &opts)
        }
        ScreenMethod::Ridge => {
            let eps = spec.epsilon.unwrap_or_else(|| default_ridge_epsilon(n));
            screen_ridge(x, y, fam, eps)
        }
        ScreenMethod::Plugin(name) => {
            require_rows(n)?;
            let plugin = plugins.screening(name)?;
            let mut controls = spec.controls.clone();
            controls
                .entry("family".to_string())
                .or_insert_with(|| serde_json::Value::String(fam.family.name().into()));
            let omega = plugin.coefficients(x, y, &controls)?;
            if omega.len() != x.ncols() {
                return Err(SparError::shape(format!(
                    "screening plugin '{name}' returned {} coefficients for {} columns",
                    omega.len(),
                    x.ncols()
                )));
            }
            if let Some(j) = omega.iter().position(|v| !v.is_finite()) {
                return Err(SparError::Numerical(format!(
                    "screening plugin '{name}' returned a non-finite coefficient at column {j}"
                )));
            }
            Ok(ScreeningResult::new(omega, constant_columns(x), spec.method.clone()))
        }
    }
}

/// Choose the index set for one model. Output is sorted ascending.
///
/// When `nscreen` covers every non-excluded column all of them are returned.
/// Fixed selection keeps the largest |omega| (ties to the smaller index).
/// Probabilistic selection draws sequentially without replacement with
/// probabilities proportional to |omega|, implemented with exponential keys.
/// Zero-weight columns only fill slots once positive weights are exhausted.
pub fn select_screened<R: Rng + ?Sized>(
    sr: &ScreeningResult,
    nscreen: usize,
    selection: SelectionType,
    rng: &mut R,
) -> Vec<usize> {
    let p = sr.omega.len();
    let candidates: Vec<usize> = (0..p).filter(|j| sr.excluded.binary_search(j).is_err()).collect();
    if nscreen >= candidates.len() {
        return candidates;
    }
    let mut chosen = match selection {
        SelectionType::Fixed => {
            let mut order = candidates;
            order.sort_by(|&a, &b| {
                sr.omega[b]
                    .abs()
                    .total_cmp(&sr.omega[a].abs())
                    .then(a.cmp(&b))
            });
            order.truncate(nscreen);
            order
        }
        SelectionType::Prob => {
            let (positive, zero): (Vec<usize>, Vec<usize>) =
                candidates.into_iter().partition(|&j| sr.omega[j] != 0.0);
            // log(u) / w orders the same way as u^(1/w)
            let mut keyed: Vec<(f64, usize)> = positive
                .into_iter()
                .map(|j| {
                    let u: f64 = rng.random();
                    let u = u.max(f64::MIN_POSITIVE);
                    (u.ln() / sr.omega[j].abs(), j)
                })
                .collect();
            keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut out: Vec<usize> = keyed.into_iter().take(nscreen).map(|(_, j)| j).collect();
            if out.len() < nscreen {
                let mut rest = zero;
                rest.shuffle(rng);
                out.extend(rest.into_iter().take(nscreen - out.len()));
            }
            out
        }
    };
    chosen.sort_unstable();
    chosen
}

/// Row split into a screening part and a model-fitting part. Without a
/// proportion both parts are all rows.
pub fn split_for_screening<R: Rng + ?Sized>(
    n: usize,
    split_data_prop: Option<f64>,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let all: Vec<usize> = (0..n).collect();
    let Some(prop) = split_data_prop else {
        return Ok((all.clone(), all));
    };
    if !(prop > 0.0 && prop < 1.0) {
        return Err(SparError::config("split_data_prop must lie strictly in (0, 1)"));
    }
    let n_screen = (prop * n as f64).round() as usize;
    if n_screen < 3 || n - n_screen < 3 {
        return Err(SparError::config(format!(
            "splitting {n} rows with proportion {prop} leaves fewer than 3 rows in one part"
        )));
    }
    let mut perm = all;
    perm.shuffle(rng);
    let mut screen = perm[..n_screen].to_vec();
    let mut model = perm[n_screen..].to_vec();
    screen.sort_unstable();
    model.sort_unstable();
    Ok((screen, model))
}

fn check_rows(x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(SparError::shape(format!(
            "predictors have {} rows but response has length {}",
            x.nrows(),
            y.len()
        )));
    }
    Ok(())
}
