//! The ensemble itself: standardization, marginal model fits on screened and
//! projected predictors, thresholding, coefficient averaging and prediction.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SparError};
use crate::family::{Family, FamilySpec};
use crate::glm::{fit_penalized_glm, GlmOptions};
use crate::plugin::{DataSnapshot, Plugins};
use crate::projection::{self, ProjectionMatrix, RpKind, RpSpec};
use crate::rng::{substream, Purpose};
use crate::screening::{self, compute_screening, ScreenSpec, ScreeningResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub x_mean: Vec<f64>,
    /// Sample standard deviations (denominator `n - 1`); 1 for constant columns.
    pub x_sd: Vec<f64>,
    /// Response centre and scale; 0 and 1 for non-gaussian families.
    pub y_mean: f64,
    pub y_sd: f64,
    pub constant_cols: Vec<usize>,
}

impl StandardizationStats {
    pub fn p(&self) -> usize {
        self.x_mean.len()
    }

    /// Apply the stored column transformation to new rows.
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_cols(x, self.p())?;
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            if self.constant_cols.binary_search(&j).is_ok() {
                col.fill(0.0);
            } else {
                col.add_scalar_mut(-self.x_mean[j]);
                col /= self.x_sd[j];
            }
        }
        Ok(out)
    }
}

fn check_cols(x: &DMatrix<f64>, p: usize) -> Result<()> {
    if x.ncols() != p {
        return Err(SparError::shape(format!(
            "expected {p} predictor columns, got {}",
            x.ncols()
        )));
    }
    Ok(())
}

fn mean_sd<'a>(v: impl IntoIterator<Item = &'a f64> + Copy, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = v.into_iter().sum::<f64>() / nf;
    let ss: f64 = v.into_iter().map(|a| (a - mean) * (a - mean)).sum();
    (mean, (ss / (nf - 1.0)).sqrt())
}

/// Centre and scale the columns of `x` (and `y` for gaussian).
///
/// Constant columns become zero and are recorded with sd 1.
pub fn standardize(
    x: &DMatrix<f64>,
    y: &[f64],
    fam: FamilySpec,
) -> Result<(DMatrix<f64>, Vec<f64>, StandardizationStats)> {
    let n = x.nrows();
    if n < 3 {
        return Err(SparError::InsufficientData { needed: 3, got: n });
    }
    if y.len() != n {
        return Err(SparError::shape(format!(
            "predictors have {n} rows but response has length {}",
            y.len()
        )));
    }
    fam.family.validate_response(y)?;
    let p = x.ncols();
    let constant_cols = screening::constant_columns(x);
    let mut x_mean = Vec::with_capacity(p);
    let mut x_sd = Vec::with_capacity(p);
    let mut xs = x.clone();
    for (j, mut col) in xs.column_iter_mut().enumerate() {
        let (mean, sd) = mean_sd(col.as_slice(), n);
        if constant_cols.binary_search(&j).is_ok() || !(sd > 0.0) {
            x_mean.push(mean);
            x_sd.push(1.0);
            col.fill(0.0);
        } else {
            x_mean.push(mean);
            x_sd.push(sd);
            col.add_scalar_mut(-mean);
            col /= sd;
        }
    }
    let (y_std, y_mean, y_sd) = match fam.family {
        Family::Gaussian => {
            let (mean, sd) = mean_sd(y, n);
            let sd = if sd > 0.0 { sd } else { 1.0 };
            (y.iter().map(|v| (v - mean) / sd).collect(), mean, sd)
        }
        _ => (y.to_vec(), 0.0, 1.0),
    };
    Ok((
        xs,
        y_std,
        StandardizationStats {
            x_mean,
            x_sd,
            y_mean,
            y_sd,
            constant_cols,
        },
    ))
}

/// Settings for each marginal GLM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    /// Ridge penalty; `None` picks the family default.
    pub epsilon: Option<f64>,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        let d = GlmOptions::default();
        ModelSpec {
            epsilon: None,
            max_iter: d.max_iter,
            tol: d.tol,
        }
    }
}

impl ModelSpec {
    pub fn glm_options(&self, family: Family, n: usize) -> GlmOptions {
        GlmOptions {
            epsilon: self
                .epsilon
                .unwrap_or_else(|| GlmOptions::default_epsilon(family, n)),
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }
}

/// One ensemble member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalModel {
    /// Screened predictor indices, ascending.
    pub indices: Vec<usize>,
    pub projection: ProjectionMatrix,
    pub gamma0: f64,
    pub gamma: Vec<f64>,
    /// Standardized-scale coefficients on `indices`: `Phi^T gamma`.
    pub beta: Vec<f64>,
    pub converged: bool,
}

impl MarginalModel {
    pub fn goal_dim(&self) -> usize {
        self.projection.m()
    }
}

/// Externally supplied screening set and projection for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedProjection {
    pub indices: Vec<usize>,
    pub projection: ProjectionMatrix,
}

impl From<&MarginalModel> for FixedProjection {
    fn from(m: &MarginalModel) -> Self {
        FixedProjection {
            indices: m.indices.clone(),
            projection: m.projection.clone(),
        }
    }
}

/// Everything [`fit_ensemble`] needs besides the data.
#[derive(Debug, Clone, Copy)]
pub struct EnsembleSettings<'a> {
    pub family: FamilySpec,
    pub screen: &'a ScreenSpec,
    pub rp: &'a RpSpec,
    pub model: &'a ModelSpec,
    pub n_models: usize,
    pub master_seed: u64,
    pub plugins: &'a Plugins,
}

#[derive(Debug, Clone)]
pub struct EnsembleFit {
    pub models: Vec<MarginalModel>,
    pub screening: ScreeningResult,
    pub failed: usize,
}

/// Fit `n_models` marginal models on standardized data.
///
/// With `fixed` the screening sets and projections are taken verbatim; a
/// data-driven CW projection then only has its values refreshed from the
/// current screening coefficients.
pub fn fit_ensemble(
    x_std: &DMatrix<f64>,
    y_std: &[f64],
    settings: &EnsembleSettings<'_>,
    fixed: Option<&[FixedProjection]>,
) -> Result<EnsembleFit> {
    let n = x_std.nrows();
    let p = x_std.ncols();
    let fam = settings.family;
    settings.screen.validate()?;
    settings.rp.validate()?;
    if settings.n_models == 0 {
        return Err(SparError::config("the ensemble needs at least one model"));
    }
    if let Some(f) = fixed {
        if f.len() < settings.n_models {
            return Err(SparError::config(format!(
                "{} fixed projections supplied for {} models",
                f.len(),
                settings.n_models
            )));
        }
        for (k, fp) in f.iter().enumerate() {
            if fp.indices.len() != fp.projection.q() || fp.indices.iter().any(|&j| j >= p) {
                return Err(SparError::shape(format!(
                    "fixed projection {k} does not match its index set"
                )));
            }
        }
    }

    let mut split_rng = substream(settings.master_seed, Purpose::DataSplit, 0);
    let (screen_rows, model_rows) =
        screening::split_for_screening(n, settings.screen.split_data_prop, &mut split_rng)?;
    let split = settings.screen.split_data_prop.is_some();
    let (x_model, y_model) = if split {
        (x_std.select_rows(&model_rows), model_rows.iter().map(|&i| y_std[i]).collect())
    } else {
        (x_std.clone(), y_std.to_vec())
    };

    let nscreen = settings.screen.nscreen.unwrap_or(2 * n);
    let excluded = screening::constant_columns(x_std);
    let needs_selection = fixed.is_none() && nscreen < p - excluded.len();
    let screening_res = if needs_selection || settings.rp.is_data_driven_cw() {
        if split {
            let xs = x_std.select_rows(&screen_rows);
            let ys: Vec<f64> = screen_rows.iter().map(|&i| y_std[i]).collect();
            compute_screening(&xs, &ys, fam, settings.screen, settings.plugins)?
        } else {
            compute_screening(x_std, y_std, fam, settings.screen, settings.plugins)?
        }
    } else {
        ScreeningResult {
            omega: vec![0.0; p],
            excluded: excluded.clone(),
            method: settings.screen.method.clone(),
            nonconverged: 0,
        }
    };

    let n_fit = x_model.nrows();
    let glm_opts = settings.model.glm_options(fam.family, n_fit);
    let goal_dims = if fixed.is_none() {
        let (lo, hi) = settings.rp.goal_bounds(n, p)?;
        let mut rng = substream(settings.master_seed, Purpose::GoalDim, 0);
        projection::draw_goal_dims(settings.n_models, lo, hi, &mut rng)?
    } else {
        Vec::new()
    };
    let plugin = match &settings.rp.kind {
        RpKind::Plugin(name) => Some(settings.plugins.projection(name)?.clone()),
        _ => None,
    };

    let fit_one = |k: usize| -> Result<MarginalModel> {
        let (indices, phi) = match fixed {
            Some(f) => {
                let fp = &f[k];
                let phi = if settings.rp.is_data_driven_cw() {
                    let diag: Vec<f64> = fp.indices.iter().map(|&j| screening_res.omega[j]).collect();
                    fp.projection.with_cw_values(&diag)?
                } else {
                    fp.projection.clone()
                };
                (fp.indices.clone(), phi)
            }
            None => {
                let mut srng = substream(settings.master_seed, Purpose::Screening, k as u64);
                let indices =
                    screening::select_screened(&screening_res, nscreen, settings.screen.selection_type, &mut srng);
                let q = indices.len();
                if q == 0 {
                    return Err(SparError::Numerical("no non-constant predictors to screen".into()));
                }
                let m = goal_dims[k].min(q);
                let mut prng = substream(settings.master_seed, Purpose::Projection, k as u64);
                let phi = generate_projection(
                    settings,
                    m,
                    &indices,
                    &screening_res,
                    &x_model,
                    &y_model,
                    &glm_opts,
                    plugin.as_deref(),
                    &mut prng,
                )?;
                (indices, phi)
            }
        };
        Ok(fit_marginal(&x_model, &y_model, fam, &glm_opts, indices, phi))
    };

    let results: Vec<Result<MarginalModel>> = (0..settings.n_models).into_par_iter().map(fit_one).collect();
    let mut models = Vec::with_capacity(settings.n_models);
    for r in results {
        models.push(r?);
    }
    let failed = models.iter().filter(|m| !m.converged).count();
    if failed == models.len() {
        return Err(SparError::Numerical("every marginal model failed to fit".into()));
    }
    if failed > 0 {
        log::warn!("{failed} of {} marginal models did not converge and contribute zero coefficients", models.len());
    }
    Ok(EnsembleFit {
        models,
        screening: screening_res,
        failed,
    })
}

#[allow(clippy::too_many_arguments)]
fn generate_projection(
    settings: &EnsembleSettings<'_>,
    m: usize,
    indices: &[usize],
    sr: &ScreeningResult,
    x_model: &DMatrix<f64>,
    y_model: &[f64],
    glm_opts: &GlmOptions,
    plugin: Option<&dyn crate::plugin::ProjectionPlugin>,
    rng: &mut crate::rng::SparRng,
) -> Result<ProjectionMatrix> {
    let rp = settings.rp;
    let q = indices.len();
    match &rp.kind {
        RpKind::Gaussian => Ok(projection::gen_gaussian(m, q, rng)),
        RpKind::Sparse => projection::gen_sparse(m, q, rp.psi, rng),
        RpKind::Cw => {
            let diag: Vec<f64> = indices.iter().map(|&j| sr.omega[j]).collect();
            projection::gen_cw(m, q, rp.data_driven, Some(&diag), rng)
        }
        RpKind::Haar => projection::gen_haar(m, q, rng),
        RpKind::HaarSelect => {
            let x_sub = x_model.select_columns(indices);
            let sel = projection::gen_haar_select(
                m,
                &x_sub,
                y_model,
                settings.family,
                glm_opts,
                rp.b2,
                rp.holdout_frac,
                rng,
            )?;
            Ok(sel.matrix)
        }
        RpKind::Plugin(name) => {
            let plugin = plugin.ok_or_else(|| SparError::config(format!("projection plugin '{name}' missing")))?;
            let data = plugin.data_driven().then_some(DataSnapshot { x: x_model, y: y_model });
            let phi = plugin.generate(m, indices, data, &rp.controls, rng)?;
            if phi.q() != q || phi.m() == 0 {
                return Err(SparError::shape(format!(
                    "projection plugin '{name}' returned a {}x{} matrix for {q} screened predictors",
                    phi.m(),
                    phi.q()
                )));
            }
            Ok(phi)
        }
    }
}

/// Penalty used when an unpenalized marginal fit is singular.
fn fallback_epsilon(n: usize) -> f64 {
    1e-6 * n as f64
}

fn fit_marginal(
    x: &DMatrix<f64>,
    y: &[f64],
    fam: FamilySpec,
    opts: &GlmOptions,
    indices: Vec<usize>,
    phi: ProjectionMatrix,
) -> MarginalModel {
    let z = phi.project_columns(x, &indices);
    let mut fit = fit_penalized_glm(&z, y, fam, opts);
    if matches!(fit, Err(SparError::Singular)) && opts.epsilon == 0.0 {
        let retry = GlmOptions {
            epsilon: fallback_epsilon(x.nrows()),
            ..*opts
        };
        fit = fit_penalized_glm(&z, y, fam, &retry);
    }
    match fit {
        Ok(f) if f.converged => {
            let gamma: Vec<f64> = f.coefficients.iter().copied().collect();
            let beta = phi.transpose_mul(&gamma);
            MarginalModel {
                indices,
                projection: phi,
                gamma0: f.intercept,
                gamma,
                beta,
                converged: true,
            }
        }
        other => {
            if let Err(e) = &other {
                log::debug!("marginal model failed: {e}");
            }
            let q = indices.len();
            let m = phi.m();
            MarginalModel {
                indices,
                projection: phi,
                gamma0: intercept_only(y, fam.family),
                gamma: vec![0.0; m],
                beta: vec![0.0; q],
                converged: false,
            }
        }
    }
}

fn intercept_only(y: &[f64], family: Family) -> f64 {
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    family.link(family.clamp_mu(ybar))
}

/// Threshold grid: zero plus the quantiles of the nonzero |beta| at levels
/// `i / nnu`, `i = 1..nnu-1` (linear interpolation between order statistics).
/// An explicit grid is sorted and deduplicated instead.
pub fn build_nu_grid(models: &[MarginalModel], nnu: usize, explicit: Option<&[f64]>) -> Result<Vec<f64>> {
    if let Some(nus) = explicit {
        if nus.is_empty() {
            return Err(SparError::config("explicit threshold grid is empty"));
        }
        if nus.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(SparError::config("thresholds must be finite and non-negative"));
        }
        let mut g = nus.to_vec();
        g.sort_by(f64::total_cmp);
        g.dedup();
        return Ok(g);
    }
    if nnu == 0 {
        return Err(SparError::config("nnu must be at least 1"));
    }
    let mut abs: Vec<f64> = models
        .iter()
        .flat_map(|m| m.beta.iter())
        .filter(|b| **b != 0.0)
        .map(|b| b.abs())
        .collect();
    if abs.is_empty() {
        log::warn!("all marginal coefficients are zero; threshold grid is {{0}}");
        return Ok(vec![0.0]);
    }
    abs.sort_by(f64::total_cmp);
    let mut grid = vec![0.0];
    grid.extend((1..nnu).map(|i| quantile_sorted(&abs, i as f64 / nnu as f64)));
    grid.dedup();
    Ok(grid)
}

/// Type-7 quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Zero every entry with `|beta| < nu`; entries equal to `nu` survive.
pub fn threshold_beta(beta: &[f64], nu: f64) -> Vec<f64> {
    beta.iter().map(|&b| if b.abs() < nu { 0.0 } else { b }).collect()
}

/// Averaged coefficients on the original predictor scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub intercept: f64,
    pub beta: Vec<f64>,
    pub nu: f64,
    pub nummod: usize,
}

impl Coefficients {
    pub fn active_count(&self) -> usize {
        self.beta.iter().filter(|b| **b != 0.0).count()
    }

    /// Linear predictor for the rows of `x`.
    pub fn linear_predictor(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        check_cols(x, self.beta.len())?;
        let mut eta = vec![self.intercept; x.nrows()];
        for (j, &b) in self.beta.iter().enumerate() {
            if b != 0.0 {
                for (e, v) in eta.iter_mut().zip(x.column(j).iter()) {
                    *e += b * v;
                }
            }
        }
        Ok(eta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictType {
    #[default]
    Response,
    Link,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AvgType {
    #[default]
    Link,
    Response,
}

impl FromStr for PredictType {
    type Err = SparError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "response" => Ok(PredictType::Response),
            "link" => Ok(PredictType::Link),
            o => Err(SparError::config(format!("unknown prediction type '{o}'"))),
        }
    }
}

impl FromStr for AvgType {
    type Err = SparError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "response" => Ok(AvgType::Response),
            "link" => Ok(AvgType::Link),
            o => Err(SparError::config(format!("unknown averaging type '{o}'"))),
        }
    }
}

/// A fitted set of marginal models with the standardization they were fit on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub family: FamilySpec,
    pub stats: StandardizationStats,
    pub models: Vec<MarginalModel>,
}

impl Ensemble {
    pub fn p(&self) -> usize {
        self.stats.p()
    }

    fn check_nummod(&self, nummod: usize) -> Result<()> {
        if nummod < 1 || nummod > self.models.len() {
            return Err(SparError::config(format!(
                "nummod must lie in 1..={}, got {nummod}",
                self.models.len()
            )));
        }
        Ok(())
    }

    /// Thresholded standardized coefficients of model `k` as a dense p-vector.
    pub fn standardized_beta(&self, k: usize, nu: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.p()];
        let model = &self.models[k];
        for (&j, &b) in model.indices.iter().zip(&model.beta) {
            if b.abs() >= nu {
                out[j] = b;
            }
        }
        out
    }

    fn destandardize(&self, beta_std: &[f64], gamma0: f64, nu: f64, nummod: usize) -> Coefficients {
        let s = &self.stats;
        let beta: Vec<f64> = beta_std
            .iter()
            .zip(&s.x_sd)
            .map(|(&b, &sd)| if b == 0.0 { 0.0 } else { b * s.y_sd / sd })
            .collect();
        let shift: f64 = beta.iter().zip(&s.x_mean).map(|(b, m)| b * m).sum();
        Coefficients {
            intercept: s.y_mean + s.y_sd * gamma0 - shift,
            beta,
            nu,
            nummod,
        }
    }

    /// Average of the first `nummod` thresholded models, destandardized.
    pub fn average_coefficients(&self, nu: f64, nummod: usize) -> Result<Coefficients> {
        self.check_nummod(nummod)?;
        let mut acc = vec![0.0; self.p()];
        let mut g0 = 0.0;
        for model in &self.models[..nummod] {
            g0 += model.gamma0;
            for (&j, &b) in model.indices.iter().zip(&model.beta) {
                if b.abs() >= nu {
                    acc[j] += b;
                }
            }
        }
        let mf = nummod as f64;
        acc.iter_mut().for_each(|v| *v /= mf);
        Ok(self.destandardize(&acc, g0 / mf, nu, nummod))
    }

    /// Destandardized coefficients of a single thresholded model.
    pub fn model_coefficients(&self, k: usize, nu: f64) -> Coefficients {
        let b = self.standardized_beta(k, nu);
        self.destandardize(&b, self.models[k].gamma0, nu, 1)
    }

    pub fn predict(&self, x_new: &DMatrix<f64>, opts: &PredictOptions) -> Result<Vec<f64>> {
        check_cols(x_new, self.p())?;
        let family = self.family.family;
        match opts.avg_type {
            AvgType::Link => {
                let coef = self.average_coefficients(opts.nu, opts.nummod)?;
                predict_with_coefficients(&coef, self.family, x_new, opts.predict_type)
            }
            AvgType::Response => {
                self.check_nummod(opts.nummod)?;
                let mut acc = vec![0.0; x_new.nrows()];
                for k in 0..opts.nummod {
                    let coef = self.model_coefficients(k, opts.nu);
                    let eta = coef.linear_predictor(x_new)?;
                    for (a, e) in acc.iter_mut().zip(eta) {
                        *a += family.linkinv(e);
                    }
                }
                let mf = opts.nummod as f64;
                Ok(acc
                    .into_iter()
                    .map(|a| {
                        let mu = a / mf;
                        match opts.predict_type {
                            PredictType::Response => mu,
                            PredictType::Link => family.link(family.clamp_mu(mu)),
                        }
                    })
                    .collect())
            }
        }
    }
}

/// Predictions from explicit coefficients.
pub fn predict_with_coefficients(
    coef: &Coefficients,
    fam: FamilySpec,
    x_new: &DMatrix<f64>,
    predict_type: PredictType,
) -> Result<Vec<f64>> {
    let eta = coef.linear_predictor(x_new)?;
    Ok(match predict_type {
        PredictType::Link => eta,
        PredictType::Response => eta.into_iter().map(|e| fam.family.linkinv(e)).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictOptions {
    pub predict_type: PredictType,
    pub avg_type: AvgType,
    pub nu: f64,
    pub nummod: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Measure {
    #[default]
    #[serde(rename = "deviance")]
    Deviance,
    #[serde(rename = "mse")]
    Mse,
    #[serde(rename = "mae")]
    Mae,
    #[serde(rename = "class")]
    Class,
    #[serde(rename = "1-auc")]
    OneMinusAuc,
}

impl Measure {
    pub fn name(self) -> &'static str {
        match self {
            Measure::Deviance => "deviance",
            Measure::Mse => "mse",
            Measure::Mae => "mae",
            Measure::Class => "class",
            Measure::OneMinusAuc => "1-auc",
        }
    }

    pub fn check_family(self, family: Family) -> Result<()> {
        if matches!(self, Measure::Class | Measure::OneMinusAuc) && family != Family::Binomial {
            return Err(SparError::config(format!(
                "measure '{}' is only available for the binomial family",
                self.name()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = SparError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deviance" => Ok(Measure::Deviance),
            "mse" => Ok(Measure::Mse),
            "mae" => Ok(Measure::Mae),
            "class" => Ok(Measure::Class),
            "1-auc" | "one_minus_auc" => Ok(Measure::OneMinusAuc),
            o => Err(SparError::config(format!("unknown measure '{o}'"))),
        }
    }
}

/// Evaluate `measure` for response-scale predictions `mu`. `1-auc` is NaN
/// when only one class is present.
pub fn eval_measure(measure: Measure, fam: FamilySpec, y: &[f64], mu: &[f64]) -> Result<f64> {
    measure.check_family(fam.family)?;
    if y.len() != mu.len() {
        return Err(SparError::shape(format!(
            "{} responses but {} predictions",
            y.len(),
            mu.len()
        )));
    }
    if y.is_empty() {
        return Err(SparError::InsufficientData { needed: 1, got: 0 });
    }
    let n = y.len() as f64;
    Ok(match measure {
        Measure::Deviance => fam.deviance_eval(y, mu)?,
        Measure::Mse => y.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n,
        Measure::Mae => y.iter().zip(mu).map(|(a, b)| (a - b).abs()).sum::<f64>() / n,
        Measure::Class => {
            fam.family.validate_response(y)?;
            y.iter().zip(mu).filter(|(&yi, &m)| (m > 0.5) != (yi > 0.5)).count() as f64 / n
        }
        Measure::OneMinusAuc => {
            fam.family.validate_response(y)?;
            1.0 - auc(y, mu)
        }
    })
}

/// Mann-Whitney AUC with ties counted one half, via midranks.
pub fn auc(y: &[f64], score: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..score.len()).collect();
    order.sort_by(|&a, &b| score[a].total_cmp(&score[b]));
    let mut ranks = vec![0.0; score.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && score[order[j + 1]] == score[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 averaged
        let mid = (i + j + 2) as f64 / 2.0;
        for &o in &order[i..=j] {
            ranks[o] = mid;
        }
        i = j + 1;
    }
    let pos = y.iter().filter(|&&v| v > 0.5).count();
    let neg = y.len() - pos;
    if pos == 0 || neg == 0 {
        return f64::NAN;
    }
    let rank_sum: f64 = y.iter().zip(&ranks).filter(|(&v, _)| v > 0.5).map(|(_, r)| r).sum();
    let pairs = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    pairs / (pos as f64 * neg as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::Triplet;
    use approx::assert_abs_diff_eq;

    fn model(indices: Vec<usize>, beta: Vec<f64>, gamma0: f64) -> MarginalModel {
        let q = indices.len();
        let triplets = (0..q).map(|c| Triplet { row: 0, col: c, value: beta[c] }).collect();
        MarginalModel {
            indices,
            projection: ProjectionMatrix::sparse(RpKind::Cw, 1, q, triplets).unwrap(),
            gamma0,
            gamma: vec![1.0],
            beta,
            converged: true,
        }
    }

    fn identity_stats(p: usize) -> StandardizationStats {
        StandardizationStats {
            x_mean: vec![0.0; p],
            x_sd: vec![1.0; p],
            y_mean: 0.0,
            y_sd: 1.0,
            constant_cols: vec![],
        }
    }

    #[test]
    fn standardize_examples() {
        let x = DMatrix::from_column_slice(3, 2, &[1.0, 3.0, 2.0, 4.0, 4.0, 4.0]);
        let (xs, _, stats) = standardize(&x, &[0.0, 1.0, 2.0], FamilySpec::gaussian()).unwrap();
        assert_abs_diff_eq!(xs[(0, 0)], -1.0, epsilon = 1e-12);
        assert_eq!(xs.column(1).iter().copied().collect::<Vec<_>>(), vec![0.0; 3]);
        assert_eq!(stats.constant_cols, vec![1]);
        assert_eq!(stats.x_sd[1], 1.0);

        // a column (1, 3) standardizes to -+1/sqrt(2) (mean 2, sd sqrt(2))
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 3.0, 2.0]);
        let y = [0.0, 2.0, 1.0];
        let (xs, ys, stats) = standardize(&x, &y, FamilySpec::gaussian()).unwrap();
        assert_abs_diff_eq!(xs[(0, 0)], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ys[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.y_mean, 1.0, epsilon = 1e-12);
        let two_rows = DMatrix::from_column_slice(2, 1, &[1.0, 3.0]);
        assert!(matches!(
            standardize(&two_rows, &[0.0, 2.0], FamilySpec::gaussian()),
            Err(SparError::InsufficientData { .. })
        ));
    }

    #[test]
    fn standardize_non_gaussian_keeps_response() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 5.0]);
        let (_, ys, stats) = standardize(&x, &[0.0, 1.0, 1.0], FamilySpec::binomial()).unwrap();
        assert_eq!(ys, vec![0.0, 1.0, 1.0]);
        assert_eq!((stats.y_mean, stats.y_sd), (0.0, 1.0));
    }

    #[test]
    fn nu_grid_examples() {
        let models = vec![model(vec![0, 1], vec![1.0, -2.0], 0.0), model(vec![2, 3], vec![3.0, 4.0], 0.0)];
        assert_eq!(build_nu_grid(&models, 1, None).unwrap(), vec![0.0]);
        assert_eq!(build_nu_grid(&models, 2, None).unwrap(), vec![0.0, 2.5]);
        assert_eq!(build_nu_grid(&models, 3, Some(&[0.3, 0.1])).unwrap(), vec![0.1, 0.3]);
        let zeros = vec![model(vec![0], vec![0.0], 0.0)];
        assert_eq!(build_nu_grid(&zeros, 5, None).unwrap(), vec![0.0]);
    }

    #[test]
    fn quantile_matches_type7() {
        let v = [1.0, 2.0, 3.0, 4.0, 10.0];
        assert_abs_diff_eq!(quantile_sorted(&v, 0.25), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(quantile_sorted(&v, 0.9), 7.6, epsilon = 1e-12);
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(threshold_beta(&[0.5, -0.01], 0.1), vec![0.5, 0.0]);
        assert_eq!(threshold_beta(&[0.5, -0.01], 0.0), vec![0.5, -0.01]);
        assert_eq!(threshold_beta(&[0.5, -0.01], 0.6), vec![0.0, 0.0]);
        assert_eq!(threshold_beta(&[0.1, -0.1], 0.1), vec![0.1, -0.1]);
    }

    #[test]
    fn average_examples() {
        let ens = Ensemble {
            family: FamilySpec::gaussian(),
            stats: identity_stats(2),
            models: vec![model(vec![0, 1], vec![1.0, 0.0], 0.0), model(vec![0, 1], vec![0.0, 1.0], 0.0)],
        };
        let c = ens.average_coefficients(0.0, 2).unwrap();
        assert_eq!(c.beta, vec![0.5, 0.5]);
        assert_eq!(c.active_count(), 2);
        let one = ens.average_coefficients(0.0, 1).unwrap();
        assert_eq!(one.beta, vec![1.0, 0.0]);
        assert!(ens.average_coefficients(0.0, 0).is_err());
        assert!(ens.average_coefficients(0.0, 3).is_err());

        let same = Ensemble {
            models: vec![model(vec![1], vec![0.7], 0.2); 3],
            ..ens
        };
        let a = same.average_coefficients(0.0, 3).unwrap();
        let b = same.average_coefficients(0.0, 1).unwrap();
        assert_abs_diff_eq!(a.beta[1], b.beta[1], epsilon = 1e-15);
        assert_abs_diff_eq!(a.intercept, b.intercept, epsilon = 1e-15);
    }

    #[test]
    fn destandardized_predictions_match_standardized_scale() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let x = DMatrix::from_fn(10, 4, |_, _| rng.random_range(-3.0..5.0));
        let y: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..9.0)).collect();
        let (xs, _, stats) = standardize(&x, &y, FamilySpec::gaussian()).unwrap();
        let ens = Ensemble {
            family: FamilySpec::gaussian(),
            stats: stats.clone(),
            models: vec![
                model(vec![0, 2], vec![0.4, -0.9], 0.3),
                model(vec![1, 2, 3], vec![0.2, 0.5, -0.1], -0.2),
            ],
        };
        let c = ens.average_coefficients(0.15, 2).unwrap();
        let pred = c.linear_predictor(&x).unwrap();
        let g0 = (0.3 - 0.2) / 2.0;
        for i in 0..10 {
            let mut eta_std = g0;
            for k in 0..2 {
                let b = ens.standardized_beta(k, 0.15);
                for j in 0..4 {
                    eta_std += b[j] * xs[(i, j)] / 2.0;
                }
            }
            assert_abs_diff_eq!(pred[i], stats.y_mean + stats.y_sd * eta_std, epsilon = 1e-10);
        }
    }

    #[test]
    fn predict_examples() {
        let zero = Ensemble {
            family: FamilySpec::gaussian(),
            stats: StandardizationStats {
                y_mean: 3.0,
                ..identity_stats(2)
            },
            models: vec![model(vec![0, 1], vec![0.0, 0.0], 0.0)],
        };
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -4.0, 0.5]);
        let opts = PredictOptions {
            predict_type: PredictType::Response,
            avg_type: AvgType::Link,
            nu: 0.0,
            nummod: 1,
        };
        assert_eq!(zero.predict(&x, &opts).unwrap(), vec![3.0, 3.0]);
        let bad = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        assert!(matches!(zero.predict(&bad, &opts), Err(SparError::Shape(_))));
    }

    #[test]
    fn binomial_averaging_types_differ() {
        // model 1: eta = 0, model 2: eta = 2 at x = 0
        let ens = Ensemble {
            family: FamilySpec::binomial(),
            stats: identity_stats(1),
            models: vec![model(vec![0], vec![0.0], 0.0), model(vec![0], vec![0.0], 2.0)],
        };
        let x = DMatrix::from_row_slice(1, 1, &[0.0]);
        let mut opts = PredictOptions {
            predict_type: PredictType::Response,
            avg_type: AvgType::Link,
            nu: 0.0,
            nummod: 2,
        };
        let link_avg = ens.predict(&x, &opts).unwrap()[0];
        assert_abs_diff_eq!(link_avg, 1.0 / (1.0 + (-1.0f64).exp()), epsilon = 1e-12);
        assert_abs_diff_eq!(link_avg, 0.73106, epsilon = 1e-5);
        opts.avg_type = AvgType::Response;
        let resp_avg = ens.predict(&x, &opts).unwrap()[0];
        assert_abs_diff_eq!(resp_avg, (0.5 + 1.0 / (1.0 + (-2.0f64).exp())) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(resp_avg, 0.69040, epsilon = 1e-5);
        opts.predict_type = PredictType::Link;
        let link = ens.predict(&x, &opts).unwrap()[0];
        assert_abs_diff_eq!(1.0 / (1.0 + (-link).exp()), resp_avg, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_averaging_types_coincide() {
        let ens = Ensemble {
            family: FamilySpec::gaussian(),
            stats: StandardizationStats {
                x_mean: vec![1.0, -2.0],
                x_sd: vec![2.0, 0.5],
                y_mean: 4.0,
                y_sd: 3.0,
                constant_cols: vec![],
            },
            models: vec![model(vec![0, 1], vec![0.3, -0.2], 0.1), model(vec![1], vec![0.6], -0.4)],
        };
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -4.0, 0.5, 0.0, 0.0]);
        let mut opts = PredictOptions {
            predict_type: PredictType::Response,
            avg_type: AvgType::Link,
            nu: 0.0,
            nummod: 2,
        };
        let a = ens.predict(&x, &opts).unwrap();
        opts.avg_type = AvgType::Response;
        let b = ens.predict(&x, &opts).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-12);
        }
    }

    #[test]
    fn measure_examples() {
        let g = FamilySpec::gaussian();
        let b = FamilySpec::binomial();
        assert_eq!(eval_measure(Measure::Mse, g, &[1.0, 2.0], &[1.0, 4.0]).unwrap(), 2.0);
        assert_eq!(eval_measure(Measure::Mae, g, &[1.0, 2.0], &[1.0, 4.0]).unwrap(), 1.0);
        assert_eq!(eval_measure(Measure::Class, b, &[0.0, 1.0], &[0.4, 0.3]).unwrap(), 0.5);
        let auc_loss = eval_measure(Measure::OneMinusAuc, b, &[0.0, 0.0, 1.0, 1.0], &[0.1, 0.4, 0.35, 0.8]).unwrap();
        assert_abs_diff_eq!(auc_loss, 0.25, epsilon = 1e-15);
        assert!(matches!(eval_measure(Measure::Class, g, &[0.0], &[0.0]), Err(SparError::Config(_))));
        assert!(eval_measure(Measure::OneMinusAuc, b, &[1.0, 1.0], &[0.2, 0.3]).unwrap().is_nan());
    }
}
