use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{
    build_nu_grid, fit_ensemble, standardize, AvgType, Coefficients, Ensemble, EnsembleSettings, FixedProjection,
    Measure, ModelSpec, PredictOptions, PredictType,
};
use crate::error::{Result, SparError};
use crate::family::{Family, FamilySpec};
use crate::plugin::Plugins;
use crate::projection::RpSpec;
use crate::rng::{substream, Purpose};
use crate::screening::ScreenSpec;
use crate::selection::{
    active_counts, aggregate_folds, evaluate_grid, make_folds, one_se_rule, select_on_validation, GridChoice,
    SelectionGrid,
};

/// Fold index and its grid values, or `None` when the fold is skipped.
type FoldOutcome = Result<Option<(usize, Vec<f64>)>>;

/// Full algorithm configuration. Every field has a default, so partial JSON
/// documents deserialize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SparConfig {
    pub family: FamilySpec,
    pub screen: ScreenSpec,
    pub rp: RpSpec,
    pub model: ModelSpec,
    pub nnu: usize,
    pub nus: Option<Vec<f64>>,
    pub nummods: Vec<usize>,
    pub measure: Measure,
    pub nfolds: usize,
}

impl Default for SparConfig {
    fn default() -> Self {
        SparConfig {
            family: FamilySpec::gaussian(),
            screen: ScreenSpec::default(),
            rp: RpSpec::default(),
            model: ModelSpec::default(),
            nnu: 20,
            nus: None,
            nummods: vec![20],
            measure: Measure::Deviance,
            nfolds: 10,
        }
    }
}

impl SparConfig {
    pub fn validate(&self) -> Result<()> {
        self.screen.validate()?;
        self.rp.validate()?;
        self.measure.check_family(self.family.family)?;
        if self.nummods.is_empty() || self.nummods.contains(&0) {
            return Err(SparError::config("nummods must be a non-empty list of positive counts"));
        }
        if self.nus.is_none() && self.nnu == 0 {
            return Err(SparError::config("nnu must be at least 1"));
        }
        if let Some(e) = self.model.epsilon {
            if !(e.is_finite() && e >= 0.0) {
                return Err(SparError::config("model epsilon must be finite and non-negative"));
            }
        }
        Ok(())
    }

    /// Sorted, deduplicated model counts.
    pub fn nummod_grid(&self) -> Vec<usize> {
        let mut v = self.nummods.clone();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn max_models(&self) -> usize {
        self.nummods.iter().copied().max().unwrap_or(0)
    }
}

/// Which selected grid cell to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum OptPar {
    #[default]
    #[serde(rename = "best")]
    Best,
    #[serde(rename = "1se")]
    OneSe,
}

impl FromStr for OptPar {
    type Err = SparError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "best" => Ok(OptPar::Best),
            "1se" | "one_se" => Ok(OptPar::OneSe),
            o => Err(SparError::config(format!("unknown opt_par '{o}' (expected best or 1se)"))),
        }
    }
}

impl fmt::Display for OptPar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptPar::Best => "best",
            OptPar::OneSe => "1se",
        })
    }
}

/// Prediction request; unset `nu`/`nummod` come from the `opt_par` cell.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PredictRequest {
    pub predict_type: PredictType,
    pub avg_type: AvgType,
    pub nu: Option<f64>,
    pub nummod: Option<usize>,
    pub opt_par: OptPar,
}

/// A fitted SPAR model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparEnsemble {
    pub config: SparConfig,
    pub master_seed: u64,
    pub ensemble: Ensemble,
    pub nus: Vec<f64>,
    pub nummods: Vec<usize>,
    pub grid: SelectionGrid,
    pub best: GridChoice,
    pub one_se: Option<GridChoice>,
    /// Marginal models that did not converge in the full-data fit.
    pub failed_models: usize,
}

impl SparEnsemble {
    pub fn family(&self) -> FamilySpec {
        self.ensemble.family
    }

    pub fn p(&self) -> usize {
        self.ensemble.p()
    }

    pub fn is_cv(&self) -> bool {
        self.grid.is_cv()
    }

    pub fn choice(&self, opt_par: OptPar) -> Result<GridChoice> {
        match opt_par {
            OptPar::Best => Ok(self.best),
            OptPar::OneSe => self
                .one_se
                .ok_or_else(|| SparError::config("the 1se choice is only available for cross-validated fits")),
        }
    }

    fn resolve(&self, nu: Option<f64>, nummod: Option<usize>, opt_par: OptPar) -> Result<(f64, usize)> {
        let c = self.choice(opt_par)?;
        Ok((nu.unwrap_or(c.nu), nummod.unwrap_or(c.nummod)))
    }

    /// Averaged coefficients at the `opt_par` cell.
    pub fn coef(&self, opt_par: OptPar) -> Result<Coefficients> {
        let c = self.choice(opt_par)?;
        self.ensemble.average_coefficients(c.nu, c.nummod)
    }

    pub fn coef_at(&self, nu: f64, nummod: usize) -> Result<Coefficients> {
        self.ensemble.average_coefficients(nu, nummod)
    }

    pub fn predict(&self, x_new: &DMatrix<f64>, req: &PredictRequest) -> Result<Vec<f64>> {
        let (nu, nummod) = self.resolve(req.nu, req.nummod, req.opt_par)?;
        self.ensemble.predict(
            x_new,
            &PredictOptions {
                predict_type: req.predict_type,
                avg_type: req.avg_type,
                nu,
                nummod,
            },
        )
    }
}

/// Entry point: configure, then call [`Spar::fit`] or [`Spar::cv`].
#[derive(Debug, Clone, Default)]
pub struct Spar {
    pub config: SparConfig,
    pub plugins: Plugins,
    pub seed: u64,
    pub threads: Option<usize>,
}

struct CoreFit {
    ensemble: Ensemble,
    failed: usize,
}

impl Spar {
    pub fn new(config: SparConfig) -> Self {
        Spar {
            config,
            ..Spar::default()
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Cap the worker count. Results do not depend on it.
    pub fn threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }

    pub fn plugins(mut self, plugins: Plugins) -> Self {
        self.plugins = plugins;
        self
    }

    fn run<T: Send>(&self, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
        match self.threads {
            None => f(),
            Some(0) => Err(SparError::config("threads must be at least 1")),
            Some(t) => rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| SparError::config(format!("cannot build thread pool: {e}")))?
                .install(f),
        }
    }

    fn check_data(&self, x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
        if x.nrows() != y.len() {
            return Err(SparError::shape(format!(
                "predictors have {} rows but response has length {}",
                x.nrows(),
                y.len()
            )));
        }
        if x.ncols() == 0 {
            return Err(SparError::shape("no predictor columns"));
        }
        if let Some((i, v)) = x.iter().chain(y).enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(SparError::Domain { index: i, value: *v });
        }
        Ok(())
    }

    fn fit_core(
        &self,
        x: &DMatrix<f64>,
        y: &[f64],
        fixed: Option<&[FixedProjection]>,
    ) -> Result<CoreFit> {
        let fam = self.config.family;
        let (xs, ys, stats) = standardize(x, y, fam)?;
        let settings = EnsembleSettings {
            family: fam,
            screen: &self.config.screen,
            rp: &self.config.rp,
            model: &self.config.model,
            n_models: self.config.max_models(),
            master_seed: self.seed,
            plugins: &self.plugins,
        };
        let fit = fit_ensemble(&xs, &ys, &settings, fixed)?;
        if fit.screening.nonconverged > 0 {
            log::warn!(
                "{} marginal screening fits did not converge and were scored 0",
                fit.screening.nonconverged
            );
        }
        Ok(CoreFit {
            ensemble: Ensemble {
                family: fam,
                stats,
                models: fit.models,
            },
            failed: fit.failed,
        })
    }

    /// Fit and select `(nu, nummod)` on `validation`, or in-sample when absent.
    pub fn fit(&self, x: &DMatrix<f64>, y: &[f64], validation: Option<(&DMatrix<f64>, &[f64])>) -> Result<SparEnsemble> {
        self.fit_impl(x, y, validation, None)
    }

    /// As [`Spar::fit`] with externally supplied screening sets and projections.
    pub fn fit_fixed(
        &self,
        x: &DMatrix<f64>,
        y: &[f64],
        validation: Option<(&DMatrix<f64>, &[f64])>,
        fixed: &[FixedProjection],
    ) -> Result<SparEnsemble> {
        self.fit_impl(x, y, validation, Some(fixed))
    }

    fn fit_impl(
        &self,
        x: &DMatrix<f64>,
        y: &[f64],
        validation: Option<(&DMatrix<f64>, &[f64])>,
        fixed: Option<&[FixedProjection]>,
    ) -> Result<SparEnsemble> {
        self.config.validate()?;
        self.check_data(x, y)?;
        if let Some((xv, yv)) = validation {
            self.check_data(xv, yv)?;
            if xv.ncols() != x.ncols() {
                return Err(SparError::shape(format!(
                    "validation predictors have {} columns, expected {}",
                    xv.ncols(),
                    x.ncols()
                )));
            }
        }
        self.run(|| {
            let core = self.fit_core(x, y, fixed)?;
            let nus = build_nu_grid(&core.ensemble.models, self.config.nnu, self.config.nus.as_deref())?;
            let nummods = self.config.nummod_grid();
            let (xv, yv, in_sample) = match validation {
                Some((xv, yv)) => (xv, yv, false),
                None => {
                    log::warn!("no validation data given; selecting on the training data");
                    (x, y, true)
                }
            };
            let (mut grid, best) =
                select_on_validation(&core.ensemble, xv, yv, self.config.measure, &nus, &nummods)?;
            grid.in_sample = in_sample;
            let best = GridChoice::from(&grid.cells[best]);
            Ok(SparEnsemble {
                config: self.config.clone(),
                master_seed: self.seed,
                ensemble: core.ensemble,
                nus,
                nummods,
                grid,
                best,
                one_se: None,
                failed_models: core.failed,
            })
        })
    }

    /// K-fold cross-validation with screening sets and projections frozen
    /// from the full-data fit.
    pub fn cv(&self, x: &DMatrix<f64>, y: &[f64]) -> Result<SparEnsemble> {
        self.config.validate()?;
        self.check_data(x, y)?;
        let n = x.nrows();
        let nfolds = self.config.nfolds;
        self.run(|| {
            let full = self.fit_core(x, y, None)?;
            let nus = build_nu_grid(&full.ensemble.models, self.config.nnu, self.config.nus.as_deref())?;
            let nummods = self.config.nummod_grid();
            let fixed: Vec<FixedProjection> = full.ensemble.models.iter().map(FixedProjection::from).collect();
            let mut rng = substream(self.seed, Purpose::Folds, 0);
            let labels = make_folds(n, nfolds, y, self.config.family.family, &mut rng)?;

            let per_fold: Vec<FoldOutcome> = (0..nfolds)
                .into_par_iter()
                .map(|f| self.run_fold(x, y, &labels, f, &fixed, &nus, &nummods))
                .collect();
            let mut folds = Vec::new();
            for r in per_fold {
                if let Some(v) = r? {
                    folds.push(v);
                }
            }
            let actives = active_counts(&full.ensemble, &nus, &nummods)?;
            let grid = aggregate_folds(self.config.measure, &nus, &nummods, &folds, &actives)?;
            let best = GridChoice::from(&grid.cells[grid.best()?]);
            let one_se = GridChoice::from(&grid.cells[one_se_rule(&grid)?]);
            Ok(SparEnsemble {
                config: self.config.clone(),
                master_seed: self.seed,
                ensemble: full.ensemble,
                nus,
                nummods,
                grid,
                best,
                one_se: Some(one_se),
                failed_models: full.failed,
            })
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn run_fold(
        &self,
        x: &DMatrix<f64>,
        y: &[f64],
        labels: &[usize],
        fold: usize,
        fixed: &[FixedProjection],
        nus: &[f64],
        nummods: &[usize],
    ) -> FoldOutcome {
        let train: Vec<usize> = (0..y.len()).filter(|&i| labels[i] != fold).collect();
        let test: Vec<usize> = (0..y.len()).filter(|&i| labels[i] == fold).collect();
        let y_tr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let y_te: Vec<f64> = test.iter().map(|&i| y[i]).collect();
        if self.config.family.family == Family::Binomial && y_tr.iter().all(|&v| v == y_tr[0]) {
            log::warn!("fold {fold} skipped: training response has a single class");
            return Ok(None);
        }
        let core = match self.fit_core(&x.select_rows(&train), &y_tr, Some(fixed)) {
            Ok(c) => c,
            Err(e @ (SparError::Numerical(_) | SparError::Singular | SparError::InsufficientData { .. })) => {
                log::warn!("fold {fold} skipped: {e}");
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        let values = evaluate_grid(&core.ensemble, &x.select_rows(&test), &y_te, self.config.measure, nus, nummods)?;
        if values.iter().any(|v| !v.is_finite()) {
            log::warn!("fold {fold} skipped: measure is undefined on its held-out rows");
            return Ok(None);
        }
        Ok(Some((fold, values)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn toy(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        let y: Vec<f64> = (0..n)
            .map(|i| 1.0 + 2.0 * x[(i, 0)] - x[(i, 1)] + 0.3 * { let e: f64 = StandardNormal.sample(&mut rng); e })
            .collect();
        (x, y)
    }

    #[test]
    fn fit_produces_consistent_grid() {
        let (x, y) = toy(40, 60, 1);
        let cfg = SparConfig {
            nummods: vec![3, 6],
            nnu: 4,
            measure: Measure::Mse,
            ..SparConfig::default()
        };
        let fit = Spar::new(cfg).seed(5).fit(&x, &y, None).unwrap();
        assert_eq!(fit.ensemble.models.len(), 6);
        assert_eq!(fit.grid.cells.len(), fit.nus.len() * 2);
        assert_eq!(fit.nus[0], 0.0);
        assert!(fit.grid.in_sample);
        assert!(fit.one_se.is_none());
        assert!(fit.coef(OptPar::OneSe).is_err());
    }

    #[test]
    fn cv_reports_both_choices() {
        let (x, y) = toy(30, 20, 2);
        let cfg = SparConfig {
            nummods: vec![2, 4],
            nnu: 3,
            nfolds: 3,
            measure: Measure::Mse,
            ..SparConfig::default()
        };
        let fit = Spar::new(cfg).seed(1).cv(&x, &y).unwrap();
        assert_eq!(fit.grid.folds, vec![0, 1, 2]);
        let one_se = fit.one_se.unwrap();
        assert!(one_se.active <= fit.best.active);
        assert!(fit.grid.cells.iter().all(|c| c.se.unwrap() >= 0.0));
    }

    #[test]
    fn config_errors() {
        let (x, y) = toy(20, 5, 3);
        let bad = SparConfig {
            measure: Measure::Class,
            ..SparConfig::default()
        };
        assert!(matches!(Spar::new(bad).fit(&x, &y, None), Err(SparError::Config(_))));
        let bad = SparConfig {
            nummods: vec![],
            ..SparConfig::default()
        };
        assert!(matches!(Spar::new(bad).fit(&x, &y, None), Err(SparError::Config(_))));
        assert!(matches!(
            Spar::new(SparConfig::default()).fit(&x, &y[..5], None),
            Err(SparError::Shape(_))
        ));
    }

    #[test]
    fn partial_config_json() {
        let cfg: SparConfig = serde_json::from_str(r#"{"nnu": 5, "measure": "1-auc"}"#).unwrap();
        assert_eq!(cfg.nnu, 5);
        assert_eq!(cfg.measure, Measure::OneMinusAuc);
        assert_eq!(cfg.nummods, vec![20]);
    }
}
