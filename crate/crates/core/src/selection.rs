//! Choosing the threshold and the number of models: validation-set
//! evaluation, k-fold cross-validation and the one-standard-error rule.

use std::cmp::Ordering;
use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{eval_measure, AvgType, Ensemble, Measure, PredictOptions, PredictType};
use crate::error::{Result, SparError};
use crate::family::Family;
use crate::rng::SparRng;

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// One `(nu, nummod)` pair of the selection grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub nu: f64,
    pub nummod: usize,
    /// Validation measure, or the mean over usable folds under CV.
    /// Non-finite values are stored as null.
    #[serde(with = "nan_as_null")]
    pub mean: f64,
    pub se: Option<f64>,
    pub active: usize,
    /// Per-fold values, aligned with [`SelectionGrid::folds`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fold_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionGrid {
    pub measure: Measure,
    pub cells: Vec<GridCell>,
    /// Indices of the folds that contributed, empty for validation-set selection.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub folds: Vec<usize>,
    /// True when the training data doubled as validation data.
    #[serde(default)]
    pub in_sample: bool,
}

/// A selected grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridChoice {
    pub nu: f64,
    pub nummod: usize,
    #[serde(with = "nan_as_null")]
    pub mean: f64,
    pub active: usize,
}

impl From<&GridCell> for GridChoice {
    fn from(c: &GridCell) -> Self {
        GridChoice {
            nu: c.nu,
            nummod: c.nummod,
            mean: c.mean,
            active: c.active,
        }
    }
}

/// Grid pairs in table order: `nummod` outer, `nu` inner.
pub fn grid_pairs(nus: &[f64], nummods: &[usize]) -> Vec<(f64, usize)> {
    nummods
        .iter()
        .flat_map(|&m| nus.iter().map(move |&nu| (nu, m)))
        .collect()
}

/// Measure of the link-averaged response prediction for every grid pair.
pub fn evaluate_grid(
    ens: &Ensemble,
    x: &DMatrix<f64>,
    y: &[f64],
    measure: Measure,
    nus: &[f64],
    nummods: &[usize],
) -> Result<Vec<f64>> {
    grid_pairs(nus, nummods)
        .into_par_iter()
        .map(|(nu, nummod)| {
            let opts = PredictOptions {
                predict_type: PredictType::Response,
                avg_type: AvgType::Link,
                nu,
                nummod,
            };
            let mu = ens.predict(x, &opts)?;
            eval_measure(measure, ens.family, y, &mu)
        })
        .collect()
}

/// Active counts of the averaged coefficients for every grid pair.
pub fn active_counts(ens: &Ensemble, nus: &[f64], nummods: &[usize]) -> Result<Vec<usize>> {
    grid_pairs(nus, nummods)
        .into_par_iter()
        .map(|(nu, nummod)| Ok(ens.average_coefficients(nu, nummod)?.active_count()))
        .collect()
}

/// Preference order among cells with equal measure: larger `nu`, then smaller `nummod`.
fn sparsity_order(a: &GridCell, b: &GridCell) -> Ordering {
    b.nu.total_cmp(&a.nu).then(a.nummod.cmp(&b.nummod))
}

/// Index of the cell with the smallest finite measure.
pub fn best_cell(cells: &[GridCell]) -> Result<usize> {
    cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.mean.is_finite())
        .min_by(|(_, a), (_, b)| a.mean.total_cmp(&b.mean).then_with(|| sparsity_order(a, b)))
        .map(|(i, _)| i)
        .ok_or_else(|| SparError::Numerical("no grid cell has a finite measure".into()))
}

/// The sparsest cell whose mean lies within one standard error of the best.
pub fn one_se_rule(grid: &SelectionGrid) -> Result<usize> {
    let best = best_cell(&grid.cells)?;
    let b = &grid.cells[best];
    let se = b
        .se
        .ok_or_else(|| SparError::config("the one-standard-error rule needs cross-validated standard errors"))?;
    let bound = b.mean + se;
    Ok(grid
        .cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.mean.is_finite() && c.mean <= bound)
        .min_by(|(_, a), (_, c)| a.active.cmp(&c.active).then_with(|| sparsity_order(a, c)))
        .map(|(i, _)| i)
        .unwrap_or(best))
}

/// Evaluate the grid on a validation set and pick the best cell.
pub fn select_on_validation(
    ens: &Ensemble,
    x_val: &DMatrix<f64>,
    y_val: &[f64],
    measure: Measure,
    nus: &[f64],
    nummods: &[usize],
) -> Result<(SelectionGrid, usize)> {
    if y_val.len() != x_val.nrows() {
        return Err(SparError::shape(format!(
            "validation predictors have {} rows but response has length {}",
            x_val.nrows(),
            y_val.len()
        )));
    }
    ens.family.family.validate_response(y_val)?;
    let values = evaluate_grid(ens, x_val, y_val, measure, nus, nummods)?;
    let actives = active_counts(ens, nus, nummods)?;
    let cells = grid_pairs(nus, nummods)
        .into_iter()
        .zip(values.into_iter().zip(actives))
        .map(|((nu, nummod), (mean, active))| GridCell {
            nu,
            nummod,
            mean,
            se: None,
            active,
            fold_values: Vec::new(),
        })
        .collect::<Vec<_>>();
    let best = best_cell(&cells)?;
    Ok((
        SelectionGrid {
            measure,
            cells,
            folds: Vec::new(),
            in_sample: false,
        },
        best,
    ))
}

/// Fold label for every row. Rows are permuted and cut into near-equal
/// blocks; binomial responses are dealt round-robin per class.
pub fn make_folds(n: usize, nfolds: usize, y: &[f64], family: Family, rng: &mut SparRng) -> Result<Vec<usize>> {
    if nfolds < 2 || nfolds > n {
        return Err(SparError::config(format!("nfolds must lie in 2..={n}, got {nfolds}")));
    }
    let mut labels = vec![0; n];
    if family == Family::Binomial {
        let mut ones: Vec<usize> = (0..n).filter(|&i| y[i] > 0.5).collect();
        let mut zeros: Vec<usize> = (0..n).filter(|&i| y[i] <= 0.5).collect();
        zeros.shuffle(rng);
        ones.shuffle(rng);
        for (pos, &i) in zeros.iter().chain(&ones).enumerate() {
            labels[i] = pos % nfolds;
        }
    } else {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        for (pos, &i) in perm.iter().enumerate() {
            labels[i] = pos * nfolds / n;
        }
    }
    Ok(labels)
}

/// Mean and standard error (`sd / sqrt(k)`, sample sd) of fold values.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
    (mean, var.sqrt() / k.sqrt())
}

/// Assemble a CV grid from per-fold value vectors (one entry per grid pair).
pub fn aggregate_folds(
    measure: Measure,
    nus: &[f64],
    nummods: &[usize],
    folds: &[(usize, Vec<f64>)],
    actives: &[usize],
) -> Result<SelectionGrid> {
    if folds.len() < 2 {
        return Err(SparError::Cv(format!(
            "only {} usable fold(s); at least 2 are required",
            folds.len()
        )));
    }
    let cells = grid_pairs(nus, nummods)
        .into_iter()
        .enumerate()
        .map(|(c, (nu, nummod))| {
            let fold_values: Vec<f64> = folds.iter().map(|(_, v)| v[c]).collect();
            let (mean, se) = mean_se(&fold_values);
            GridCell {
                nu,
                nummod,
                mean,
                se: Some(se),
                active: actives[c],
                fold_values,
            }
        })
        .collect();
    Ok(SelectionGrid {
        measure,
        cells,
        folds: folds.iter().map(|(f, _)| *f).collect(),
        in_sample: false,
    })
}

impl SelectionGrid {
    pub fn best(&self) -> Result<usize> {
        best_cell(&self.cells)
    }

    pub fn is_cv(&self) -> bool {
        !self.folds.is_empty()
    }

    /// CSV with header `nu,nummod,mean,se,active`; `se` is empty without CV.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["nu", "nummod", "mean", "se", "active"])?;
        for c in &self.cells {
            out.write_record([
                c.nu.to_string(),
                c.nummod.to_string(),
                c.mean.to_string(),
                c.se.map(|s| s.to_string()).unwrap_or_default(),
                c.active.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Long-format per-fold CSV with header `nu,nummod,fold,value`.
    pub fn write_folds_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["nu", "nummod", "fold", "value"])?;
        for c in &self.cells {
            for (f, v) in self.folds.iter().zip(&c.fold_values) {
                out.write_record([c.nu.to_string(), c.nummod.to_string(), f.to_string(), v.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Purpose};
    use approx::assert_abs_diff_eq;

    fn cell(nu: f64, nummod: usize, mean: f64, se: Option<f64>, active: usize) -> GridCell {
        GridCell {
            nu,
            nummod,
            mean,
            se,
            active,
            fold_values: vec![],
        }
    }

    fn grid(cells: Vec<GridCell>) -> SelectionGrid {
        SelectionGrid {
            measure: Measure::Mse,
            cells,
            folds: vec![0, 1],
            in_sample: false,
        }
    }

    #[test]
    fn single_cell_is_selected() {
        let g = grid(vec![cell(0.0, 1, 3.0, Some(0.5), 4)]);
        assert_eq!(g.best().unwrap(), 0);
        assert_eq!(one_se_rule(&g).unwrap(), 0);
    }

    #[test]
    fn ties_prefer_larger_nu_then_fewer_models() {
        let cells = vec![cell(0.0, 5, 1.0, None, 9), cell(0.1, 5, 1.0, None, 3)];
        assert_eq!(best_cell(&cells).unwrap(), 1);
        let cells = vec![cell(0.1, 10, 1.0, None, 9), cell(0.1, 5, 1.0, None, 3), cell(0.0, 1, 1.0, None, 9)];
        assert_eq!(best_cell(&cells).unwrap(), 1);
    }

    #[test]
    fn non_finite_cells_are_skipped() {
        let cells = vec![cell(0.0, 1, f64::NAN, None, 1), cell(0.1, 1, 2.0, None, 1)];
        assert_eq!(best_cell(&cells).unwrap(), 1);
        assert!(best_cell(&cells[..1]).is_err());
    }

    #[test]
    fn one_se_examples() {
        let g = grid(vec![
            cell(0.0, 1, 10.0, Some(2.0), 50),
            cell(0.1, 1, 11.0, Some(1.0), 30),
            cell(0.2, 1, 13.0, Some(1.0), 10),
        ]);
        assert_eq!(g.best().unwrap(), 0);
        assert_eq!(one_se_rule(&g).unwrap(), 1);

        let g = grid(vec![
            cell(0.0, 1, 10.0, Some(0.0), 50),
            cell(0.1, 1, 10.0, Some(0.0), 20),
            cell(0.2, 1, 10.5, Some(0.0), 5),
        ]);
        assert_eq!(one_se_rule(&g).unwrap(), 1);

        let no_se = grid(vec![cell(0.0, 1, 1.0, None, 1)]);
        assert!(matches!(one_se_rule(&no_se), Err(SparError::Config(_))));
    }

    #[test]
    fn mean_se_formula() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_abs_diff_eq!(se, 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(se, 0.57735, epsilon = 1e-5);
    }

    #[test]
    fn folds_are_balanced() {
        let mut rng = substream(3, Purpose::Folds, 0);
        let y = vec![0.0; 23];
        let f = make_folds(23, 5, &y, Family::Gaussian, &mut rng).unwrap();
        let mut counts = [0; 5];
        f.iter().for_each(|&l| counts[l] += 1);
        assert!(counts.iter().all(|&c| c == 4 || c == 5));
        assert_eq!(counts.iter().sum::<usize>(), 23);
    }

    #[test]
    fn binomial_folds_are_stratified() {
        let mut rng = substream(3, Purpose::Folds, 0);
        let y: Vec<f64> = (0..40).map(|i| if i < 10 { 1.0 } else { 0.0 }).collect();
        let f = make_folds(40, 5, &y, Family::Binomial, &mut rng).unwrap();
        for fold in 0..5 {
            let pos = (0..40).filter(|&i| f[i] == fold && y[i] == 1.0).count();
            assert_eq!(pos, 2);
        }
    }

    #[test]
    fn fold_count_bounds() {
        let mut rng = substream(3, Purpose::Folds, 0);
        assert!(make_folds(5, 1, &[0.0; 5], Family::Gaussian, &mut rng).is_err());
        assert!(make_folds(5, 6, &[0.0; 5], Family::Gaussian, &mut rng).is_err());
        assert!(make_folds(5, 5, &[0.0; 5], Family::Gaussian, &mut rng).is_ok());
    }

    #[test]
    fn too_few_folds_is_cv_error() {
        let r = aggregate_folds(Measure::Mse, &[0.0], &[1], &[(0, vec![1.0])], &[1]);
        assert!(matches!(r, Err(SparError::Cv(_))));
    }

    #[test]
    fn csv_header_and_rows() {
        let g = grid(vec![cell(0.5, 2, 1.25, Some(0.5), 3)]);
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "nu,nummod,mean,se,active\n0.5,2,1.25,0.5,3\n");
    }

    #[test]
    fn nan_measure_survives_json() {
        let c = cell(0.0, 1, f64::NAN, None, 0);
        let s = serde_json::to_string(&c).unwrap();
        let back: GridCell = serde_json::from_str(&s).unwrap();
        assert!(back.mean.is_nan());
    }
}
