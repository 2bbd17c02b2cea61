//! Text summaries and tidy plot data for fitted models.

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::DMatrix;

use crate::ensemble::{quantile_sorted, Coefficients, PredictType};
use crate::error::{Result, SparError};
use crate::selection::{GridCell, GridChoice};
use crate::spar::{OptPar, PredictRequest, SparEnsemble};

/// Min, first quartile, median, mean, third quartile and max of the
/// non-zero coefficients (type-7 quantiles).
pub fn coef_summary(beta: &[f64]) -> Option<[f64; 6]> {
    let mut nz: Vec<f64> = beta.iter().copied().filter(|b| *b != 0.0).collect();
    if nz.is_empty() {
        return None;
    }
    nz.sort_by(f64::total_cmp);
    let mean = nz.iter().sum::<f64>() / nz.len() as f64;
    Some([
        nz[0],
        quantile_sorted(&nz, 0.25),
        quantile_sorted(&nz, 0.5),
        mean,
        quantile_sorted(&nz, 0.75),
        nz[nz.len() - 1],
    ])
}

/// Scientific notation with a two-digit exponent, e.g. `1.72e-02`.
pub fn sci(v: f64) -> String {
    let s = format!("{v:.2e}");
    match s.split_once('e') {
        Some((m, e)) => {
            let (sign, digits) = match e.strip_prefix('-') {
                Some(d) => ('-', d),
                None => ('+', e),
            };
            format!("{m}e{sign}{digits:0>2}")
        }
        None => s,
    }
}

fn summary_table(out: &mut String, coef: &Coefficients) {
    let Some(s) = coef_summary(&coef.beta) else {
        out.push_str("No non-zero coefficients.\n");
        return;
    };
    let cells: Vec<String> = s.iter().map(|v| format!("{v:.5}")).collect();
    let labels = ["Min.", "1st Qu.", "Median", "Mean", "3rd Qu.", "Max."];
    let w = cells.iter().map(String::len).chain(labels.iter().map(|l| l.len())).max().unwrap_or(8);
    out.push_str("Summary of those non-zero coefficients:\n");
    let head: Vec<String> = labels.iter().map(|l| format!("{l:>w$}")).collect();
    let vals: Vec<String> = cells.iter().map(|c| format!("{c:>w$}")).collect();
    let _ = writeln!(out, "{}", head.join(" "));
    let _ = writeln!(out, "{}", vals.join(" "));
}

fn meas(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "NA".into()
    }
}

/// Human-readable description of a fitted model.
pub fn summary_text(model: &SparEnsemble) -> Result<String> {
    let mut out = String::new();
    let p = model.p();
    let best = model.best;
    let coef = model.coef(OptPar::Best)?;
    let active = coef.active_count();
    if model.is_cv() {
        let _ = writeln!(out, "spar.cv object:");
        let _ = writeln!(
            out,
            "Smallest CV-Meas {} reached for nummod={},\n              nu={} leading to {} / {} active predictors.",
            meas(best.mean),
            best.nummod,
            sci(best.nu),
            active,
            p
        );
    } else {
        let _ = writeln!(out, "spar object:");
        let _ = writeln!(
            out,
            "Smallest Validation Measure reached for nummod={},\n              nu={} leading to {} / {} active predictors.",
            best.nummod,
            sci(best.nu),
            active,
            p
        );
    }
    summary_table(&mut out, &coef);
    if let Some(one) = model.one_se {
        let c = model.coef(OptPar::OneSe)?;
        let _ = writeln!(
            out,
            "\nSparsest coefficient within one standard error of best CV-Meas\n              reached for nummod={}, nu={} \nleading to {} / {} active\n              predictors with CV-Meas {}.",
            one.nummod,
            sci(one.nu),
            c.active_count(),
            p,
            meas(one.mean)
        );
        summary_table(&mut out, &c);
    }
    if model.grid.in_sample {
        out.push_str("\nNote: (nu, nummod) were selected on the training data.\n");
    }
    if model.failed_models > 0 {
        let _ = writeln!(
            out,
            "Note: {} of {} marginal models did not converge and contribute zero coefficients.",
            model.failed_models,
            model.ensemble.models.len()
        );
    }
    Ok(out)
}

fn cell_row(c: &GridCell) -> [String; 7] {
    let se = c.se.unwrap_or(0.0);
    [
        c.nu.to_string(),
        c.nummod.to_string(),
        c.mean.to_string(),
        c.se.map(|s| s.to_string()).unwrap_or_default(),
        (c.mean - se).to_string(),
        (c.mean + se).to_string(),
        c.active.to_string(),
    ]
}

const CURVE_HEADER: [&str; 7] = ["nu", "nummod", "mean", "se", "lower", "upper", "active"];

/// Which slice of the grid a curve follows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Curve {
    /// All thresholds at a fixed number of models.
    OverNu { nummod: usize },
    /// All model counts at a fixed threshold.
    OverNummod { nu: f64 },
}

impl Curve {
    /// The curves through a selected cell.
    pub fn through(choice: GridChoice) -> [Curve; 2] {
        [Curve::OverNu { nummod: choice.nummod }, Curve::OverNummod { nu: choice.nu }]
    }

    fn keeps(&self, c: &GridCell) -> bool {
        match *self {
            Curve::OverNu { nummod } => c.nummod == nummod,
            Curve::OverNummod { nu } => c.nu == nu,
        }
    }
}

/// Measure (with one-SE band) and active count along a grid curve.
pub fn write_curve<W: Write>(model: &SparEnsemble, curve: Curve, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CURVE_HEADER)?;
    for c in model.grid.cells.iter().filter(|c| curve.keeps(c)) {
        out.write_record(cell_row(c))?;
    }
    out.flush()?;
    Ok(())
}

/// Fitted values and residuals `y - yhat` on the response scale.
pub fn residuals(model: &SparEnsemble, x: &DMatrix<f64>, y: &[f64], opt_par: OptPar) -> Result<Vec<(f64, f64)>> {
    if x.nrows() != y.len() {
        return Err(SparError::shape("fit data rows and response length differ"));
    }
    let req = PredictRequest {
        predict_type: PredictType::Response,
        opt_par,
        ..PredictRequest::default()
    };
    let fitted = model.predict(x, &req)?;
    Ok(fitted.into_iter().zip(y).map(|(f, &yi)| (f, yi - f)).collect())
}

pub fn write_residuals<W: Write>(pairs: &[(f64, f64)], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["row", "fitted", "residual"])?;
    for (i, (f, r)) in pairs.iter().enumerate() {
        out.write_record([i.to_string(), f.to_string(), r.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Rows of the coefficient plot: variable index and its standardized,
/// unthresholded coefficients across all models, sorted descending.
///
/// `order` permutes (or subsets) the variables; `prange` then keeps the
/// half-open range of positions in that order.
pub fn coef_matrix(model: &SparEnsemble, order: Option<&[usize]>, prange: Option<(usize, usize)>) -> Result<Vec<(usize, Vec<f64>)>> {
    let p = model.p();
    let ens = &model.ensemble;
    let order: Vec<usize> = match order {
        Some(o) => {
            if let Some(bad) = o.iter().find(|&&j| j >= p) {
                return Err(SparError::config(format!("coefficient order mentions variable {bad} but p = {p}")));
            }
            o.to_vec()
        }
        None => (0..p).collect(),
    };
    let (lo, hi) = prange.unwrap_or((0, order.len()));
    if lo > hi || hi > order.len() {
        return Err(SparError::config(format!(
            "prange {lo}..{hi} does not fit {} variables",
            order.len()
        )));
    }
    let mut cols = vec![vec![0.0; ens.models.len()]; p];
    for (k, m) in ens.models.iter().enumerate() {
        for (&j, &b) in m.indices.iter().zip(&m.beta) {
            cols[j][k] = b;
        }
    }
    Ok(order[lo..hi]
        .iter()
        .map(|&j| {
            let mut row = std::mem::take(&mut cols[j]);
            row.sort_by(|a, b| b.total_cmp(a));
            (j, row)
        })
        .collect())
}

pub fn write_coef_matrix<W: Write>(rows: &[(usize, Vec<f64>)], n_models: usize, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut head = vec!["variable".to_string()];
    head.extend((1..=n_models).map(|k| format!("rank_{k}")));
    out.write_record(&head)?;
    for (j, row) in rows {
        let mut rec = vec![j.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_number_summary() {
        let s = coef_summary(&[0.0, 4.0, -1.0, 0.0, 2.0, 3.0]).unwrap();
        assert_eq!(s, [-1.0, 1.25, 2.5, 2.0, 3.25, 4.0]);
        assert!(coef_summary(&[0.0, 0.0]).is_none());
    }

    #[test]
    fn scientific_format() {
        assert_eq!(sci(0.0172), "1.72e-02");
        assert_eq!(sci(0.0), "0.00e+00");
        assert_eq!(sci(123.0), "1.23e+02");
        assert_eq!(sci(1.5e-120), "1.50e-120");
    }
}
