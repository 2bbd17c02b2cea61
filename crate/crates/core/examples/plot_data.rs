//! Tidy plot data: measure curves, residuals and the coefficient matrix.

use std::io::stdout;

use spar::data::{generate_synthetic, SyntheticSpec};
use spar::report::{coef_matrix, residuals, write_coef_matrix, write_curve, Curve};
use spar::{Measure, OptPar, Spar, SparConfig};

fn main() -> spar::Result<()> {
    let spec = SyntheticSpec {
        n: 100,
        p: 120,
        n_active: 6,
        sigma2: 3.0,
        ..SyntheticSpec::default()
    };
    let (train, _) = generate_synthetic(&spec, 10)?;
    let cfg = SparConfig {
        nummods: vec![4, 8],
        nnu: 6,
        measure: Measure::Mse,
        nfolds: 4,
        ..SparConfig::default()
    };
    let model = Spar::new(cfg).seed(5).cv(&train.x, &train.y)?;

    let [over_nu, _] = Curve::through(model.best);
    println!("# measure along nu");
    write_curve(&model, over_nu, stdout())?;

    let res = residuals(&model, &train.x, &train.y, OptPar::Best)?;
    let rss: f64 = res.iter().map(|(_, r)| r * r).sum();
    println!("# in-sample residual sum of squares {rss:.2}");

    println!("# sorted coefficients of the first three predictors");
    let rows = coef_matrix(&model, None, Some((0, 3)))?;
    write_coef_matrix(&rows, model.ensemble.models.len(), stdout())?;
    Ok(())
}
