//! Fit on simulated data with a validation set and print the summary.

use spar::data::{generate_synthetic, SyntheticSpec};
use spar::report::summary_text;
use spar::{OptPar, Spar, SparConfig};

fn main() -> spar::Result<()> {
    let spec = SyntheticSpec {
        n_test: 100,
        ..SyntheticSpec::default()
    };
    let (train, truth) = generate_synthetic(&spec, 1)?;
    let (x_val, y_val) = train.test.as_ref().expect("test rows requested");

    let cfg = SparConfig {
        nummods: vec![5, 10, 15, 20, 25, 30],
        ..SparConfig::default()
    };
    let fit = Spar::new(cfg).seed(12).fit(&train.x, &train.y, Some((x_val, y_val)))?;
    print!("{}", summary_text(&fit)?);

    let coef = fit.coef(OptPar::Best)?;
    let hits = truth.active.iter().filter(|&&j| coef.beta[j] != 0.0).count();
    println!("intercept {:.3}; {hits} of {} true predictors are active", coef.intercept, truth.active.len());
    Ok(())
}
