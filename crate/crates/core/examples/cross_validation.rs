//! k-fold cross-validation with the one-standard-error rule.

use spar::data::{generate_synthetic, SyntheticSpec};
use spar::{Measure, OptPar, Spar, SparConfig};

fn main() -> spar::Result<()> {
    let spec = SyntheticSpec {
        n: 150,
        p: 500,
        n_active: 20,
        sigma2: 10.0,
        ..SyntheticSpec::default()
    };
    let (train, _) = generate_synthetic(&spec, 2)?;
    let cfg = SparConfig {
        nummods: vec![5, 10, 20],
        measure: Measure::Mse,
        nfolds: 5,
        ..SparConfig::default()
    };
    let cv = Spar::new(cfg).seed(7).cv(&train.x, &train.y)?;

    for cell in cv.grid.cells.iter().filter(|c| c.nummod == cv.best.nummod) {
        println!(
            "nu {:>9.5}  mse {:>8.3} +- {:.3}  active {}",
            cell.nu,
            cell.mean,
            cell.se.unwrap_or(f64::NAN),
            cell.active
        );
    }
    let one_se = cv.one_se.expect("cv computes a 1se choice");
    println!("best: nu={:.5} nummod={} active={}", cv.best.nu, cv.best.nummod, cv.best.active);
    println!("1se:  nu={:.5} nummod={} active={}", one_se.nu, one_se.nummod, one_se.active);
    println!("1se coefficients: {} nonzero", cv.coef(OptPar::OneSe)?.active_count());
    Ok(())
}
