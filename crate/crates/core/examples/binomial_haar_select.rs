//! Binomial response with marginal-likelihood screening and Haar-select projections.

use spar::data::{generate_synthetic, SyntheticSpec};
use spar::{Family, FamilySpec, Measure, PredictRequest, RpSpec, ScreenSpec, Spar, SparConfig};

fn main() -> spar::Result<()> {
    let spec = SyntheticSpec {
        n: 200,
        p: 300,
        n_active: 10,
        mu: 0.0,
        family: Family::Binomial,
        n_test: 200,
        ..SyntheticSpec::default()
    };
    let (train, _) = generate_synthetic(&spec, 5)?;
    let (x_val, y_val) = train.test.as_ref().expect("test rows requested");

    for rp in [RpSpec::haar_select(10), RpSpec::cw(true)] {
        let cfg = SparConfig {
            family: FamilySpec::binomial(),
            screen: ScreenSpec::marglik(),
            rp: rp.clone(),
            nummods: vec![10],
            measure: Measure::Class,
            ..SparConfig::default()
        };
        let fit = Spar::new(cfg).seed(1).fit(&train.x, &train.y, Some((x_val, y_val)))?;
        let prob = fit.predict(x_val, &PredictRequest::default())?;
        println!(
            "{:<12} misclassification {:.3} (nu={:.4}, {} active), first probabilities {:.3?}",
            rp.kind.to_string(),
            fit.best.mean,
            fit.best.nu,
            fit.best.active,
            &prob[..3]
        );
    }
    Ok(())
}
