//! Link versus response predictions and the two averaging modes.

use spar::data::{generate_synthetic, SyntheticSpec};
use spar::{Family, AvgType, FamilySpec, Measure, OptPar, PredictRequest, PredictType, Spar, SparConfig};

fn main() -> spar::Result<()> {
    let spec = SyntheticSpec {
        n: 150,
        p: 200,
        n_active: 8,
        mu: 0.0,
        family: Family::Binomial,
        n_test: 5,
        ..SyntheticSpec::default()
    };
    let (train, _) = generate_synthetic(&spec, 8)?;
    let (x_new, _) = train.test.as_ref().expect("test rows requested");
    let cfg = SparConfig {
        family: FamilySpec::binomial(),
        nummods: vec![10],
        measure: Measure::Deviance,
        ..SparConfig::default()
    };
    let fit = Spar::new(cfg).seed(3).fit(&train.x, &train.y, None)?;

    for (predict_type, avg_type) in [
        (PredictType::Link, AvgType::Link),
        (PredictType::Response, AvgType::Link),
        (PredictType::Response, AvgType::Response),
    ] {
        let req = PredictRequest {
            predict_type,
            avg_type,
            ..PredictRequest::default()
        };
        println!("{predict_type:?}/{avg_type:?}: {:.3?}", fit.predict(x_new, &req)?);
    }
    let sparse = PredictRequest {
        nu: Some(fit.nus[fit.nus.len() / 2]),
        nummod: Some(5),
        opt_par: OptPar::Best,
        ..PredictRequest::default()
    };
    println!("explicit nu and nummod: {:.3?}", fit.predict(x_new, &sparse)?);
    Ok(())
}
