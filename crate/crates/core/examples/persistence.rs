//! Saving a model to JSON and loading it back.

use spar::data::{generate_synthetic, SyntheticSpec};
use spar::persist::{load_model, save_model};
use spar::{Measure, PredictRequest, Spar, SparConfig};

fn main() -> spar::Result<()> {
    let spec = SyntheticSpec {
        n: 80,
        p: 150,
        n_active: 5,
        sigma2: 2.0,
        n_test: 10,
        ..SyntheticSpec::default()
    };
    let (train, _) = generate_synthetic(&spec, 9)?;
    let (x_new, _) = train.test.as_ref().expect("test rows requested");
    let cfg = SparConfig {
        nummods: vec![8],
        measure: Measure::Mse,
        nfolds: 4,
        ..SparConfig::default()
    };
    let model = Spar::new(cfg).seed(4).cv(&train.x, &train.y)?;

    let path = std::env::temp_dir().join("spar-example-model.json");
    save_model(&path, &model)?;
    let back = load_model(&path)?;
    let req = PredictRequest::default();
    let same = model.predict(x_new, &req)? == back.predict(x_new, &req)?;
    println!("saved {} bytes to {}; predictions identical after reload: {same}", std::fs::metadata(&path)?.len(), path.display());
    std::fs::remove_file(&path)?;
    Ok(())
}
