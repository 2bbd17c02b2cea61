//! Registering a user screening function and a user projection generator.

use nalgebra::DMatrix;
use rand::Rng;
use spar::data::{generate_synthetic, SyntheticSpec};
use spar::projection::Triplet;
use spar::rng::SparRng;
use spar::{
    Controls, DataSnapshot, Measure, Plugins, ProjectionMatrix, ProjectionPlugin, RpKind, RpSpec, ScreenSpec, Spar,
    SparConfig,
};

/// Absolute covariance with the response.
fn covariance(x: &DMatrix<f64>, y: &[f64], _: &Controls) -> spar::Result<Vec<f64>> {
    Ok(x.column_iter().map(|c| c.iter().zip(y).map(|(a, b)| a * b).sum::<f64>().abs()).collect())
}

/// Sends each screened predictor to a random row, weighted by its
/// covariance with the response.
struct Bucketing;

impl ProjectionPlugin for Bucketing {
    fn generate(
        &self,
        m: usize,
        indices: &[usize],
        data: Option<DataSnapshot<'_>>,
        _: &Controls,
        rng: &mut SparRng,
    ) -> spar::Result<ProjectionMatrix> {
        let data = data.expect("requested via data_driven");
        let n = data.y.len() as f64;
        let triplets = indices
            .iter()
            .enumerate()
            .map(|(col, &j)| Triplet {
                row: rng.random_range(0..m),
                col,
                value: data.x.column(j).iter().zip(data.y).map(|(a, b)| a * b).sum::<f64>() / n,
            })
            .collect();
        ProjectionMatrix::sparse(RpKind::Plugin("bucket".into()), m, indices.len(), triplets)
    }

    fn data_driven(&self) -> bool {
        true
    }
}

fn main() -> spar::Result<()> {
    let spec = SyntheticSpec {
        n: 120,
        p: 600,
        n_active: 15,
        sigma2: 5.0,
        n_test: 100,
        ..SyntheticSpec::default()
    };
    let (train, _) = generate_synthetic(&spec, 6)?;
    let (x_val, y_val) = train.test.as_ref().expect("test rows requested");

    let mut plugins = Plugins::new();
    plugins
        .register_screening("cov", covariance)
        .register_projection("bucket", Bucketing);
    let cfg = SparConfig {
        screen: ScreenSpec::plugin("cov"),
        rp: RpSpec::plugin("bucket"),
        nummods: vec![10],
        measure: Measure::Mse,
        ..SparConfig::default()
    };
    let fit = Spar::new(cfg).plugins(plugins).seed(2).fit(&train.x, &train.y, Some((x_val, y_val)))?;
    let ybar = train.y.iter().sum::<f64>() / train.y.len() as f64;
    let null = y_val.iter().map(|v| (v - ybar).powi(2)).sum::<f64>() / y_val.len() as f64;
    println!(
        "validation mse {:.3} (intercept only {null:.3}) with {} active predictors",
        fit.best.mean, fit.best.active
    );
    Ok(())
}
