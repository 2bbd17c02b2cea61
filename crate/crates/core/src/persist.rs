//! Versioned JSON model files.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Result, SparError};
use crate::spar::SparEnsemble;

pub const FORMAT: &str = "spar-model";
pub const FORMAT_VERSION: &str = "1.0";
const SUPPORTED_MAJOR: u32 = 1;

#[derive(Serialize)]
struct DocRef<'a> {
    format: &'a str,
    version: &'a str,
    model: &'a SparEnsemble,
}

#[derive(Deserialize)]
struct Doc {
    format: String,
    model: SparEnsemble,
}

pub fn to_json(model: &SparEnsemble) -> Result<String> {
    serde_json::to_string(&DocRef {
        format: FORMAT,
        version: FORMAT_VERSION,
        model,
    })
    .map_err(|e| SparError::Schema(e.to_string()))
}

fn major(v: &str) -> Option<u32> {
    v.split('.').next()?.trim().parse().ok()
}

pub fn from_json(text: &str) -> Result<SparEnsemble> {
    let value: Value = serde_json::from_str(text).map_err(|e| SparError::Schema(format!("corrupt model file: {e}")))?;
    let version = value
        .get("version")
        .and_then(Value::as_str)
        .ok_or_else(|| SparError::Schema("model file has no version field".into()))?;
    if major(version) != Some(SUPPORTED_MAJOR) {
        return Err(SparError::Version {
            found: version.to_string(),
            supported: SUPPORTED_MAJOR,
        });
    }
    let doc: Doc = serde_json::from_value(value).map_err(|e| SparError::Schema(e.to_string()))?;
    if doc.format != FORMAT {
        return Err(SparError::Schema(format!("not a model file (format '{}')", doc.format)));
    }
    check_consistency(&doc.model)?;
    Ok(doc.model)
}

fn check_consistency(m: &SparEnsemble) -> Result<()> {
    let p = m.ensemble.stats.p();
    let s = &m.ensemble.stats;
    if s.x_sd.len() != p || s.x_sd.iter().any(|v| !(*v > 0.0)) {
        return Err(SparError::Schema("standardization statistics are inconsistent".into()));
    }
    for (k, model) in m.ensemble.models.iter().enumerate() {
        let ok = model.indices.len() == model.projection.q()
            && model.beta.len() == model.indices.len()
            && model.gamma.len() == model.projection.m()
            && model.indices.iter().all(|&j| j < p);
        if !ok {
            return Err(SparError::Schema(format!("marginal model {k} is inconsistent")));
        }
    }
    if m.nummods.iter().any(|&c| c == 0 || c > m.ensemble.models.len()) {
        return Err(SparError::Schema("model counts exceed the stored ensemble".into()));
    }
    Ok(())
}

pub fn save_model(path: impl AsRef<Path>, model: &SparEnsemble) -> Result<()> {
    std::fs::write(path, to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SparEnsemble> {
    from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::Measure;
    use crate::spar::{PredictRequest, Spar, SparConfig};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};

    fn fitted() -> SparEnsemble {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let x = DMatrix::from_fn(30, 40, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..30).map(|i| x[(i, 0)] * 3.0 + rng.random_range(-0.1..0.1)).collect();
        let cfg = SparConfig {
            nummods: vec![4],
            nnu: 5,
            measure: Measure::Mse,
            ..SparConfig::default()
        };
        Spar::new(cfg).seed(3).fit(&x, &y, None).unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical_and_predicts_the_same() {
        let m = fitted();
        let text = to_json(&m).unwrap();
        let back = from_json(&text).unwrap();
        assert_eq!(to_json(&back).unwrap(), text);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let xn = DMatrix::from_fn(10, 40, |_, _| rng.random_range(-2.0..2.0));
        let req = PredictRequest::default();
        let a = m.predict(&xn, &req).unwrap();
        let b = back.predict(&xn, &req).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn truncated_file_is_a_clean_error() {
        let text = to_json(&fitted()).unwrap();
        let cut = &text[..text.len() / 2];
        assert!(matches!(from_json(cut), Err(SparError::Schema(_))));
    }

    #[test]
    fn newer_major_version_is_rejected() {
        let text = to_json(&fitted()).unwrap().replacen("\"version\":\"1.0\"", "\"version\":\"2.3\"", 1);
        match from_json(&text) {
            Err(SparError::Version { found, .. }) => assert_eq!(found, "2.3"),
            other => panic!("unexpected {other:?}"),
        }
        let minor = to_json(&fitted()).unwrap().replacen("\"version\":\"1.0\"", "\"version\":\"1.7\"", 1);
        assert!(from_json(&minor).is_ok());
    }

    #[test]
    fn schema_mismatch() {
        assert!(matches!(
            from_json(r#"{"format":"spar-model","version":"1.0","model":{}}"#),
            Err(SparError::Schema(_))
        ));
    }
}
