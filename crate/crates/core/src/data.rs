//! Datasets: CSV input/output and the synthetic regression generator.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SparError};
use crate::family::Family;
use crate::rng::{substream, Purpose};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    /// Predictor column names, when the source had a header.
    pub names: Option<Vec<String>>,
    pub test: Option<(DMatrix<f64>, Vec<f64>)>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// Which column of a CSV holds the response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseColumn {
    Name(String),
    Index(usize),
    /// Every column is a predictor.
    None,
}

impl ResponseColumn {
    /// A header name, falling back to a 0-based index when the text is numeric.
    pub fn parse(s: &str) -> Self {
        match s.parse() {
            Ok(i) => ResponseColumn::Index(i),
            Err(_) => ResponseColumn::Name(s.to_string()),
        }
    }
}

fn parse_cell(cell: &str, row: usize, col: usize) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| SparError::Parse {
        row,
        col,
        msg: format!("'{cell}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(SparError::Parse {
            row,
            col,
            msg: format!("non-finite value '{cell}'"),
        });
    }
    Ok(v)
}

/// Parse a rectangular numeric CSV. Error locations are 1-based file lines
/// and 1-based columns.
pub fn read_csv<R: Read>(reader: R, has_header: bool, response: &ResponseColumn) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let mut header: Option<Vec<String>> = None;
    let mut line = 0;
    if has_header {
        match records.next() {
            Some(r) => {
                line += 1;
                header = Some(r?.iter().map(|s| s.trim().to_string()).collect());
            }
            None => return Err(SparError::Parse { row: 1, col: 1, msg: "empty file".into() }),
        }
    }
    let mut width = header.as_ref().map(Vec::len);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in records {
        line += 1;
        let rec = rec?;
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(SparError::Parse {
                row: line,
                col: rec.len().min(w) + 1,
                msg: format!("expected {w} fields, found {}", rec.len()),
            });
        }
        rows.push(
            rec.iter()
                .enumerate()
                .map(|(j, c)| parse_cell(c, line, j + 1))
                .collect::<Result<_>>()?,
        );
    }
    let width = width.unwrap_or(0);
    if rows.is_empty() {
        return Err(SparError::Parse { row: line.max(1), col: 1, msg: "no data rows".into() });
    }
    let resp = match response {
        ResponseColumn::None => None,
        ResponseColumn::Index(i) if *i < width => Some(*i),
        ResponseColumn::Index(i) => {
            return Err(SparError::Parse {
                row: 1,
                col: i + 1,
                msg: format!("response column {i} is out of range for {width} columns"),
            })
        }
        ResponseColumn::Name(name) => {
            let h = header.as_ref().ok_or_else(|| SparError::Parse {
                row: 1,
                col: 1,
                msg: format!("response '{name}' given by name but the file has no header"),
            })?;
            Some(h.iter().position(|c| c == name).ok_or_else(|| SparError::Parse {
                row: 1,
                col: 1,
                msg: format!("response column '{name}' not found"),
            })?)
        }
    };
    let pred_cols: Vec<usize> = (0..width).filter(|&j| Some(j) != resp).collect();
    let n = rows.len();
    let x = DMatrix::from_fn(n, pred_cols.len(), |i, j| rows[i][pred_cols[j]]);
    let y = resp.map(|r| rows.iter().map(|row| row[r]).collect()).unwrap_or_default();
    let names = header.map(|h| pred_cols.iter().map(|&j| h[j].clone()).collect());
    Ok(Dataset { x, y, names, test: None })
}

pub fn load_csv(path: impl AsRef<Path>, has_header: bool, response: &ResponseColumn) -> Result<Dataset> {
    read_csv(BufReader::new(File::open(path)?), has_header, response)
}

/// Write predictors followed by the response column `y` (omitted when empty).
pub fn write_csv<W: Write>(w: W, x: &DMatrix<f64>, y: &[f64], names: Option<&[String]>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut head: Vec<String> = match names {
        Some(n) if n.len() == x.ncols() => n.to_vec(),
        _ => (1..=x.ncols()).map(|j| format!("x{j}")).collect(),
    };
    let with_y = !y.is_empty();
    if with_y {
        if y.len() != x.nrows() {
            return Err(SparError::shape("response length does not match predictor rows"));
        }
        head.push("y".into());
    }
    out.write_record(&head)?;
    let mut row = Vec::with_capacity(head.len());
    for (i, xr) in x.row_iter().enumerate() {
        row.clear();
        row.extend(xr.iter().map(|v| v.to_string()));
        if with_y {
            row.push(y[i].to_string());
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_csv(path: impl AsRef<Path>, x: &DMatrix<f64>, y: &[f64], names: Option<&[String]>) -> Result<()> {
    write_csv(std::io::BufWriter::new(File::create(path)?), x, y, names)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivePositions {
    #[default]
    First,
    Random,
}

impl std::str::FromStr for ActivePositions {
    type Err = SparError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" => Ok(ActivePositions::First),
            "random" => Ok(ActivePositions::Random),
            o => Err(SparError::config(format!("unknown active positions '{o}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n: usize,
    pub p: usize,
    pub n_active: usize,
    pub mu: f64,
    pub coef_pool: Vec<f64>,
    pub sigma2: f64,
    pub active_positions: ActivePositions,
    pub family: Family,
    /// AR(1) correlation between neighbouring predictors.
    pub rho: f64,
    /// Rows of an independent test sample.
    pub n_test: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n: 200,
            p: 2000,
            n_active: 100,
            mu: 1.0,
            coef_pool: vec![-3.0, -2.0, -1.0, 1.0, 2.0, 3.0],
            sigma2: 83.0,
            active_positions: ActivePositions::First,
            family: Family::Gaussian,
            rho: 0.0,
            n_test: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(SparError::config("n and p must be positive"));
        }
        if self.n_active > self.p {
            return Err(SparError::config(format!(
                "n_active = {} exceeds p = {}",
                self.n_active, self.p
            )));
        }
        if self.n_active > 0 && self.coef_pool.is_empty() {
            return Err(SparError::config("coefficient pool is empty"));
        }
        if self.coef_pool.iter().any(|c| *c == 0.0 || !c.is_finite()) {
            return Err(SparError::config("coefficient pool must hold finite non-zero values"));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(SparError::config("sigma2 must be positive"));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(SparError::config("rho must lie in (-1, 1)"));
        }
        if self.family == Family::Poisson {
            return Err(SparError::config("synthetic data supports the gaussian and binomial families"));
        }
        Ok(())
    }
}

/// Ground truth written next to a synthetic dataset. `active` is 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub mu: f64,
    pub sigma2: f64,
    pub beta: Vec<f64>,
    pub active: Vec<usize>,
}

impl Truth {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self).map_err(|e| SparError::Schema(e.to_string()))?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| SparError::Schema(e.to_string()))
    }
}

fn draw_x<R: Rng>(n: usize, p: usize, rho: f64, rng: &mut R) -> DMatrix<f64> {
    let scale = (1.0 - rho * rho).sqrt();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let mut prev = 0.0;
        for j in 0..p {
            let z: f64 = StandardNormal.sample(rng);
            let v = if j == 0 { z } else { rho * prev + scale * z };
            x[(i, j)] = v;
            prev = v;
        }
    }
    x
}

fn draw_y<R: Rng>(x: &DMatrix<f64>, truth: &Truth, family: Family, rng: &mut R) -> Vec<f64> {
    let noise = Normal::new(0.0, truth.sigma2.sqrt()).expect("validated sigma2");
    (0..x.nrows())
        .map(|i| {
            let eta = truth.mu + truth.active.iter().map(|&j| truth.beta[j] * x[(i, j)]).sum::<f64>();
            match family {
                Family::Binomial => {
                    let prob = 1.0 / (1.0 + (-eta).exp());
                    f64::from(u8::from(Bernoulli::new(prob).expect("probability in [0,1]").sample(rng)))
                }
                _ => eta + noise.sample(rng),
            }
        })
        .collect()
}

/// Simulate a sparse linear (or logistic) regression dataset.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<(Dataset, Truth)> {
    spec.validate()?;
    let mut coef_rng = substream(seed, Purpose::Synthetic, 0);
    let mut active: Vec<usize> = match spec.active_positions {
        ActivePositions::First => (0..spec.n_active).collect(),
        ActivePositions::Random => sample(&mut coef_rng, spec.p, spec.n_active).into_vec(),
    };
    active.sort_unstable();
    let mut beta = vec![0.0; spec.p];
    for &j in &active {
        beta[j] = spec.coef_pool[coef_rng.random_range(0..spec.coef_pool.len())];
    }
    let truth = Truth {
        mu: spec.mu,
        sigma2: spec.sigma2,
        beta,
        active,
    };
    let x = draw_x(spec.n, spec.p, spec.rho, &mut substream(seed, Purpose::Synthetic, 1));
    let y = draw_y(&x, &truth, spec.family, &mut substream(seed, Purpose::Synthetic, 2));
    let test = (spec.n_test > 0).then(|| {
        let xt = draw_x(spec.n_test, spec.p, spec.rho, &mut substream(seed, Purpose::Synthetic, 3));
        let yt = draw_y(&xt, &truth, spec.family, &mut substream(seed, Purpose::Synthetic, 4));
        (xt, yt)
    });
    Ok((Dataset { x, y, names: None, test }, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str, resp: &str) -> Result<Dataset> {
        read_csv(s.as_bytes(), true, &ResponseColumn::parse(resp))
    }

    #[test]
    fn loads_named_response() {
        let d = parse("a,b,y\n1,2,3\n4,5,6\n", "y").unwrap();
        assert_eq!(d.x, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 5.0]));
        assert_eq!(d.y, vec![3.0, 6.0]);
        assert_eq!(d.names.unwrap(), vec!["a", "b"]);
        let d = parse("a,b,y\n1,2,3\n4,5,6\n", "0").unwrap();
        assert_eq!(d.y, vec![1.0, 4.0]);
    }

    #[test]
    fn parse_errors_carry_location() {
        match parse("a,b,y\n1,2,3\n4,NaN,6\n", "y") {
            Err(SparError::Parse { row, col, .. }) => assert_eq!((row, col), (3, 2)),
            other => panic!("unexpected {other:?}"),
        }
        match parse("a,b,y\n1,2,3\n4,x,6\n", "y") {
            Err(SparError::Parse { row, col, .. }) => assert_eq!((row, col), (3, 2)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("a,b,y\n1,2\n", "y"), Err(SparError::Parse { row: 2, .. })));
        assert!(matches!(parse("a,b\n1,2\n", "y"), Err(SparError::Parse { .. })));
        assert!(matches!(parse("a,b,y\n", "y"), Err(SparError::Parse { .. })));
    }

    #[test]
    fn constant_columns_are_accepted() {
        let d = parse("a,b,y\n1,7,3\n4,7,6\n", "y").unwrap();
        assert_eq!(d.x.column(1).iter().copied().collect::<Vec<_>>(), vec![7.0, 7.0]);
    }

    #[test]
    fn csv_round_trip() {
        let x = DMatrix::from_row_slice(2, 2, &[0.1, -2.5e-17, 1.0 / 3.0, 1e300]);
        let y = vec![std::f64::consts::PI, -0.0];
        let mut buf = Vec::new();
        write_csv(&mut buf, &x, &y, None).unwrap();
        let d = read_csv(buf.as_slice(), true, &ResponseColumn::parse("y")).unwrap();
        assert_eq!(d.x, x);
        assert_eq!(d.y, y);
    }

    #[test]
    fn synthetic_no_signal() {
        let spec = SyntheticSpec {
            n: 50,
            p: 10,
            n_active: 0,
            ..SyntheticSpec::default()
        };
        let (d, truth) = generate_synthetic(&spec, 1).unwrap();
        assert!(truth.beta.iter().all(|b| *b == 0.0));
        assert!(truth.active.is_empty());
        assert_eq!(d.y.len(), 50);
    }

    #[test]
    fn synthetic_is_seeded() {
        let spec = SyntheticSpec {
            n: 20,
            p: 30,
            n_active: 5,
            active_positions: ActivePositions::Random,
            n_test: 7,
            ..SyntheticSpec::default()
        };
        let a = generate_synthetic(&spec, 9).unwrap();
        let b = generate_synthetic(&spec, 9).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&spec, 10).unwrap();
        assert_ne!(a.0.x, c.0.x);
        assert_eq!(a.0.test.as_ref().unwrap().0.nrows(), 7);
    }

    #[test]
    fn synthetic_support_fraction_is_exact() {
        let spec = SyntheticSpec {
            n: 10,
            p: 400,
            n_active: 37,
            active_positions: ActivePositions::Random,
            ..SyntheticSpec::default()
        };
        let (_, truth) = generate_synthetic(&spec, 4).unwrap();
        assert_eq!(truth.beta.iter().filter(|b| **b != 0.0).count(), 37);
        assert_eq!(truth.active.len(), 37);
        assert!(truth.beta.iter().all(|b| *b == 0.0 || spec.coef_pool.contains(b)));
    }

    #[test]
    fn synthetic_predictors_are_centred() {
        let spec = SyntheticSpec {
            n: 200,
            p: 100,
            n_active: 3,
            ..SyntheticSpec::default()
        };
        let (d, _) = generate_synthetic(&spec, 2).unwrap();
        let k = (d.n() * d.p()) as f64;
        let mean = d.x.sum() / k;
        assert!(mean.abs() < 3.0 / k.sqrt(), "mean {mean}");
    }

    #[test]
    fn binomial_synthetic_is_binary() {
        let spec = SyntheticSpec {
            n: 60,
            p: 8,
            n_active: 2,
            family: Family::Binomial,
            ..SyntheticSpec::default()
        };
        let (d, _) = generate_synthetic(&spec, 3).unwrap();
        assert!(d.y.iter().all(|v| *v == 0.0 || *v == 1.0));
    }

    #[test]
    fn invalid_specs() {
        let bad = SyntheticSpec {
            n_active: 11,
            p: 10,
            ..SyntheticSpec::default()
        };
        assert!(generate_synthetic(&bad, 0).is_err());
        let bad = SyntheticSpec {
            coef_pool: vec![0.0, 1.0],
            ..SyntheticSpec::default()
        };
        assert!(generate_synthetic(&bad, 0).is_err());
    }
}
