use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use spar::data::{load_csv, ResponseColumn, Truth};
use spar::ensemble::{quantile_sorted, AvgType, PredictType};
use spar::persist::load_model;
use spar::{OptPar, PredictRequest};

fn spar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spar"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn column(path: &Path, idx: usize) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].parse().unwrap()).collect()
}

/// Small simulated train/test pair plus a fitted model in `dir`.
fn fitted(dir: &Path, cmd: &str) {
    let sim = spar(&[
        "simulate", "--n", "60", "--p", "80", "--n-active", "5", "--sigma2", "1", "--n-test", "40", "--seed", "3",
        "--out", p(dir),
    ]);
    assert_eq!(code(&sim), 0, "{}", String::from_utf8_lossy(&sim.stderr));
    let train = dir.join("train.csv");
    let test = dir.join("test.csv");
    let mut args = vec![cmd, "--data", p(&train), "--nummods", "4,8", "--nnu", "8", "--measure", "mse", "--seed", "9"];
    if cmd == "fit" {
        args.extend(["--val", p(&test)]);
    } else {
        args.extend(["--nfolds", "2"]);
    }
    args.extend(["--out", p(dir)]);
    let fit = spar(&args);
    assert_eq!(code(&fit), 0, "{}", String::from_utf8_lossy(&fit.stderr));
    assert!(fit.stderr.is_empty(), "{}", String::from_utf8_lossy(&fit.stderr));
}

#[test]
fn missing_data_is_a_usage_error() {
    let out = spar(&["fit"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn nfolds_on_fit_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "a,y\n1,2\n3,4\n").unwrap();
    assert_eq!(code(&spar(&["fit", "--data", p(&data), "--nfolds", "3"])), 2);
}

#[test]
fn malformed_data_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "a,b,y\n1,2,3\n4,oops,6\n7,8,9\n").unwrap();
    let out = spar(&["fit", "--data", p(&data), "--out", p(dir.path())]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 3, column 2"));
    let model = dir.path().join("model.json");
    fs::write(&model, "{\"format\":\"spar-model\",\"vers").unwrap();
    assert_eq!(code(&spar(&["coef", "--model", p(&model)])), 3);
}

#[test]
fn simulate_writes_the_reference_recipe() {
    let dir = tempfile::tempdir().unwrap();
    let out = spar(&["simulate", "--seed", "5", "--out", p(dir.path())]);
    assert_eq!(code(&out), 0);
    let d = load_csv(dir.path().join("train.csv"), true, &ResponseColumn::parse("y")).unwrap();
    assert_eq!((d.n(), d.p()), (200, 2000));
    let truth = Truth::load(dir.path().join("truth.json")).unwrap();
    assert_eq!(truth.active.len(), 100);
    assert_eq!(truth.sigma2, 83.0);
    assert!(truth.beta[..100].iter().all(|b| [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0].contains(b)));
}

#[test]
fn predictions_equal_library_calls() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fitted(d, "fit");
    let model = load_model(d.join("model.json")).unwrap();
    let test = load_csv(d.join("test.csv"), true, &ResponseColumn::parse("y")).unwrap();
    for (t, avg) in [("response", "link"), ("link", "link"), ("response", "response")] {
        let out_path = d.join(format!("pred_{t}_{avg}.csv"));
        let out = spar(&[
            "predict", "--model", p(&d.join("model.json")), "--data", p(&d.join("test.csv")), "--response", "y",
            "--type", t, "--avg-type", avg, "--out", p(&out_path),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let req = PredictRequest {
            predict_type: t.parse::<PredictType>().unwrap(),
            avg_type: avg.parse::<AvgType>().unwrap(),
            ..PredictRequest::default()
        };
        let lib = model.predict(&test.x, &req).unwrap();
        assert_eq!(column(&out_path, 0), lib);
    }

    let coef_path = d.join("coef.json");
    assert_eq!(code(&spar(&["coef", "--model", p(&d.join("model.json")), "--out", p(&coef_path)])), 0);
    let via_coef = d.join("pred_coef.csv");
    let out = spar(&[
        "predict", "--coef", p(&coef_path), "--data", p(&d.join("test.csv")), "--response", "y", "--out", p(&via_coef),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(column(&via_coef, 0), column(&d.join("pred_response_link.csv"), 0));
}

#[test]
fn huge_threshold_gives_constant_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fitted(d, "fit");
    let out_path = d.join("flat.csv");
    let out = spar(&[
        "predict", "--model", p(&d.join("model.json")), "--data", p(&d.join("test.csv")), "--response", "y", "--nu",
        "1e9", "--out", p(&out_path),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let preds = column(&out_path, 0);
    assert!(preds.iter().all(|v| *v == preds[0]));
}

#[test]
fn summary_quantiles_match_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fitted(d, "fit");
    let coef_path = d.join("coef.json");
    assert_eq!(code(&spar(&["coef", "--model", p(&d.join("model.json")), "--out", p(&coef_path)])), 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&coef_path).unwrap()).unwrap();
    let mut nz: Vec<f64> = v["beta"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b.as_f64().unwrap())
        .filter(|b| *b != 0.0)
        .collect();
    nz.sort_by(f64::total_cmp);
    let mean = nz.iter().sum::<f64>() / nz.len() as f64;
    let expect = [nz[0], quantile_sorted(&nz, 0.25), quantile_sorted(&nz, 0.5), mean, quantile_sorted(&nz, 0.75), nz[nz.len() - 1]];
    let summary = fs::read_to_string(d.join("summary.txt")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    let row = lines.iter().position(|l| l.contains("Median")).unwrap() + 1;
    let got: Vec<f64> = lines[row].split_whitespace().map(|s| s.parse().unwrap()).collect();
    for (g, e) in got.iter().zip(expect) {
        assert!((g - e).abs() <= 5e-6, "{g} vs {e}");
    }
    assert!(summary.contains(&format!("{} / 80 active", v["active"])));
}

#[test]
fn residual_report_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fitted(d, "fit");
    let model = load_model(d.join("model.json")).unwrap();
    let train = load_csv(d.join("train.csv"), true, &ResponseColumn::parse("y")).unwrap();
    let rep = d.join("rep");
    let out = spar(&[
        "report", "--model", p(&d.join("model.json")), "--xfit", p(&d.join("train.csv")), "--response", "y", "--out",
        p(&rep),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let fitted_vals = column(&rep.join("res_vs_fitted.csv"), 1);
    let resid = column(&rep.join("res_vs_fitted.csv"), 2);
    let lib = model.predict(&train.x, &PredictRequest::default()).unwrap();
    for i in 0..train.n() {
        assert_eq!(fitted_vals[i], lib[i]);
        assert_eq!(resid[i], train.y[i] - lib[i]);
    }
    for f in ["measure_vs_nu.csv", "measure_vs_nummod.csv", "coefs.csv"] {
        assert!(rep.join(f).exists(), "{f}");
    }
    let coefs = column(&rep.join("coefs.csv"), 0);
    assert_eq!(coefs.len(), 80);
}

#[test]
fn residual_plot_needs_fit_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fitted(d, "fit");
    let out = spar(&["report", "--model", p(&d.join("model.json")), "--plot", "res-vs-fitted", "--out", p(d)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn cv_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fitted(d, "cv");
    for f in ["model.json", "grid.csv", "folds.csv", "summary.txt"] {
        assert!(d.join(f).exists(), "{f}");
    }
    let model = load_model(d.join("model.json")).unwrap();
    assert!(model.is_cv());
    let one = model.one_se.expect("cv stores a 1se choice");
    assert!(one.active <= model.best.active);
    let summary = fs::read_to_string(d.join("summary.txt")).unwrap();
    assert!(summary.starts_with("spar.cv object:"));
    assert!(summary.contains("within one standard error"));
    let best = model.coef(OptPar::Best).unwrap();
    assert!(best.active_count() <= 80);
}
