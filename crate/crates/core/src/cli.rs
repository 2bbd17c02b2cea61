//! Command-line front end. Every command is a thin wrapper over library calls.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 data error,
//! 4 numerical failure.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{self, ActivePositions, ResponseColumn, SyntheticSpec};
use crate::ensemble::{predict_with_coefficients, AvgType, Coefficients, Measure, PredictType};
use crate::error::{Result, SparError};
use crate::family::{Family, FamilySpec, Link};
use crate::persist;
use crate::projection::RpKind;
use crate::report::{self, Curve};
use crate::screening::{ScreenMethod, SelectionType};
use crate::spar::{OptPar, PredictRequest, Spar, SparConfig, SparEnsemble};

#[derive(Debug, Parser)]
#[command(name = "spar", version, about = "Sparse projected averaged regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit an ensemble and select (nu, nummod) on validation data.
    Fit(FitArgs),
    /// Fit an ensemble and select (nu, nummod) by k-fold cross-validation.
    Cv(FitArgs),
    /// Predict from a saved model or coefficient file.
    Predict(PredictArgs),
    /// Write a synthetic dataset and its truth sidecar.
    Simulate(SimulateArgs),
    /// Export averaged coefficients.
    Coef(CoefArgs),
    /// Write plot data for a saved model.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SpecArgs {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub link: Option<String>,
    /// cor, marglik or ridge.
    #[arg(long)]
    pub screen: Option<String>,
    /// prob or fixed.
    #[arg(long)]
    pub screen_type: Option<String>,
    #[arg(long)]
    pub nscreen: Option<usize>,
    #[arg(long)]
    pub split_prop: Option<f64>,
    /// gaussian, sparse, cw, haar or haar-select.
    #[arg(long)]
    pub rp: Option<String>,
    #[arg(long)]
    pub psi: Option<f64>,
    #[arg(long)]
    pub rp_data: Option<bool>,
    #[arg(long)]
    pub mslow: Option<usize>,
    #[arg(long)]
    pub msup: Option<usize>,
    /// Haar-select candidates per model.
    #[arg(long)]
    pub b2: Option<usize>,
    /// Ridge penalty of the marginal models.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub nnu: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub nus: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub nummods: Option<Vec<usize>>,
    /// deviance, mse, mae, class or 1-auc.
    #[arg(long)]
    pub measure: Option<String>,
    #[arg(long)]
    pub nfolds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, required = true)]
    pub data: PathBuf,
    /// Response column name, or a 0-based index.
    #[arg(long, default_value = "y")]
    pub response: String,
    /// Validation CSV with the same layout (fit only).
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[command(flatten)]
    pub spec: SpecArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, required_unless_present = "coef")]
    pub model: Option<PathBuf>,
    /// Coefficient file written by `spar coef`, used instead of the ensemble.
    #[arg(long)]
    pub coef: Option<PathBuf>,
    #[arg(long, required = true)]
    pub data: PathBuf,
    /// Column of the data file to ignore (e.g. a stored response).
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long = "type", default_value = "response")]
    pub predict_type: String,
    #[arg(long, default_value = "link")]
    pub avg_type: String,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub nummod: Option<usize>,
    #[arg(long, default_value = "best")]
    pub opt_par: String,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CoefArgs {
    #[arg(long, required = true)]
    pub model: PathBuf,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub nummod: Option<usize>,
    #[arg(long, default_value = "best")]
    pub opt_par: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, required = true)]
    pub model: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Plots to emit: val-measure, val-numact, res-vs-fitted, coefs or all.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub plot: Vec<String>,
    /// Predictor CSV for residuals.
    #[arg(long)]
    pub xfit: Option<PathBuf>,
    /// Single-column response CSV for residuals.
    #[arg(long)]
    pub yfit: Option<PathBuf>,
    /// Response column inside --xfit, as an alternative to --yfit.
    #[arg(long)]
    pub response: Option<String>,
    /// Half-open range START:END of variable positions in the coefficient plot.
    #[arg(long)]
    pub prange: Option<String>,
    /// Comma-separated 0-based variable order for the coefficient plot.
    #[arg(long, value_delimiter = ',')]
    pub coef_order: Option<Vec<usize>>,
    #[arg(long, default_value = "best")]
    pub opt_par: String,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 2000)]
    pub p: usize,
    #[arg(long, default_value_t = 100)]
    pub n_active: usize,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 83.0)]
    pub sigma2: f64,
    #[arg(long, default_value = "gaussian")]
    pub family: String,
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    /// first or random.
    #[arg(long, default_value = "first")]
    pub positions: String,
    #[arg(long, default_value_t = 0)]
    pub n_test: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Coefficient file shared by `coef` and `predict --coef`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefFile {
    pub family: FamilySpec,
    #[serde(flatten)]
    pub coefficients: Coefficients,
    pub active: usize,
}

/// Parse `args` (including the program name) and execute; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Fit(a) => cmd_fit(&a, false),
        Command::Cv(a) => cmd_fit(&a, true),
        Command::Predict(a) => cmd_predict(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Coef(a) => cmd_coef(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn parse<T: FromStr<Err = SparError>>(s: &str) -> Result<T> {
    s.parse()
}

fn parse_link(s: &str) -> Result<Link> {
    match s {
        "identity" => Ok(Link::Identity),
        "logit" => Ok(Link::Logit),
        "log" => Ok(Link::Log),
        o => Err(SparError::config(format!("unknown link '{o}'"))),
    }
}

/// Build the configuration: JSON file first, flags on top.
pub fn build_config(spec: &SpecArgs, cv: bool) -> Result<SparConfig> {
    let mut cfg = match &spec.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| SparError::config(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| SparError::config(format!("invalid config {}: {e}", path.display())))?
        }
        None => SparConfig::default(),
    };
    if let Some(f) = &spec.family {
        let fam: Family = parse(f)?;
        cfg.family = FamilySpec::new(fam);
    }
    if let Some(l) = &spec.link {
        cfg.family = FamilySpec::with_link(cfg.family.family, parse_link(l)?)?;
    }
    if let Some(s) = &spec.screen {
        let m: ScreenMethod = parse(s)?;
        if let ScreenMethod::Plugin(name) = m {
            return Err(SparError::config(format!(
                "unknown screening method '{name}' (expected cor, marglik or ridge)"
            )));
        }
        cfg.screen.method = m;
    }
    if let Some(t) = &spec.screen_type {
        cfg.screen.selection_type = parse::<SelectionType>(t)?;
    }
    if spec.nscreen.is_some() {
        cfg.screen.nscreen = spec.nscreen;
    }
    if spec.split_prop.is_some() {
        cfg.screen.split_data_prop = spec.split_prop;
    }
    if let Some(r) = &spec.rp {
        let k: RpKind = parse(r)?;
        if let RpKind::Plugin(name) = k {
            return Err(SparError::config(format!(
                "unknown projection '{name}' (expected gaussian, sparse, cw, haar or haar-select)"
            )));
        }
        cfg.rp.kind = k;
    }
    if let Some(psi) = spec.psi {
        cfg.rp.psi = psi;
    }
    if let Some(d) = spec.rp_data {
        cfg.rp.data_driven = d;
    }
    if spec.mslow.is_some() {
        cfg.rp.mslow = spec.mslow;
    }
    if spec.msup.is_some() {
        cfg.rp.msup = spec.msup;
    }
    if let Some(b2) = spec.b2 {
        cfg.rp.b2 = b2;
    }
    if spec.epsilon.is_some() {
        cfg.model.epsilon = spec.epsilon;
    }
    if let Some(n) = spec.nnu {
        cfg.nnu = n;
    }
    if spec.nus.is_some() {
        cfg.nus = spec.nus.clone();
    }
    if let Some(m) = &spec.nummods {
        cfg.nummods = m.clone();
    }
    if let Some(m) = &spec.measure {
        cfg.measure = parse::<Measure>(m)?;
    }
    if let Some(k) = spec.nfolds {
        if !cv {
            return Err(SparError::config("--nfolds only applies to the cv command"));
        }
        cfg.nfolds = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_fit(a: &FitArgs, cv: bool) -> Result<()> {
    let cfg = build_config(&a.spec, cv)?;
    if cv && a.val.is_some() {
        return Err(SparError::config("--val only applies to the fit command"));
    }
    let resp = ResponseColumn::parse(&a.response);
    let train = data::load_csv(&a.data, true, &resp)?;
    let mut spar = Spar::new(cfg).seed(a.spec.seed.unwrap_or(0));
    if let Some(t) = a.spec.threads {
        spar = spar.threads(t);
    }
    let model = if cv {
        spar.cv(&train.x, &train.y)?
    } else {
        let val = a.val.as_ref().map(|p| data::load_csv(p, true, &resp)).transpose()?;
        spar.fit(&train.x, &train.y, val.as_ref().map(|v| (&v.x, v.y.as_slice())))?
    };
    fs::create_dir_all(&a.out)?;
    persist::save_model(a.out.join("model.json"), &model)?;
    model.grid.write_csv(create(&a.out.join("grid.csv"))?)?;
    if cv {
        model.grid.write_folds_csv(create(&a.out.join("folds.csv"))?)?;
    }
    let summary = report::summary_text(&model)?;
    fs::write(a.out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn load_predictors(path: &Path, drop: Option<&str>) -> Result<DMatrix<f64>> {
    let resp = drop.map(ResponseColumn::parse).unwrap_or(ResponseColumn::None);
    Ok(data::load_csv(path, true, &resp)?.x)
}

fn write_column<W: Write>(w: W, name: &str, values: &[f64]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([name])?;
    for v in values {
        out.write_record([v.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let predict_type: PredictType = parse(&a.predict_type)?;
    let avg_type: AvgType = parse(&a.avg_type)?;
    let opt_par: OptPar = parse(&a.opt_par)?;
    let x = load_predictors(&a.data, a.response.as_deref())?;
    let preds = match &a.coef {
        Some(path) => {
            if avg_type == AvgType::Response || a.nu.is_some() || a.nummod.is_some() {
                return Err(SparError::config(
                    "--coef predictions use the stored coefficients; --avg-type response, --nu and --nummod need --model",
                ));
            }
            let text = fs::read_to_string(path)?;
            let cf: CoefFile = serde_json::from_str(&text).map_err(|e| SparError::Schema(e.to_string()))?;
            predict_with_coefficients(&cf.coefficients, cf.family, &x, predict_type)?
        }
        None => {
            let model = persist::load_model(a.model.as_ref().expect("clap enforces --model"))?;
            model.predict(
                &x,
                &PredictRequest {
                    predict_type,
                    avg_type,
                    nu: a.nu,
                    nummod: a.nummod,
                    opt_par,
                },
            )?
        }
    };
    write_column(output(a.out.as_deref())?, "prediction", &preds)
}

/// Coefficients for explicit `nu`/`nummod`, falling back to the `opt_par` cell.
pub fn select_coefficients(model: &SparEnsemble, nu: Option<f64>, nummod: Option<usize>, opt_par: OptPar) -> Result<Coefficients> {
    let c = model.choice(opt_par)?;
    model.coef_at(nu.unwrap_or(c.nu), nummod.unwrap_or(c.nummod))
}

fn cmd_coef(a: &CoefArgs) -> Result<()> {
    let opt_par: OptPar = parse(&a.opt_par)?;
    let model = persist::load_model(&a.model)?;
    let coefficients = select_coefficients(&model, a.nu, a.nummod, opt_par)?;
    let file = CoefFile {
        family: model.family(),
        active: coefficients.active_count(),
        coefficients,
    };
    let text = serde_json::to_string_pretty(&file).map_err(|e| SparError::Schema(e.to_string()))?;
    let mut w = output(a.out.as_deref())?;
    writeln!(w, "{text}")?;
    w.flush()?;
    Ok(())
}

fn parse_prange(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| SparError::config(format!("prange '{s}' is not START:END")))?;
    let lo = a.trim().parse().map_err(|_| SparError::config(format!("bad prange start '{a}'")))?;
    let hi = b.trim().parse().map_err(|_| SparError::config(format!("bad prange end '{b}'")))?;
    Ok((lo, hi))
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    const KINDS: [&str; 4] = ["val-measure", "val-numact", "res-vs-fitted", "coefs"];
    let mut kinds: Vec<&str> = Vec::new();
    for p in &a.plot {
        match p.as_str() {
            "all" => kinds.extend(KINDS),
            k if KINDS.contains(&k) => kinds.push(k),
            o => return Err(SparError::config(format!("unknown plot '{o}'"))),
        }
    }
    let explicit_residuals = a.plot.iter().any(|p| p == "res-vs-fitted");
    let has_fit_data = a.xfit.is_some();
    if explicit_residuals && !has_fit_data {
        return Err(SparError::config(
            "res-vs-fitted needs --xfit and --yfit because models do not store their training data",
        ));
    }
    let opt_par: OptPar = parse(&a.opt_par)?;
    let prange = a.prange.as_deref().map(parse_prange).transpose()?;
    let model = persist::load_model(&a.model)?;
    fs::create_dir_all(&a.out)?;
    let choice = model.choice(opt_par)?;
    let [over_nu, over_m] = Curve::through(choice);
    if kinds.contains(&"val-measure") || kinds.contains(&"val-numact") {
        report::write_curve(&model, over_nu, create(&a.out.join("measure_vs_nu.csv"))?)?;
        report::write_curve(&model, over_m, create(&a.out.join("measure_vs_nummod.csv"))?)?;
    }
    if kinds.contains(&"res-vs-fitted") && has_fit_data {
        let xpath = a.xfit.as_ref().expect("checked above");
        let (x, y) = match (&a.yfit, &a.response) {
            (Some(ypath), _) => {
                let x = load_predictors(xpath, a.response.as_deref())?;
                let yd = data::load_csv(ypath, true, &ResponseColumn::None)?;
                if yd.p() != 1 {
                    return Err(SparError::shape("--yfit must have exactly one column"));
                }
                (x, yd.x.column(0).iter().copied().collect::<Vec<_>>())
            }
            (None, Some(r)) => {
                let d = data::load_csv(xpath, true, &ResponseColumn::parse(r))?;
                (d.x, d.y)
            }
            (None, None) => return Err(SparError::config("--xfit needs --yfit or --response")),
        };
        let pairs = report::residuals(&model, &x, &y, opt_par)?;
        report::write_residuals(&pairs, create(&a.out.join("res_vs_fitted.csv"))?)?;
    }
    if kinds.contains(&"coefs") {
        let rows = report::coef_matrix(&model, a.coef_order.as_deref(), prange)?;
        report::write_coef_matrix(&rows, model.ensemble.models.len(), create(&a.out.join("coefs.csv"))?)?;
    }
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n: a.n,
        p: a.p,
        n_active: a.n_active,
        mu: a.mu,
        sigma2: a.sigma2,
        family: parse(&a.family)?,
        rho: a.rho,
        active_positions: parse::<ActivePositions>(&a.positions)?,
        n_test: a.n_test,
        ..SyntheticSpec::default()
    };
    let (ds, truth) = data::generate_synthetic(&spec, a.seed)?;
    fs::create_dir_all(&a.out)?;
    data::save_csv(a.out.join("train.csv"), &ds.x, &ds.y, None)?;
    if let Some((xt, yt)) = &ds.test {
        data::save_csv(a.out.join("test.csv"), xt, yt, None)?;
    }
    truth.save(a.out.join("truth.json"))?;
    println!(
        "wrote {} training rows x {} predictors{} to {}",
        ds.n(),
        ds.p(),
        if ds.test.is_some() { format!(" and {} test rows", spec.n_test) } else { String::new() },
        a.out.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["spar", "fit"]), 2);
        assert_eq!(run(["spar", "bogus"]), 2);
        assert_eq!(run(["spar", "--help"]), 0);
    }

    #[test]
    fn flags_override_defaults() {
        let cli = Cli::try_parse_from([
            "spar", "cv", "--data", "d.csv", "--family", "binomial", "--measure", "1-auc", "--nummods", "5,10",
            "--nfolds", "4", "--rp", "haar-select", "--screen", "marglik", "--screen-type", "fixed",
        ])
        .unwrap();
        let Command::Cv(a) = cli.command else { panic!() };
        let cfg = build_config(&a.spec, true).unwrap();
        assert_eq!(cfg.family.family, Family::Binomial);
        assert_eq!(cfg.measure, Measure::OneMinusAuc);
        assert_eq!(cfg.nummods, vec![5, 10]);
        assert_eq!(cfg.nfolds, 4);
        assert_eq!(cfg.rp.kind, RpKind::HaarSelect);
        assert_eq!(cfg.screen.method, ScreenMethod::Marglik);
        assert_eq!(cfg.screen.selection_type, SelectionType::Fixed);
    }

    #[test]
    fn inconsistent_flags_are_config_errors() {
        let parse_fit = |extra: &[&str]| {
            let mut args = vec!["spar", "fit", "--data", "d.csv"];
            args.extend_from_slice(extra);
            let Command::Fit(a) = Cli::try_parse_from(args).unwrap().command else { panic!() };
            build_config(&a.spec, false)
        };
        assert!(matches!(parse_fit(&["--nfolds", "3"]), Err(SparError::Config(_))));
        assert!(matches!(parse_fit(&["--measure", "class"]), Err(SparError::Config(_))));
        assert!(matches!(parse_fit(&["--screen", "lasso"]), Err(SparError::Config(_))));
        assert!(matches!(parse_fit(&["--family", "binomial", "--link", "log"]), Err(SparError::Config(_))));
        assert!(parse_fit(&["--family", "poisson", "--measure", "mae"]).is_ok());
    }

    #[test]
    fn prange_parsing() {
        assert_eq!(parse_prange("3:9").unwrap(), (3, 9));
        assert!(parse_prange("3-9").is_err());
    }
}
