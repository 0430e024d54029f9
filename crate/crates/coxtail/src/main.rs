//! Command-line front end: `fit`, `predict`, `select`, `aggregate`,
//! `simulate`, `calibrate`.
//!
//! Exit codes: 0 success, 2 usage, 3 data error, 4 numeric/convergence
//! error, 5 selection error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use coxtail::aggregate::{aggregate_adaptive, aggregate_simple, min_admissible_m0};
use coxtail::cox::{breslow_baseline, fit_beta, DEFAULT_MAX_ITER, DEFAULT_TOL};
use coxtail::data::{load_dataset_path, SurvivalSample};
use coxtail::error::Error;
use coxtail::manifest::RunManifest;
use coxtail::model::{write_curve_csv, FittedModel, ModelFile};
use coxtail::select::{
    calibrate_d_pareto, select_threshold, SelectionParams, DEFAULT_CALIBRATION_QUANTILE,
    DEFAULT_CALIBRATION_REPS, DEFAULT_N_GRID, DEFAULT_ZETA_PRIME, DEFAULT_ZETA_SECOND,
};
use coxtail::sim::{run_monte_carlo, SimConfig};
use coxtail::tail::SemiParamModel;
use coxtail::Result;

#[derive(Parser)]
#[command(name = "coxtail", version, about = "Cox survival estimation with a Pareto tail")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a CSV dataset and write it as JSON.
    Fit(FitArgs),
    /// Evaluate a fitted model: survival at a time, a quantile, or a batch.
    Predict(PredictArgs),
    /// Run the adaptive threshold selection and write the report.
    Select(SelectArgs),
    /// Fit an aggregated model.
    Aggregate(AggregateArgs),
    /// Run a Monte-Carlo error study from a JSON config.
    Simulate(SimulateArgs),
    /// Calibrate the critical value D under a Pareto null.
    Calibrate(CalibrateArgs),
}

#[derive(Args, Clone)]
struct SelectionFlags {
    /// Grid size over order statistics.
    #[arg(long, default_value_t = DEFAULT_N_GRID)]
    n_grid: usize,
    /// Lower window trim fraction.
    #[arg(long, default_value_t = DEFAULT_ZETA_PRIME)]
    zeta_prime: f64,
    /// Upper window trim fraction.
    #[arg(long, default_value_t = DEFAULT_ZETA_SECOND)]
    zeta_second: f64,
    /// Critical value D: a number or the path of a `calibrate` output file.
    /// When absent, D is calibrated on the fly.
    #[arg(long)]
    critical_value: Option<String>,
    /// Calibration quantile (used when D is calibrated here).
    #[arg(long, default_value_t = DEFAULT_CALIBRATION_QUANTILE)]
    quantile: f64,
    /// Calibration replications.
    #[arg(long, default_value_t = DEFAULT_CALIBRATION_REPS)]
    n_mc: usize,
    /// Calibration seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SelectionFlags {
    fn resolve(&self, n: usize) -> Result<SelectionParams> {
        let d = match &self.critical_value {
            Some(text) => match text.parse::<f64>() {
                Ok(v) => v,
                Err(_) => CriticalValueFile::read(Path::new(text))?.critical_value,
            },
            None => {
                let tuning =
                    SelectionParams::new(self.n_grid, self.zeta_prime, self.zeta_second, f64::MAX)?;
                coxtail::select::calibrate_d(n, &tuning, self.quantile, self.n_mc, self.seed)?
            }
        };
        SelectionParams::new(self.n_grid, self.zeta_prime, self.zeta_second, d)
    }
}

#[derive(Args)]
struct FitArgs {
    /// Input dataset (CSV with header `time,status,z1,...,zp`).
    data: PathBuf,
    /// One of `na`, `fixed:<tau>`, `adaptive`, `agg-simple`, `agg-adaptive`.
    #[arg(long)]
    method: String,
    /// Regression coefficients, comma separated. Estimated when omitted.
    #[arg(long)]
    beta: Option<FloatList>,
    /// Number of aggregated thresholds.
    #[arg(long, default_value_t = 10)]
    m: usize,
    /// Starting order-statistic index for simple aggregation (1-based).
    #[arg(long)]
    m0: Option<usize>,
    /// Starting index as a fraction of n (e.g. 0.06).
    #[arg(long)]
    m0_frac: Option<f64>,
    #[command(flatten)]
    selection: SelectionFlags,
    /// Output model file (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Optional curve CSV over `--grid`.
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Curve grid `lo:hi:count` or `lo:hi:count:log`.
    #[arg(long, default_value = "0.1:100:200:log")]
    grid: String,
    /// Covariate vector for the curve export (defaults to zeros).
    #[arg(long)]
    z: Option<FloatList>,
}

#[derive(Args)]
struct PredictArgs {
    /// Fitted model file (JSON from `fit` or `aggregate`).
    model: PathBuf,
    /// Covariate vector, comma separated (defaults to zeros).
    #[arg(long)]
    z: Option<FloatList>,
    /// Print survival S(x|z) at this time.
    #[arg(long, conflicts_with_all = ["quantile", "batch"])]
    survival_at: Option<f64>,
    /// Print the smallest time with survival <= p (or NA).
    #[arg(long, conflicts_with = "batch")]
    quantile: Option<f64>,
    /// Batch CSV with header `z1,...,zp,x`; prints survival per row.
    #[arg(long)]
    batch: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    data: PathBuf,
    #[arg(long)]
    beta: Option<FloatList>,
    #[command(flatten)]
    selection: SelectionFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AggregateArgs {
    data: PathBuf,
    /// `simple` or `adaptive`.
    #[arg(long)]
    method: String,
    #[arg(long)]
    beta: Option<FloatList>,
    #[arg(long, default_value_t = 10)]
    m: usize,
    #[arg(long)]
    m0: Option<usize>,
    #[arg(long)]
    m0_frac: Option<f64>,
    #[command(flatten)]
    selection: SelectionFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Simulation config (JSON, see `SimConfig`).
    config: PathBuf,
    /// Output directory for `report.json` and `report.csv`.
    #[arg(long)]
    out_dir: PathBuf,
    /// Parallelism bound for replications.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Sample size of the calibration replications.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_N_GRID)]
    n_grid: usize,
    #[arg(long, default_value_t = DEFAULT_ZETA_PRIME)]
    zeta_prime: f64,
    #[arg(long, default_value_t = DEFAULT_ZETA_SECOND)]
    zeta_second: f64,
    #[arg(long, default_value_t = DEFAULT_CALIBRATION_QUANTILE)]
    quantile: f64,
    #[arg(long, default_value_t = DEFAULT_CALIBRATION_REPS)]
    n_mc: usize,
    #[arg(long)]
    seed: u64,
    /// Pareto index of the simulated failure law.
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    /// Optional Pareto censoring index for calibration under censoring.
    #[arg(long)]
    censor_theta: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

/// Calibration output file.
#[derive(Debug, Serialize, Deserialize)]
struct CriticalValueFile {
    critical_value: f64,
    n: usize,
    quantile: f64,
    n_mc: usize,
    seed: u64,
    failure_theta: f64,
    censoring_theta: Option<f64>,
}

impl CriticalValueFile {
    fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?)
    }
}

/// Comma-separated float list flag value.
#[derive(Clone, Debug)]
struct FloatList(Vec<f64>);

impl std::str::FromStr for FloatList {
    type Err = String;
    fn from_str(text: &str) -> std::result::Result<Self, String> {
        text.split(',')
            .map(|part| part.trim().parse::<f64>().map_err(|_| format!("`{part}` is not a number")))
            .collect::<std::result::Result<Vec<f64>, String>>()
            .map(FloatList)
    }
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 && parts.len() != 4 {
        return Err(Error::domain(format!("grid spec `{spec}` is not lo:hi:count[:log]")));
    }
    let lo: f64 = parts[0].parse().map_err(|_| Error::domain("grid lo is not a number"))?;
    let hi: f64 = parts[1].parse().map_err(|_| Error::domain("grid hi is not a number"))?;
    let count: usize = parts[2].parse().map_err(|_| Error::domain("grid count is not an integer"))?;
    if count < 2 || !(hi > lo) {
        return Err(Error::domain("grid needs lo < hi and count >= 2"));
    }
    if parts.len() == 4 {
        if parts[3] != "log" {
            return Err(Error::domain(format!("unknown grid mode `{}`", parts[3])));
        }
        if !(lo > 0.0) {
            return Err(Error::domain("log grid needs lo > 0"));
        }
        return Ok(coxtail::sim::geometric_grid(lo, hi, count));
    }
    let step = (hi - lo) / (count - 1) as f64;
    Ok((0..count).map(|j| lo + j as f64 * step).collect())
}

fn resolve_beta(sample: &SurvivalSample, beta: &Option<FloatList>) -> Result<Vec<f64>> {
    match beta {
        Some(FloatList(b)) => {
            if b.len() != sample.n_covariates() {
                return Err(Error::domain(format!(
                    "--beta has {} entries, the dataset has {} covariate columns",
                    b.len(),
                    sample.n_covariates()
                )));
            }
            Ok(b.clone())
        }
        None => {
            if sample.n_covariates() == 0 {
                return Ok(Vec::new());
            }
            let init = vec![0.0; sample.n_covariates()];
            Ok(fit_beta(sample, &init, DEFAULT_TOL, DEFAULT_MAX_ITER)?.beta)
        }
    }
}

fn resolve_m0(sample: &SurvivalSample, m0: Option<usize>, m0_frac: Option<f64>) -> Result<usize> {
    let min = min_admissible_m0(sample)?;
    match (m0, m0_frac) {
        (Some(_), Some(_)) => Err(Error::domain("--m0 and --m0-frac are mutually exclusive")),
        (Some(idx), None) => Ok(idx),
        (None, Some(frac)) => Ok(((frac * sample.n() as f64).ceil() as usize).max(min)),
        (None, None) => Ok(min),
    }
}

fn build_thread_pool(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::numeric(format!("thread pool setup failed: {e}")))?;
    }
    Ok(())
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let sample = load_dataset_path(&args.data)?;
    let beta = resolve_beta(&sample, &args.beta)?;

    let model = match args.method.as_str() {
        "na" => FittedModel::NelsonAalen { cox: breslow_baseline(&sample, &beta)? },
        "adaptive" => {
            let params = args.selection.resolve(sample.n())?;
            let sel = select_threshold(&sample, &beta, &params)?;
            let cox = breslow_baseline(&sample, &beta)?;
            let model =
                SemiParamModel::from_parts(cox, sel.tau_hat, sel.theta_hat, sel.n_tau, sel.numerator)?;
            println!(
                "selected tau={} theta={} k_hat={} l_hat={} exceeded={}",
                sel.tau_hat, sel.theta_hat, sel.k_hat, sel.l_hat, sel.exceeded
            );
            FittedModel::SemiParametric { model }
        }
        "agg-simple" => {
            let m0 = resolve_m0(&sample, args.m0, args.m0_frac)?;
            FittedModel::Aggregate { model: aggregate_simple(&sample, &beta, m0, args.m)? }
        }
        "agg-adaptive" => {
            let params = args.selection.resolve(sample.n())?;
            let sel = select_threshold(&sample, &beta, &params)?;
            FittedModel::Aggregate { model: aggregate_adaptive(&sample, &beta, &sel, args.m)? }
        }
        other => {
            if let Some(tau_text) = other.strip_prefix("fixed:") {
                let requested: f64 = tau_text
                    .parse()
                    .map_err(|_| Error::domain(format!("`{tau_text}` is not a threshold")))?;
                let tau = sample.snap_time_up(requested).ok_or_else(|| {
                    Error::selection(format!("no observed time at or above {requested}"))
                })?;
                println!("snapped tau={tau}");
                FittedModel::SemiParametric { model: SemiParamModel::fit_fixed(&sample, &beta, tau)? }
            } else {
                return Err(Error::domain(format!(
                    "unknown method `{other}` (expected na, fixed:<tau>, adaptive, agg-simple, agg-adaptive)"
                )));
            }
        }
    };

    let mut manifest = RunManifest::new(
        "fit",
        serde_json::json!({
            "method": args.method,
            "beta": model.beta(),
            "m": args.m, "m0": args.m0, "m0_frac": args.m0_frac,
            "n_grid": args.selection.n_grid,
            "zeta_prime": args.selection.zeta_prime,
            "zeta_second": args.selection.zeta_second,
        }),
        Some(args.selection.seed),
    );
    manifest.add_input(&args.data)?;
    manifest.add_output(&args.out);

    if let Some(curve) = &args.curve {
        let grid = parse_grid(&args.grid)?;
        let z = args.z.clone().map(|l| l.0).unwrap_or_else(|| vec![0.0; model.beta().len()]);
        let file = std::fs::File::create(curve)?;
        write_curve_csv(&model, &z, &grid, std::io::BufWriter::new(file))?;
        manifest.add_output(curve);
    }

    let file = ModelFile { manifest: serde_json::to_value(&manifest)?, model };
    file.write(&args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let file = ModelFile::read(&args.model)?;
    let model = file.model;
    let z = args.z.clone().map(|l| l.0).unwrap_or_else(|| vec![0.0; model.beta().len()]);
    model.check_covariates(&z)?;

    if let Some(x) = args.survival_at {
        if x < 0.0 {
            return Err(Error::domain("--survival-at needs x >= 0"));
        }
        println!("{}", model.survival(&z, x));
        return Ok(());
    }
    if let Some(p) = args.quantile {
        match model.quantile(&z, p)? {
            Some(x) => println!("{x}"),
            None => println!("NA"),
        }
        return Ok(());
    }
    if let Some(batch) = &args.batch {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(batch)
            .map_err(|e| Error::domain(format!("cannot read batch file: {e}")))?;
        let p = model.beta().len();
        let mut wtr = csv::Writer::from_writer(std::io::stdout());
        let mut header: Vec<String> = (1..=p).map(|j| format!("z{j}")).collect();
        header.push("x".into());
        header.push("survival".into());
        wtr.write_record(&header).map_err(|e| Error::domain(e.to_string()))?;
        for record in rdr.records() {
            let record = record.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |pos| pos.line()),
                message: e.to_string(),
            })?;
            if record.len() != p + 1 {
                return Err(Error::domain(format!(
                    "batch rows need {} cells (z1..z{p},x), found {}",
                    p + 1,
                    record.len()
                )));
            }
            let mut row: Vec<f64> = Vec::with_capacity(p + 1);
            for cell in record.iter() {
                row.push(
                    cell.parse::<f64>()
                        .map_err(|_| Error::domain(format!("`{cell}` is not numeric")))?,
                );
            }
            let x = row[p];
            let survival = model.survival(&row[..p], x);
            let mut out: Vec<String> = row[..p].iter().map(|v| format!("{v}")).collect();
            out.push(format!("{x}"));
            out.push(format!("{survival}"));
            wtr.write_record(&out).map_err(|e| Error::domain(e.to_string()))?;
        }
        wtr.flush()?;
        return Ok(());
    }
    Err(Error::domain("predict needs one of --survival-at, --quantile, --batch"))
}

fn cmd_select(args: &SelectArgs) -> Result<()> {
    let sample = load_dataset_path(&args.data)?;
    let beta = resolve_beta(&sample, &args.beta)?;
    let params = args.selection.resolve(sample.n())?;
    let selection = select_threshold(&sample, &beta, &params)?;

    let mut manifest = RunManifest::new(
        "select",
        serde_json::json!({
            "beta": beta,
            "n_grid": params.n_grid,
            "zeta_prime": params.zeta_prime,
            "zeta_second": params.zeta_second,
            "critical_value": params.critical_value,
        }),
        Some(args.selection.seed),
    );
    manifest.add_input(&args.data)?;
    manifest.add_output(&args.out);

    let report = serde_json::json!({
        "manifest": manifest,
        "selection": selection,
    });
    serde_json::to_writer_pretty(std::fs::File::create(&args.out)?, &report)?;
    println!(
        "k_hat={} s_hat={} l_hat={} tau_hat={} theta_hat={} exceeded={}",
        selection.k_hat, selection.s_hat, selection.l_hat, selection.tau_hat,
        selection.theta_hat, selection.exceeded
    );
    Ok(())
}

fn cmd_aggregate(args: &AggregateArgs) -> Result<()> {
    let sample = load_dataset_path(&args.data)?;
    let beta = resolve_beta(&sample, &args.beta)?;
    let model = match args.method.as_str() {
        "simple" => {
            let m0 = resolve_m0(&sample, args.m0, args.m0_frac)?;
            aggregate_simple(&sample, &beta, m0, args.m)?
        }
        "adaptive" => {
            let params = args.selection.resolve(sample.n())?;
            let sel = select_threshold(&sample, &beta, &params)?;
            aggregate_adaptive(&sample, &beta, &sel, args.m)?
        }
        other => {
            return Err(Error::domain(format!(
                "unknown aggregation `{other}` (expected simple or adaptive)"
            )))
        }
    };

    let mut manifest = RunManifest::new(
        "aggregate",
        serde_json::json!({
            "method": args.method, "m": args.m, "beta": beta,
            "m0": args.m0, "m0_frac": args.m0_frac,
        }),
        Some(args.selection.seed),
    );
    manifest.add_input(&args.data)?;
    manifest.add_output(&args.out);

    let file = ModelFile {
        manifest: serde_json::to_value(&manifest)?,
        model: FittedModel::Aggregate { model },
    };
    file.write(&args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    build_thread_pool(args.threads)?;
    let config: SimConfig =
        serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(&args.config)?))
            .map_err(|e| Error::domain(format!("config schema violation: {e}")))?;
    config.validate()?;
    let report = run_monte_carlo(&config)?;

    std::fs::create_dir_all(&args.out_dir)?;
    let json_path = args.out_dir.join("report.json");
    let csv_path = args.out_dir.join("report.csv");

    let mut manifest =
        RunManifest::new("simulate", serde_json::to_value(&config)?, Some(config.seed));
    manifest.add_input(&args.config)?;
    manifest.add_output(&json_path);
    manifest.add_output(&csv_path);

    serde_json::to_writer_pretty(
        std::fs::File::create(&json_path)?,
        &serde_json::json!({ "manifest": manifest, "report": report }),
    )?;
    report.write_csv(std::fs::File::create(&csv_path)?)?;
    manifest.write_beside(&csv_path)?;

    println!("mean_censoring_rate={}", report.mean_censoring_rate);
    for est in &report.estimators {
        println!("estimator={} arelmse={} failed={}", est.name, est.arelmse, est.failed_replications);
    }
    Ok(())
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<()> {
    build_thread_pool(args.threads)?;
    let tuning = SelectionParams::new(args.n_grid, args.zeta_prime, args.zeta_second, f64::MAX)?;
    let d = calibrate_d_pareto(
        args.n,
        &tuning,
        args.quantile,
        args.n_mc,
        args.seed,
        args.theta,
        args.censor_theta,
    )?;
    let payload = CriticalValueFile {
        critical_value: d,
        n: args.n,
        quantile: args.quantile,
        n_mc: args.n_mc,
        seed: args.seed,
        failure_theta: args.theta,
        censoring_theta: args.censor_theta,
    };
    serde_json::to_writer_pretty(std::fs::File::create(&args.out)?, &payload)?;
    let manifest = RunManifest::new("calibrate", serde_json::to_value(&payload)?, Some(args.seed));
    manifest.write_beside(&args.out)?;
    println!("critical_value={d}");
    Ok(())
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Parse { .. } | Error::Domain(_) | Error::Io(_) | Error::Json(_) => 3,
        Error::Numeric(_) | Error::NonConvergence { .. } => 4,
        Error::Selection(_) => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Select(args) => cmd_select(args),
        Command::Aggregate(args) => cmd_aggregate(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Calibrate(args) => cmd_calibrate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
