//! Censored Cox data generation and the Monte-Carlo error study runner.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate_adaptive, aggregate_simple, min_admissible_m0};
use crate::cox::{breslow_baseline, fit_beta, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::data::SurvivalSample;
use crate::error::{Error, Result};
use crate::select::{
    calibrate_d, select_threshold, SelectionParams, DEFAULT_CALIBRATION_QUANTILE,
    DEFAULT_CALIBRATION_REPS, DEFAULT_N_GRID, DEFAULT_ZETA_PRIME, DEFAULT_ZETA_SECOND,
};
use crate::sim::laws::{open_unit, HeavyTailLaw};
use crate::tail::SemiParamModel;

/// Covariate distribution, applied independently per component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateLaw {
    Uniform { low: f64, high: f64 },
}

impl Default for CovariateLaw {
    fn default() -> Self {
        CovariateLaw::Uniform { low: -1.0, high: 1.0 }
    }
}

impl CovariateLaw {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            CovariateLaw::Uniform { low, high } => rng.gen_range(low..high),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            CovariateLaw::Uniform { low, high } => {
                if !(low < high) {
                    return Err(Error::domain(format!(
                        "uniform covariate law needs low < high (got {low}, {high})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Starting-index rule for simple aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum M0Rule {
    /// Smallest index with at least one event strictly above it.
    #[default]
    MinAdmissible,
    /// `ceil(fraction * n)`, floored at the admissible minimum.
    Fraction { fraction: f64 },
}

impl M0Rule {
    pub fn resolve(&self, sample: &SurvivalSample) -> Result<usize> {
        let min = min_admissible_m0(sample)?;
        Ok(match *self {
            M0Rule::MinAdmissible => min,
            M0Rule::Fraction { fraction } => {
                ((fraction * sample.n() as f64).ceil() as usize).max(min)
            }
        })
    }
}

/// Threshold-selection tuning inside a simulation config. A missing
/// critical value is calibrated on the fly (0.99 sweep quantile, 2000
/// replications, calibration streams of the config seed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionSettings {
    pub n_grid: usize,
    pub zeta_prime: f64,
    pub zeta_second: f64,
    pub critical_value: Option<f64>,
}

impl Default for SelectionSettings {
    fn default() -> Self {
        Self {
            n_grid: DEFAULT_N_GRID,
            zeta_prime: DEFAULT_ZETA_PRIME,
            zeta_second: DEFAULT_ZETA_SECOND,
            critical_value: None,
        }
    }
}

impl SelectionSettings {
    pub fn resolve(&self, n: usize, seed: u64) -> Result<SelectionParams> {
        let d = match self.critical_value {
            Some(d) => d,
            None => {
                let tuning =
                    SelectionParams::new(self.n_grid, self.zeta_prime, self.zeta_second, f64::MAX)?;
                calibrate_d(n, &tuning, DEFAULT_CALIBRATION_QUANTILE, DEFAULT_CALIBRATION_REPS, seed)?
            }
        };
        SelectionParams::new(self.n_grid, self.zeta_prime, self.zeta_second, d)
    }
}

fn default_m() -> usize {
    10
}

/// Configuration of one Monte-Carlo study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    /// Sample size per replication.
    pub n: usize,
    /// Number of replications.
    pub n_mc: usize,
    /// True regression parameter; its length sets the covariate dimension.
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub covariate_law: CovariateLaw,
    pub failure_baseline: HeavyTailLaw,
    /// Covariate-independent censoring law; absent means no censoring.
    #[serde(default)]
    pub censoring_law: Option<HeavyTailLaw>,
    /// Evaluation points for the error study (positive, ascending).
    pub eval_points: Vec<f64>,
    pub seed: u64,
    /// Number of aggregated thresholds `M`.
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub m0: M0Rule,
    #[serde(default)]
    pub selection: SelectionSettings,
    /// Re-estimate beta per replication instead of using the true value.
    #[serde(default)]
    pub estimate_beta: bool,
    /// Extra fixed-threshold estimators to evaluate (one per tau).
    #[serde(default)]
    pub fixed_taus: Vec<f64>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::domain("simulation needs n >= 3"));
        }
        if self.n_mc < 1 {
            return Err(Error::domain("simulation needs n_mc >= 1"));
        }
        self.covariate_law.validate()?;
        self.failure_baseline.validate()?;
        if let Some(law) = &self.censoring_law {
            law.validate()?;
        }
        if self.eval_points.is_empty() {
            return Err(Error::domain("eval_points must be non-empty"));
        }
        if self.eval_points.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::domain("eval_points must be strictly positive"));
        }
        if self.eval_points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::domain("eval_points must be strictly ascending"));
        }
        if self.m < 1 {
            return Err(Error::domain("m must be at least 1"));
        }
        if self.fixed_taus.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::domain("fixed_taus must be strictly positive"));
        }
        Ok(())
    }
}

/// Draw one censored Cox sample.
///
/// Replication `r` of seed `s` uses ChaCha8 stream `r` of `s`; per
/// observation the stream yields the covariates, then the failure uniform,
/// then the censoring draw. The failure time comes from the inverse
/// transform `S0(X) = U^{exp(-beta . z)}`.
pub fn simulate_cox_sample(config: &SimConfig, replication: usize) -> Result<SurvivalSample> {
    config.validate()?;
    let p = config.beta.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(replication as u64);

    let mut times = Vec::with_capacity(config.n);
    let mut status = Vec::with_capacity(config.n);
    let mut covariates = Vec::with_capacity(config.n * p);

    for _ in 0..config.n {
        let mut linear = 0.0;
        for &b in &config.beta {
            let z = config.covariate_law.sample(&mut rng);
            covariates.push(z);
            linear += b * z;
        }
        let u = open_unit(&mut rng);
        // guard the numeric inverse at survival levels below 1e-15
        let level = u.powf((-linear).exp()).max(1e-15);
        let x = config.failure_baseline.quantile(level)?;
        match &config.censoring_law {
            None => {
                times.push(x);
                status.push(true);
            }
            Some(law) => {
                let c = law.sample(&mut rng);
                times.push(x.min(c));
                status.push(x <= c);
            }
        }
    }
    SurvivalSample::new(times, status, covariates, p)
}

/// Mean squared log-ratio of survival estimates against the truth, with
/// zero estimates excluded and counted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelMse {
    pub value: f64,
    pub n_used: usize,
    pub n_excluded: usize,
}

pub fn rel_mse(estimates: &[f64], truth: f64) -> Result<RelMse> {
    if !(truth > 0.0 && truth < 1.0) {
        return Err(Error::domain(format!("truth must lie in (0,1), got {truth}")));
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut excluded = 0usize;
    for &s in estimates {
        if s == 0.0 {
            excluded += 1;
            continue;
        }
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::domain(format!("estimates must lie in (0,1], got {s}")));
        }
        sum += (s / truth).ln().powi(2);
        used += 1;
    }
    if used == 0 {
        return Err(Error::domain("no usable estimates"));
    }
    Ok(RelMse { value: sum / used as f64, n_used: used, n_excluded: excluded })
}

/// Arithmetic mean of pointwise errors over the evaluation grid.
pub fn avg_rel_mse(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::domain("average over an empty grid is undefined"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Geometric grid of `count` points from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && count >= 2, "need 0 < lo < hi and count >= 2");
    let ratio = (hi / lo).powf(1.0 / (count - 1) as f64);
    let mut grid: Vec<f64> = (0..count).map(|j| lo * ratio.powi(j as i32)).collect();
    grid[count - 1] = hi;
    grid
}

/// Fraction of censored observations strictly above `tau`, the empirical
/// counterpart of the conditioned mean censoring rate.
pub fn censoring_rate_above(sample: &SurvivalSample, tau: f64) -> Result<f64> {
    let mut total = 0usize;
    let mut censored = 0usize;
    for i in 0..sample.n() {
        if sample.time(i) > tau {
            total += 1;
            censored += usize::from(!sample.is_event(i));
        }
    }
    if total == 0 {
        return Err(Error::domain(format!("no observations above {tau}")));
    }
    Ok(censored as f64 / total as f64)
}

/// Pointwise error of one estimator at one evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointError {
    pub x: f64,
    pub rel_mse: f64,
    pub n_used: usize,
    pub n_excluded: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub name: String,
    /// Replications where this estimator failed (errors recorded, never
    /// silently dropped).
    pub failed_replications: usize,
    pub points: Vec<PointError>,
    pub arelmse: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MCReport {
    pub n: usize,
    pub n_mc: usize,
    pub seed: u64,
    pub critical_value: f64,
    pub mean_censoring_rate: f64,
    pub estimators: Vec<EstimatorReport>,
}

impl MCReport {
    pub fn estimator(&self, name: &str) -> Option<&EstimatorReport> {
        self.estimators.iter().find(|e| e.name == name)
    }

    /// Flat CSV `estimator,x,rel_mse` for external plotting.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["estimator", "x", "rel_mse"])
            .map_err(|e| Error::domain(format!("csv write failed: {e}")))?;
        for est in &self.estimators {
            for p in &est.points {
                wtr.write_record([est.name.as_str(), &format!("{}", p.x), &format!("{}", p.rel_mse)])
                    .map_err(|e| Error::domain(format!("csv write failed: {e}")))?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

struct RepOutcome {
    censoring_rate: f64,
    // one entry per estimator: survival estimates at eval points, or the
    // failure that produced none
    estimates: Vec<std::result::Result<Vec<f64>, String>>,
}

/// Run the full error study: per replication simulate a sample, build the
/// Nelson-Aalen, adaptive-threshold, simple-aggregate and adaptive-aggregate
/// baselines (plus any configured fixed thresholds), evaluate them at the
/// evaluation points against the true baseline, and reduce to pointwise
/// RelMSE and its grid average. Deterministic for a given config and seed,
/// regardless of thread count.
pub fn run_monte_carlo(config: &SimConfig) -> Result<MCReport> {
    config.validate()?;
    let params = config.selection.resolve(config.n, config.seed)?;

    let mut names = vec![
        "nelson_aalen".to_string(),
        "adaptive".to_string(),
        "aggregate_simple".to_string(),
        "aggregate_adaptive".to_string(),
    ];
    for tau in &config.fixed_taus {
        names.push(format!("fixed:{tau}"));
    }

    let outcomes: Vec<RepOutcome> = (0..config.n_mc)
        .into_par_iter()
        .map(|rep| replication_outcome(config, &params, rep))
        .collect::<Result<Vec<_>>>()?;

    let truth: Vec<f64> = config
        .eval_points
        .iter()
        .map(|&x| config.failure_baseline.survival(x))
        .collect();
    for (&x, &t) in config.eval_points.iter().zip(&truth) {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::domain(format!(
                "true baseline survival at eval point {x} is {t}, outside (0,1)"
            )));
        }
    }

    let mut estimators = Vec::with_capacity(names.len());
    for (idx, name) in names.iter().enumerate() {
        let mut failed = 0usize;
        let mut per_point: Vec<Vec<f64>> = vec![Vec::new(); config.eval_points.len()];
        for outcome in &outcomes {
            match &outcome.estimates[idx] {
                Ok(values) => {
                    for (j, &v) in values.iter().enumerate() {
                        per_point[j].push(v);
                    }
                }
                Err(_) => failed += 1,
            }
        }
        let mut points = Vec::with_capacity(config.eval_points.len());
        for (j, &x) in config.eval_points.iter().enumerate() {
            let err = rel_mse(&per_point[j], truth[j])?;
            points.push(PointError {
                x,
                rel_mse: err.value,
                n_used: err.n_used,
                n_excluded: err.n_excluded,
            });
        }
        let arelmse = avg_rel_mse(&points.iter().map(|p| p.rel_mse).collect::<Vec<_>>())?;
        estimators.push(EstimatorReport { name: name.clone(), failed_replications: failed, points, arelmse });
    }

    let mean_censoring_rate =
        outcomes.iter().map(|o| o.censoring_rate).sum::<f64>() / outcomes.len() as f64;

    Ok(MCReport {
        n: config.n,
        n_mc: config.n_mc,
        seed: config.seed,
        critical_value: params.critical_value,
        mean_censoring_rate,
        estimators,
    })
}

fn replication_outcome(
    config: &SimConfig,
    params: &SelectionParams,
    rep: usize,
) -> Result<RepOutcome> {
    let sample = simulate_cox_sample(config, rep)?;
    let censoring_rate = sample.diagnostics()?.censoring_rate;
    let n_estimators = 4 + config.fixed_taus.len();

    let beta = if config.estimate_beta && !config.beta.is_empty() {
        match fit_beta(&sample, &vec![0.0; config.beta.len()], DEFAULT_TOL, DEFAULT_MAX_ITER) {
            Ok(fit) => fit.beta,
            Err(e) => {
                return Ok(RepOutcome {
                    censoring_rate,
                    estimates: vec![Err(format!("beta estimation failed: {e}")); n_estimators],
                });
            }
        }
    } else {
        config.beta.clone()
    };

    let mut estimates = Vec::with_capacity(n_estimators);

    let cox = breslow_baseline(&sample, &beta)?;
    let eval = |f: &dyn Fn(f64) -> f64| config.eval_points.iter().map(|&x| f(x)).collect::<Vec<f64>>();

    estimates.push(Ok(eval(&|x| cox.baseline_survival(x))));

    let selection = select_threshold(&sample, &beta, params);
    match &selection {
        Ok(sel) => {
            match SemiParamModel::from_parts(cox.clone(), sel.tau_hat, sel.theta_hat, sel.n_tau, sel.numerator) {
                Ok(model) => estimates.push(Ok(eval(&|x| model.baseline_survival(x)))),
                Err(e) => estimates.push(Err(e.to_string())),
            }
        }
        Err(e) => estimates.push(Err(e.to_string())),
    }

    match config
        .m0
        .resolve(&sample)
        .and_then(|m0| aggregate_simple(&sample, &beta, m0, config.m))
    {
        Ok(agg) => estimates.push(Ok(eval(&|x| agg.baseline_survival(x)))),
        Err(e) => estimates.push(Err(e.to_string())),
    }

    match &selection {
        Ok(sel) => match aggregate_adaptive(&sample, &beta, sel, config.m) {
            Ok(agg) => estimates.push(Ok(eval(&|x| agg.baseline_survival(x)))),
            Err(e) => estimates.push(Err(e.to_string())),
        },
        Err(e) => estimates.push(Err(e.to_string())),
    }

    for &tau in &config.fixed_taus {
        match crate::tail::hill_theta(&sample, &beta, tau)
            .and_then(|tail| SemiParamModel::new(cox.clone(), tail))
        {
            Ok(model) => estimates.push(Ok(eval(&|x| model.baseline_survival(x)))),
            Err(e) => estimates.push(Err(e.to_string())),
        }
    }

    Ok(RepOutcome { censoring_rate, estimates })
}
