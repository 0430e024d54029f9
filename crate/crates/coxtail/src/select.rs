//! Data-driven threshold selection.
//!
//! The tail is scanned over a grid of order statistics. At each grid rank
//! `k` the single-Pareto null above `t_(k)` is tested against a two-piece
//! alternative that breaks at some higher order statistic `t_(l)`, using the
//! likelihood-ratio statistic
//!
//! `LR(t_k, t_l) = n_{k,l} K(lambda_{k,l}, theta_k) + n_l K(theta_l, theta_k)`
//!
//! with `K` the Kullback-Leibler divergence between Pareto laws. The walk
//! stops at the first rank `k_hat` whose worst-case statistic exceeds the
//! critical value `D` (the breaking point `s_hat = t_(k_hat)`); the adaptive
//! threshold `tau_hat = t_(l_hat)` then maximizes the penalized
//! quasi-log-likelihood `L_pen(s_hat, t_l) = n_l K(theta_l, theta_{k_hat})`
//! over the trimmed window `ceil(zeta' k_hat) <= l <= floor((1-zeta'') k_hat)`.
//!
//! `D` is calibrated by Monte Carlo under a standard Pareto null: one sweep
//! maximum per replication, and an empirical quantile (nearest rank) of the
//! maxima. The law of the statistic does not depend on the Pareto index, so
//! calibration fixes `theta = 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cox::dot;
use crate::data::SurvivalSample;
use crate::error::{Error, Result};
use crate::tail::kl_unchecked;

pub const DEFAULT_N_GRID: usize = 100;
pub const DEFAULT_ZETA_PRIME: f64 = 0.25;
pub const DEFAULT_ZETA_SECOND: f64 = 0.05;
pub const DEFAULT_CALIBRATION_QUANTILE: f64 = 0.99;
pub const DEFAULT_CALIBRATION_REPS: usize = 2000;

/// RNG stream namespace for calibration replications, keeping them disjoint
/// from data-simulation streams derived from the same seed.
pub(crate) const CALIBRATION_STREAM_BASE: u64 = 1 << 32;

/// Tuning of the sequential test and selection window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    /// Grid size over the order-statistic subscripts.
    pub n_grid: usize,
    /// Lower trim fraction of the selection window (`zeta'`).
    pub zeta_prime: f64,
    /// Upper trim fraction of the selection window (`zeta''`).
    pub zeta_second: f64,
    /// Critical value `D` of the sequential likelihood-ratio test.
    pub critical_value: f64,
}

impl SelectionParams {
    pub fn new(n_grid: usize, zeta_prime: f64, zeta_second: f64, critical_value: f64) -> Result<Self> {
        if n_grid < 1 {
            return Err(Error::domain("n_grid must be at least 1"));
        }
        if !(zeta_prime > 0.0 && zeta_prime < 0.5) || !(zeta_second > 0.0 && zeta_second < 0.5) {
            return Err(Error::domain(format!(
                "window fractions must satisfy 0 < zeta', zeta'' < 0.5 (got {zeta_prime}, {zeta_second})"
            )));
        }
        if !(critical_value > 0.0) {
            return Err(Error::domain(format!(
                "critical value must be strictly positive (got {critical_value})"
            )));
        }
        Ok(Self { n_grid, zeta_prime, zeta_second, critical_value })
    }

    /// Standard tuning (`n_grid` 100, `zeta'` 0.25, `zeta''` 0.05) with the
    /// given critical value.
    pub fn with_critical_value(critical_value: f64) -> Result<Self> {
        Self::new(DEFAULT_N_GRID, DEFAULT_ZETA_PRIME, DEFAULT_ZETA_SECOND, critical_value)
    }
}

/// One candidate threshold in the selection window with its penalized
/// quasi-log-likelihood value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    /// Order-statistic subscript (1-based, descending time order).
    pub l: usize,
    /// The candidate threshold `t_(l)`.
    pub threshold: f64,
    /// `L_pen(s_hat, t_(l))`.
    pub value: f64,
}

/// Full report of a threshold selection run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdSelection {
    /// Grid of order-statistic subscripts (1-based, ascending).
    pub grid: Vec<usize>,
    /// Breaking-point subscript `k_hat`.
    pub k_hat: usize,
    /// Breaking point `s_hat = t_(k_hat)`.
    pub s_hat: f64,
    /// Whether the critical value was ever exceeded; when false, the walk
    /// exhausted the grid and `k_hat` is the deepest grid point.
    pub exceeded: bool,
    /// Penalized-likelihood profile over the selection window.
    pub profile: Vec<ProfilePoint>,
    /// Selected subscript `l_hat`.
    pub l_hat: usize,
    /// Adaptive threshold `tau_hat = t_(l_hat)`.
    pub tau_hat: f64,
    /// Tail index `theta_hat` at `tau_hat`.
    pub theta_hat: f64,
    /// Events strictly above `tau_hat`.
    pub n_tau: usize,
    /// Hill numerator at `tau_hat`.
    pub numerator: f64,
    /// Critical value used by the walk.
    pub critical_value: f64,
}

/// Prefix statistics over the descending-time order, giving O(1) tail and
/// segment estimates at any pair of order statistics. Ranks are 1-based.
pub(crate) struct TailSweep {
    times: Vec<f64>,        // t_(1) >= ... >= t_(n)
    exceed_len: Vec<usize>, // per rank r: #{ i : t_(i) > t_(r) }
    cum_events: Vec<usize>, // len n+1; events among ranks 1..=r
    cum_w: Vec<f64>,        // len n+1; sum of exp(beta.z)
    cum_wlt: Vec<f64>,      // len n+1; sum of exp(beta.z) * ln t
}

impl TailSweep {
    pub(crate) fn new(sample: &SurvivalSample, beta: &[f64]) -> Result<Self> {
        if beta.len() != sample.n_covariates() {
            return Err(Error::domain(format!(
                "beta has length {}, expected {} covariates",
                beta.len(),
                sample.n_covariates()
            )));
        }
        let n = sample.n();
        let mut times = Vec::with_capacity(n);
        let mut cum_events = Vec::with_capacity(n + 1);
        let mut cum_w = Vec::with_capacity(n + 1);
        let mut cum_wlt = Vec::with_capacity(n + 1);
        cum_events.push(0);
        cum_w.push(0.0);
        cum_wlt.push(0.0);
        for r in 1..=n {
            let row = sample.row_at_rank(r);
            let t = sample.time(row);
            let w = dot(beta, sample.covariates_of(row)).exp();
            times.push(t);
            cum_events.push(cum_events[r - 1] + usize::from(sample.is_event(row)));
            cum_w.push(cum_w[r - 1] + w);
            cum_wlt.push(cum_wlt[r - 1] + w * t.ln());
        }
        let mut exceed_len = vec![0usize; n];
        for r in 1..n {
            exceed_len[r] = if times[r] == times[r - 1] { exceed_len[r - 1] } else { r };
        }
        Ok(Self { times, exceed_len, cum_events, cum_w, cum_wlt })
    }

    pub(crate) fn n(&self) -> usize {
        self.times.len()
    }

    pub(crate) fn time(&self, r: usize) -> f64 {
        self.times[r - 1]
    }

    /// Events strictly above `t_(r)`.
    pub(crate) fn events_above(&self, r: usize) -> usize {
        self.cum_events[self.exceed_len[r - 1]]
    }

    /// Hill numerator and event count above `t_(r)`.
    fn tail_parts(&self, r: usize) -> (f64, usize) {
        let e = self.exceed_len[r - 1];
        let numerator = self.cum_wlt[e] - self.cum_w[e] * self.times[r - 1].ln();
        (numerator, self.cum_events[e])
    }

    /// `(theta, n_tau, numerator)` at threshold `t_(r)`, or `None` when no
    /// event lies strictly above.
    pub(crate) fn theta_at(&self, r: usize) -> Option<(f64, usize, f64)> {
        let (numerator, n_tau) = self.tail_parts(r);
        (n_tau > 0).then(|| (numerator / n_tau as f64, n_tau, numerator))
    }

    /// Likelihood-ratio statistic for the null "single Pareto above
    /// `t_(k)`" against a break at `t_(l)`.
    pub(crate) fn lr(&self, k: usize, l: usize) -> Option<f64> {
        let (num_k, ne_k) = self.tail_parts(k);
        let (num_l, ne_l) = self.tail_parts(l);
        if ne_l == 0 || ne_k == 0 {
            return None;
        }
        let n_mid = ne_k - ne_l;
        if n_mid == 0 {
            return None;
        }
        let theta_k = num_k / ne_k as f64;
        let theta_l = num_l / ne_l as f64;
        let lambda = (num_k - num_l) / n_mid as f64;
        if lambda <= 0.0 || theta_l <= 0.0 || theta_k <= 0.0 {
            return None;
        }
        Some(n_mid as f64 * kl_unchecked(lambda, theta_k) + ne_l as f64 * kl_unchecked(theta_l, theta_k))
    }

    /// Penalized quasi-log-likelihood `n_l K(theta_l, theta_{k_hat})`.
    pub(crate) fn pen(&self, k_hat: usize, l: usize) -> Option<f64> {
        let (num_k, ne_k) = self.tail_parts(k_hat);
        let (num_l, ne_l) = self.tail_parts(l);
        if ne_l == 0 || ne_k == 0 {
            return None;
        }
        let theta_k = num_k / ne_k as f64;
        let theta_l = num_l / ne_l as f64;
        Some(ne_l as f64 * kl_unchecked(theta_l, theta_k))
    }
}

/// Integer selection window `ceil(zeta' k) <= l <= floor((1 - zeta'') k)`,
/// clamped to `1..k`. Empty ranges are possible for tiny `k`.
fn window(k: usize, zeta_prime: f64, zeta_second: f64) -> std::ops::RangeInclusive<usize> {
    let lo = ((zeta_prime * k as f64) - 1e-9).ceil().max(1.0) as usize;
    let hi_f = ((1.0 - zeta_second) * k as f64 + 1e-9).floor();
    let hi = (hi_f.max(0.0) as usize).min(k.saturating_sub(1));
    lo..=hi
}

/// Uniform integer grid of order-statistic subscripts from `k_min` to `n`,
/// where `k_min` is the smallest rank with at least two events strictly
/// above it (so every tested pair has both estimators defined).
pub fn build_grid(sample: &SurvivalSample, n_grid: usize) -> Result<Vec<usize>> {
    let sweep = TailSweep::new(sample, &vec![0.0; sample.n_covariates()])?;
    grid_from_sweep(&sweep, n_grid)
}

fn grid_from_sweep(sweep: &TailSweep, n_grid: usize) -> Result<Vec<usize>> {
    let n = sweep.n();
    let k_min = (1..=n)
        .find(|&r| sweep.events_above(r) >= 2)
        .ok_or_else(|| Error::selection("fewer than 2 events above any observation"))?;
    let span = n - k_min;
    let count = n_grid.min(span + 1).max(1);
    if count == 1 {
        return Ok(vec![n]);
    }
    let mut grid: Vec<usize> = (0..count)
        .map(|j| k_min + ((j as f64) * span as f64 / (count - 1) as f64).round() as usize)
        .collect();
    grid.dedup();
    Ok(grid)
}

/// Middle-segment index estimate between thresholds `s < tau`, with events
/// counted on the half-open interval `(s, tau]`.
pub fn lambda_hat(sample: &SurvivalSample, beta: &[f64], s: f64, tau: f64) -> Result<f64> {
    if !(s < tau) {
        return Err(Error::domain(format!("need s < tau (got s={s}, tau={tau})")));
    }
    let mut num = 0.0;
    let mut n_mid = 0usize;
    for i in 0..sample.n() {
        let t = sample.time(i);
        if t > s {
            let w = dot(beta, sample.covariates_of(i)).exp();
            if t <= tau {
                num += w * (t / s).ln();
                if sample.is_event(i) {
                    n_mid += 1;
                }
            } else {
                num += w * (tau / s).ln();
            }
        }
    }
    if n_mid == 0 {
        return Err(Error::selection(format!("no events in ({s}, {tau}]")));
    }
    Ok(num / n_mid as f64)
}

/// Likelihood-ratio statistic at grid subscripts `l < k` (1-based ranks in
/// descending time order, so `t_(l) > t_(k)`).
pub fn lr_statistic(sample: &SurvivalSample, beta: &[f64], k: usize, l: usize) -> Result<f64> {
    check_ranks(sample, k, l)?;
    let sweep = TailSweep::new(sample, beta)?;
    sweep
        .lr(k, l)
        .ok_or_else(|| Error::selection(format!("LR undefined at (k={k}, l={l}): empty segment or no events")))
}

/// Penalized quasi-log-likelihood `n_l K(theta_l, theta_{k_hat})`.
pub fn penalized_likelihood(sample: &SurvivalSample, beta: &[f64], k_hat: usize, l: usize) -> Result<f64> {
    check_ranks(sample, k_hat, l)?;
    let sweep = TailSweep::new(sample, beta)?;
    sweep
        .pen(k_hat, l)
        .ok_or_else(|| Error::selection(format!("penalized likelihood undefined at (k={k_hat}, l={l})")))
}

fn check_ranks(sample: &SurvivalSample, k: usize, l: usize) -> Result<()> {
    if !(1 <= l && l < k && k <= sample.n()) {
        return Err(Error::domain(format!(
            "ranks must satisfy 1 <= l < k <= n (got l={l}, k={k}, n={})",
            sample.n()
        )));
    }
    Ok(())
}

fn breaking_point_from_sweep(
    sweep: &TailSweep,
    grid: &[usize],
    params: &SelectionParams,
) -> (usize, bool) {
    for &k in grid {
        let mut best = f64::NEG_INFINITY;
        for l in window(k, params.zeta_prime, params.zeta_second) {
            if let Some(stat) = sweep.lr(k, l) {
                best = best.max(stat);
            }
        }
        if best > params.critical_value {
            return (k, true);
        }
    }
    (*grid.last().expect("grid is non-empty"), false)
}

/// Walk the grid and return the breaking-point subscript `k_hat` together
/// with whether the critical value was exceeded. When it never is, the
/// deepest grid point is returned with `exceeded = false`.
pub fn find_breaking_point(
    sample: &SurvivalSample,
    beta: &[f64],
    params: &SelectionParams,
) -> Result<(usize, bool)> {
    let sweep = TailSweep::new(sample, beta)?;
    let grid = grid_from_sweep(&sweep, params.n_grid)?;
    Ok(breaking_point_from_sweep(&sweep, &grid, params))
}

/// Run the full adaptive selection: sequential testing for the breaking
/// point, then penalized-likelihood maximization over the trimmed window.
/// Profile ties break toward the larger threshold (smaller `l`).
pub fn select_threshold(
    sample: &SurvivalSample,
    beta: &[f64],
    params: &SelectionParams,
) -> Result<ThresholdSelection> {
    let sweep = TailSweep::new(sample, beta)?;
    let grid = grid_from_sweep(&sweep, params.n_grid)?;
    let (k_hat, exceeded) = breaking_point_from_sweep(&sweep, &grid, params);

    let mut profile = Vec::new();
    for l in window(k_hat, params.zeta_prime, params.zeta_second) {
        if let Some(value) = sweep.pen(k_hat, l) {
            profile.push(ProfilePoint { l, threshold: sweep.time(l), value });
        }
    }
    if profile.is_empty() {
        return Err(Error::selection(format!("selection window at k_hat={k_hat} is empty")));
    }

    let best = profile
        .iter()
        .fold(&profile[0], |acc, p| if p.value > acc.value { p } else { acc });
    let l_hat = best.l;
    let tau_hat = best.threshold;
    let (theta_hat, n_tau, numerator) = sweep
        .theta_at(l_hat)
        .expect("profile entries have events above them");

    Ok(ThresholdSelection {
        grid,
        k_hat,
        s_hat: sweep.time(k_hat),
        exceeded,
        profile,
        l_hat,
        tau_hat,
        theta_hat,
        n_tau,
        numerator,
        critical_value: params.critical_value,
    })
}

/// Maximum LR statistic over the whole sweep (all grid subscripts, all valid
/// window candidates) of one sample, the quantity whose null distribution
/// calibrates `D`.
fn sweep_maximum(sweep: &TailSweep, n_grid: usize, zeta_prime: f64, zeta_second: f64) -> Result<f64> {
    let grid = grid_from_sweep(sweep, n_grid)?;
    let mut max = f64::NEG_INFINITY;
    for &k in &grid {
        for l in window(k, zeta_prime, zeta_second) {
            if let Some(stat) = sweep.lr(k, l) {
                max = max.max(stat);
            }
        }
    }
    if max.is_finite() {
        Ok(max)
    } else {
        Err(Error::selection("no testable pair in the whole sweep"))
    }
}

fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

/// Monte-Carlo calibration of the critical value under Pareto nulls.
///
/// Simulates `n_mc` samples of size `n` with failure times
/// `Pareto(failure_theta)` and optional independent `Pareto(censoring_theta)`
/// censoring, records the sweep maximum of each replication, and returns the
/// nearest-rank empirical `quantile` of the maxima. Replication `r` draws
/// from ChaCha8 stream `CALIBRATION_STREAM_BASE + r` of `seed`, so results
/// are bit-identical for a given seed regardless of thread count.
pub fn calibrate_d_pareto(
    n: usize,
    params: &SelectionParams,
    quantile: f64,
    n_mc: usize,
    seed: u64,
    failure_theta: f64,
    censoring_theta: Option<f64>,
) -> Result<f64> {
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(Error::domain(format!("calibration quantile must lie in (0,1), got {quantile}")));
    }
    if n_mc < 100 {
        return Err(Error::domain(format!("calibration needs n_mc >= 100, got {n_mc}")));
    }
    if !(failure_theta > 0.0) || censoring_theta.is_some_and(|t| !(t > 0.0)) {
        return Err(Error::domain("Pareto indices must be strictly positive"));
    }

    let mut maxima = (0..n_mc)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(CALIBRATION_STREAM_BASE + rep as u64);
            let mut times = Vec::with_capacity(n);
            let mut status = Vec::with_capacity(n);
            for _ in 0..n {
                let x = open_unit(&mut rng).powf(-failure_theta);
                match censoring_theta {
                    None => {
                        times.push(x);
                        status.push(true);
                    }
                    Some(theta_c) => {
                        let c = open_unit(&mut rng).powf(-theta_c);
                        times.push(x.min(c));
                        status.push(x <= c);
                    }
                }
            }
            let sample = SurvivalSample::new(times, status, Vec::new(), 0)?;
            let sweep = TailSweep::new(&sample, &[])?;
            sweep_maximum(&sweep, params.n_grid, params.zeta_prime, params.zeta_second)
        })
        .collect::<Result<Vec<f64>>>()?;

    maxima.sort_by(|a, b| a.partial_cmp(b).expect("LR statistics are finite"));
    let rank = ((quantile * n_mc as f64).ceil() as usize).clamp(1, n_mc);
    Ok(maxima[rank - 1])
}

/// Calibrate `D` under the uncensored standard Pareto null (`theta = 1`).
/// `params.critical_value` is not read.
pub fn calibrate_d(
    n: usize,
    params: &SelectionParams,
    quantile: f64,
    n_mc: usize,
    seed: u64,
) -> Result<f64> {
    calibrate_d_pareto(n, params, quantile, n_mc, seed, 1.0, None)
}
