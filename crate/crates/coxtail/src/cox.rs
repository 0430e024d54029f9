//! Cox partial-likelihood regression and the Breslow/Nelson-Aalen baseline.

use serde::{Deserialize, Serialize};

use crate::data::SurvivalSample;
use crate::error::{Error, Result};
use crate::step::StepFunction;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 50;
const MAX_HALVINGS: usize = 20;

/// A fitted Cox model: regression coefficients plus the Breslow baseline
/// hazard increments `h0(t_i) = delta_i / sum_{t_j >= t_i} exp(beta . z_j)`
/// assembled into the cumulative hazard `H0` and survival `S0 = exp(-H0)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoxFit {
    pub beta: Vec<f64>,
    /// Baseline hazard increment attached to each distinct observed time
    /// (0 where only censorings occur, so every estimator shares one knot set).
    pub increments: StepFunction,
    /// Baseline cumulative hazard, right-continuous, 0 below the first knot.
    pub cum_hazard: StepFunction,
    pub log_partial_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl CoxFit {
    /// `exp(beta . z)` for a covariate vector.
    pub fn risk_score(&self, z: &[f64]) -> f64 {
        dot(&self.beta, z).exp()
    }

    /// Baseline cumulative hazard at `x`.
    pub fn baseline_cum_hazard(&self, x: f64) -> f64 {
        self.cum_hazard.eval(x)
    }

    /// Baseline survival `S0(x) = exp(-H0(x))`.
    pub fn baseline_survival(&self, x: f64) -> f64 {
        (-self.cum_hazard.eval(x)).exp()
    }

    /// Conditional survival `S(x|z) = S0(x)^{exp(beta . z)}`.
    pub fn survival_at(&self, z: &[f64], x: f64) -> f64 {
        self.baseline_survival(x).powf(self.risk_score(z))
    }

    /// Conditional cumulative hazard `exp(beta . z) * H0(x)`.
    pub fn cum_hazard_at(&self, z: &[f64], x: f64) -> f64 {
        self.risk_score(z) * self.cum_hazard.eval(x)
    }

    /// Smallest observed knot where `S(x|z) <= p`, if the step curve ever
    /// gets there.
    pub fn quantile_at(&self, z: &[f64], p: f64) -> Result<Option<f64>> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("quantile level must lie in (0,1), got {p}")));
        }
        // S0(x)^w <= p  <=>  H0(x) >= -ln(p) / w
        let target = -p.ln() / self.risk_score(z);
        Ok(self.cum_hazard.first_knot_reaching(target))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Log partial likelihood, gradient and observed information at `beta`,
/// using Breslow's convention for ties (the full tie block stays in the
/// risk set of each event in the block).
fn partial_likelihood_stats(
    sample: &SurvivalSample,
    beta: &[f64],
    with_derivatives: bool,
) -> (f64, Vec<f64>, Vec<f64>) {
    let p = sample.n_covariates();
    let n = sample.n();
    let order = sample.order();

    let mut loglik = 0.0;
    let mut grad = vec![0.0; p];
    let mut info = vec![0.0; p * p];

    // Risk-set accumulators over descending time.
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    let mut s2 = vec![0.0; p * p];

    let mut block_start = 0;
    while block_start < n {
        let t = sample.time(order[block_start]);
        let mut block_end = block_start;
        while block_end < n && sample.time(order[block_end]) == t {
            block_end += 1;
        }
        // Add the whole tie block to the risk set first: t_j >= t_i includes ties.
        for &row in &order[block_start..block_end] {
            let z = sample.covariates_of(row);
            let w = dot(beta, z).exp();
            s0 += w;
            if with_derivatives {
                for a in 0..p {
                    s1[a] += w * z[a];
                    for b in 0..p {
                        s2[a * p + b] += w * z[a] * z[b];
                    }
                }
            }
        }
        for &row in &order[block_start..block_end] {
            if !sample.is_event(row) {
                continue;
            }
            let z = sample.covariates_of(row);
            loglik += dot(beta, z) - s0.ln();
            if with_derivatives {
                for a in 0..p {
                    let mean_a = s1[a] / s0;
                    grad[a] += z[a] - mean_a;
                    for b in 0..p {
                        info[a * p + b] += s2[a * p + b] / s0 - mean_a * s1[b] / s0;
                    }
                }
            }
        }
        block_start = block_end;
    }

    (loglik, grad, info)
}

/// Log partial likelihood at `beta`.
pub fn log_partial_likelihood(sample: &SurvivalSample, beta: &[f64]) -> f64 {
    partial_likelihood_stats(sample, beta, false).0
}

/// Solve the symmetric positive-definite system `a x = b` by Cholesky.
/// Returns `None` when the matrix is not positive definite.
fn cholesky_solve(a: &[f64], b: &[f64], p: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut sum = a[i * p + j];
            for k in 0..j {
                sum -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i * p + i] = sum.sqrt();
            } else {
                l[i * p + j] = sum / l[j * p + j];
            }
        }
    }
    // forward then backward substitution
    let mut y = vec![0.0; p];
    for i in 0..p {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * p + k] * y[k];
        }
        y[i] = sum / l[i * p + i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut sum = y[i];
        for k in i + 1..p {
            sum -= l[k * p + i] * x[k];
        }
        x[i] = sum / l[i * p + i];
    }
    Some(x)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Maximize the log partial likelihood by Newton iteration with step-halving.
///
/// Returns a [`CoxFit`] carrying `beta` only (empty baseline); compose with
/// [`breslow_baseline`] or use [`fit`] for the full model. Columns that are
/// constant make the coefficient unidentifiable: an all-constant covariate
/// matrix yields `beta = 0` (the likelihood is flat), a mix errors out
/// through the singular information matrix.
///
/// `converged` is set when the gradient max-norm reaches `tol`, or when the
/// likelihood is flat at floating-point resolution along the Newton
/// direction (the iterate cannot be improved further in f64).
pub fn fit_beta(
    sample: &SurvivalSample,
    init: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<CoxFit> {
    let p = sample.n_covariates();
    if init.len() != p {
        return Err(Error::domain(format!(
            "init has length {}, expected {} covariates",
            init.len(),
            p
        )));
    }
    if sample.event_count() == 0 {
        return Err(Error::domain("partial likelihood needs at least one event"));
    }
    if p == 0 {
        return Err(Error::domain("no covariate columns to fit"));
    }

    let all_constant = (0..p).all(|j| {
        let first = sample.covariates_of(0)[j];
        (0..sample.n()).all(|i| sample.covariates_of(i)[j] == first)
    });
    if all_constant {
        let beta = vec![0.0; p];
        let loglik = log_partial_likelihood(sample, &beta);
        return Ok(CoxFit {
            beta,
            increments: StepFunction::constant(0.0),
            cum_hazard: StepFunction::constant(0.0),
            log_partial_likelihood: loglik,
            converged: true,
            iterations: 0,
        });
    }

    let mut beta = init.to_vec();
    let (mut loglik, mut grad, mut info) = partial_likelihood_stats(sample, &beta, true);
    let mut iterations = 0;

    loop {
        if max_abs(&grad) <= tol {
            return Ok(CoxFit {
                beta,
                increments: StepFunction::constant(0.0),
                cum_hazard: StepFunction::constant(0.0),
                log_partial_likelihood: loglik,
                converged: true,
                iterations,
            });
        }
        if iterations >= max_iter {
            return Err(Error::NonConvergence {
                iterations,
                gradient_norm: max_abs(&grad),
                last_beta: beta,
            });
        }

        let delta = cholesky_solve(&info, &grad, p).ok_or_else(|| {
            Error::numeric(
                "singular information matrix (monotone likelihood, separation or collinear covariates)",
            )
        })?;

        // Newton decrement: the quadratic-model gain of the full step. Once
        // it falls below floating-point resolution of the likelihood no step
        // can be verified to ascend, so the iterate is accepted as converged.
        let predicted_gain: f64 = 0.5 * grad.iter().zip(&delta).map(|(g, d)| g * d).sum::<f64>();
        if predicted_gain <= 16.0 * f64::EPSILON * (1.0 + loglik.abs()) {
            return Ok(CoxFit {
                beta,
                increments: StepFunction::constant(0.0),
                cum_hazard: StepFunction::constant(0.0),
                log_partial_likelihood: loglik,
                converged: true,
                iterations,
            });
        }

        let mut scale = 1.0;
        let mut halvings = 0;
        let (new_beta, new_stats) = loop {
            let candidate: Vec<f64> =
                beta.iter().zip(&delta).map(|(b, d)| b + scale * d).collect();
            let stats = partial_likelihood_stats(sample, &candidate, true);
            if stats.0 >= loglik && stats.0.is_finite() {
                break (candidate, stats);
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(Error::numeric(format!(
                    "step-halving failed to improve the partial likelihood after {MAX_HALVINGS} halvings"
                )));
            }
            scale *= 0.5;
        };

        beta = new_beta;
        loglik = new_stats.0;
        grad = new_stats.1;
        info = new_stats.2;
        iterations += 1;
    }
}

/// Breslow baseline: increments `delta_i / sum_{t_j >= t_i} exp(beta . z_j)`
/// at every observation, cumulated into `H0` over ascending distinct times.
pub fn breslow_baseline(sample: &SurvivalSample, beta: &[f64]) -> Result<CoxFit> {
    if sample.n() == 0 {
        return Err(Error::domain("cannot build a baseline from an empty sample"));
    }
    if beta.len() != sample.n_covariates() {
        return Err(Error::domain(format!(
            "beta has length {}, expected {} covariates",
            beta.len(),
            sample.n_covariates()
        )));
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::domain("beta must be finite"));
    }

    let order = sample.order();
    let n = sample.n();

    // Distinct times descending, each with its increment sum.
    let mut knots_desc: Vec<f64> = Vec::new();
    let mut increments_desc: Vec<f64> = Vec::new();
    let mut risk_sum = 0.0;
    let mut block_start = 0;
    while block_start < n {
        let t = sample.time(order[block_start]);
        let mut block_end = block_start;
        while block_end < n && sample.time(order[block_end]) == t {
            block_end += 1;
        }
        for &row in &order[block_start..block_end] {
            risk_sum += dot(beta, sample.covariates_of(row)).exp();
        }
        let mut increment = 0.0;
        for &row in &order[block_start..block_end] {
            if sample.is_event(row) {
                increment += 1.0 / risk_sum;
            }
        }
        knots_desc.push(t);
        increments_desc.push(increment);
        block_start = block_end;
    }

    let knots: Vec<f64> = knots_desc.into_iter().rev().collect();
    let increments: Vec<f64> = increments_desc.into_iter().rev().collect();
    let mut cumulative = Vec::with_capacity(increments.len());
    let mut acc = 0.0;
    for &h in &increments {
        acc += h;
        cumulative.push(acc);
    }

    Ok(CoxFit {
        beta: beta.to_vec(),
        increments: StepFunction::new(knots.clone(), increments, 0.0)?,
        cum_hazard: StepFunction::new(knots, cumulative, 0.0)?,
        log_partial_likelihood: log_partial_likelihood(sample, beta),
        converged: true,
        iterations: 0,
    })
}

/// Estimate `beta` from zero init with default settings, then attach the
/// Breslow baseline.
pub fn fit(sample: &SurvivalSample) -> Result<CoxFit> {
    let init = vec![0.0; sample.n_covariates()];
    let fitted = fit_beta(sample, &init, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let mut full = breslow_baseline(sample, &fitted.beta)?;
    full.converged = fitted.converged;
    full.iterations = fitted.iterations;
    Ok(full)
}
