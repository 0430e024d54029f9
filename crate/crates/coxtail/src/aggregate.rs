//! Aggregation of semi-parametric fits across several thresholds.
//!
//! The junction between the step baseline and the Pareto tail can be rough
//! on small samples. Averaging the cumulative hazards of fits at `M`
//! different thresholds smooths it: with weights `w_k` summing to one, the
//! aggregated survival is `exp(-sum_k w_k H_{z,tau_k,theta_k}(x))`. Simple
//! aggregation uses consecutive order statistics with uniform weights;
//! adaptive aggregation takes the top-`M` candidates of the penalized
//! likelihood profile, weighted by their profile values.

use serde::{Deserialize, Serialize};

use crate::cox::{breslow_baseline, CoxFit};
use crate::data::SurvivalSample;
use crate::error::{Error, Result};
use crate::select::ThresholdSelection;

/// One aggregated component: a threshold, its tail index and its weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateComponent {
    pub tau: f64,
    pub theta: f64,
    pub weight: f64,
}

/// Weighted aggregate of semi-parametric baselines sharing one Cox fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateModel {
    pub components: Vec<AggregateComponent>,
    pub cox: CoxFit,
}

impl AggregateModel {
    pub fn new(components: Vec<AggregateComponent>, cox: CoxFit) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::domain("aggregate model needs at least one component"));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("component weights must sum to 1 (got {total})")));
        }
        if components.iter().any(|c| c.weight < 0.0 || !(c.theta > 0.0) || !(c.tau > 0.0)) {
            return Err(Error::domain("components need non-negative weights and positive tau, theta"));
        }
        Ok(Self { components, cox })
    }

    fn component_baseline_hazard(&self, c: &AggregateComponent, x: f64) -> f64 {
        if x <= c.tau {
            self.cox.baseline_cum_hazard(x)
        } else {
            self.cox.baseline_cum_hazard(c.tau) + (x / c.tau).ln() / c.theta
        }
    }

    /// Weighted baseline cumulative hazard `sum_k w_k H_{0,tau_k,theta_k}(x)`.
    pub fn baseline_cum_hazard(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * self.component_baseline_hazard(c, x))
            .sum()
    }

    pub fn cum_hazard(&self, z: &[f64], x: f64) -> f64 {
        self.cox.risk_score(z) * self.baseline_cum_hazard(x)
    }

    pub fn baseline_survival(&self, x: f64) -> f64 {
        (-self.baseline_cum_hazard(x)).exp()
    }

    /// Aggregated survival `exp(-sum_k w_k H_{z,tau_k,theta_k}(x))`.
    pub fn survival(&self, z: &[f64], x: f64) -> f64 {
        (-self.cum_hazard(z, x)).exp()
    }

    /// Smallest `x` with `survival(z, x) <= p`, by bisection over the mixed
    /// step/Pareto curve (closed form once every component is in its tail).
    pub fn quantile(&self, z: &[f64], p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("quantile level must lie in (0,1), got {p}")));
        }
        let w = self.cox.risk_score(z);
        let target = -p.ln() / w; // need baseline_cum_hazard(x) >= target

        let deepest = self
            .components
            .iter()
            .map(|c| c.tau)
            .fold(self.cox.cum_hazard.knots().last().copied().unwrap_or(1.0), f64::max);
        if self.baseline_cum_hazard(deepest) >= target {
            // Bisection on (0, deepest]: H is non-decreasing and
            // right-continuous, so the loop converges onto the crossing.
            let mut lo = 0.0;
            let mut hi = deepest;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if self.baseline_cum_hazard(mid) >= target {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(hi);
        }
        // Pure-tail region: H(x) = A + B ln x with
        // A = sum w_k (H0(tau_k) - ln(tau_k)/theta_k), B = sum w_k/theta_k.
        let mut a = 0.0;
        let mut b = 0.0;
        for c in &self.components {
            a += c.weight * (self.cox.baseline_cum_hazard(c.tau) - c.tau.ln() / c.theta);
            b += c.weight / c.theta;
        }
        Ok(((target - a) / b).exp())
    }
}

/// Smallest admissible starting index for simple aggregation: the first
/// order-statistic subscript with at least one event strictly above it.
pub fn min_admissible_m0(sample: &SurvivalSample) -> Result<usize> {
    let sweep = crate::select::TailSweep::new(sample, &vec![0.0; sample.n_covariates()])?;
    (1..=sample.n())
        .find(|&r| sweep.events_above(r) >= 1)
        .ok_or_else(|| Error::selection("no observation has an event strictly above it"))
}

/// Simple aggregation: thresholds at the consecutive order statistics
/// `t_(m0), ..., t_(m0+m-1)` with uniform weights `1/m`.
pub fn aggregate_simple(
    sample: &SurvivalSample,
    beta: &[f64],
    m0: usize,
    m: usize,
) -> Result<AggregateModel> {
    if m < 1 {
        return Err(Error::domain("aggregation needs m >= 1 thresholds"));
    }
    let min_m0 = min_admissible_m0(sample)?;
    if m0 < min_m0 {
        return Err(Error::domain(format!(
            "m0 = {m0} is below the smallest admissible index {min_m0} \
             (needs at least one event strictly above the threshold)"
        )));
    }
    if m0 + m - 1 > sample.n() {
        return Err(Error::domain(format!(
            "m0 + m - 1 = {} exceeds the sample size {}",
            m0 + m - 1,
            sample.n()
        )));
    }

    let sweep = crate::select::TailSweep::new(sample, beta)?;
    let weight = 1.0 / m as f64;
    let mut components = Vec::with_capacity(m);
    for rank in m0..m0 + m {
        let (theta, _, _) = sweep.theta_at(rank).ok_or_else(|| {
            Error::selection(format!("no events above threshold t_({rank}) = {}", sample.time_at_rank(rank)))
        })?;
        components.push(AggregateComponent { tau: sample.time_at_rank(rank), theta, weight });
    }
    AggregateModel::new(components, breslow_baseline(sample, beta)?)
}

/// Adaptive aggregation: the `m` profile entries with the largest penalized
/// likelihood (ties toward larger thresholds), weighted by their values.
pub fn aggregate_adaptive(
    sample: &SurvivalSample,
    beta: &[f64],
    selection: &ThresholdSelection,
    m: usize,
) -> Result<AggregateModel> {
    if m < 1 {
        return Err(Error::domain("aggregation needs m >= 1 thresholds"));
    }
    if selection.profile.len() < m {
        return Err(Error::selection(format!(
            "profile has {} candidates, fewer than m = {m}",
            selection.profile.len()
        )));
    }
    let mut ranked: Vec<&crate::select::ProfilePoint> = selection.profile.iter().collect();
    ranked.sort_by(|a, b| {
        b.value
            .partial_cmp(&a.value)
            .expect("profile values are finite")
            .then(a.l.cmp(&b.l))
    });
    let chosen = &ranked[..m];
    let total: f64 = chosen.iter().map(|p| p.value).sum();
    if total <= 0.0 {
        return Err(Error::selection(
            "no informative candidates: the penalized likelihood profile is identically zero",
        ));
    }

    let sweep = crate::select::TailSweep::new(sample, beta)?;
    let mut components = Vec::with_capacity(m);
    for point in chosen {
        let (theta, _, _) = sweep
            .theta_at(point.l)
            .expect("profile entries have events above them");
        components.push(AggregateComponent {
            tau: point.threshold,
            theta,
            weight: point.value / total,
        });
    }
    AggregateModel::new(components, breslow_baseline(sample, beta)?)
}
