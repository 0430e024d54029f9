//! Pareto-tail extension of the Cox baseline: the Hill-type tail-index
//! estimator, Kullback-Leibler divergence between Pareto laws, and the
//! composite survival/hazard/quantile functions.

use serde::{Deserialize, Serialize};

use crate::cox::{dot, CoxFit};
use crate::data::SurvivalSample;
use crate::error::{Error, Result};

/// Kullback-Leibler divergence between Pareto laws with indices
/// `theta_a` and `theta_b`: `theta_a/theta_b - 1 - ln(theta_a/theta_b)`.
pub fn kl_pareto(theta_a: f64, theta_b: f64) -> Result<f64> {
    if !(theta_a > 0.0) || !(theta_b > 0.0) {
        return Err(Error::domain(format!(
            "kl_pareto needs strictly positive indices (got {theta_a}, {theta_b})"
        )));
    }
    Ok(kl_unchecked(theta_a, theta_b))
}

#[inline]
pub(crate) fn kl_unchecked(theta_a: f64, theta_b: f64) -> f64 {
    let r = theta_a / theta_b;
    r - 1.0 - r.ln()
}

/// Tail fit at a threshold `tau`:
/// `theta = sum_{t_i > tau} exp(beta . z_i) ln(t_i / tau) / sum_{t_i > tau} delta_i`.
///
/// Censored exceedances contribute to the numerator but not to the event
/// count in the denominator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailFit {
    pub tau: f64,
    pub theta: f64,
    /// Number of events strictly above `tau`.
    pub n_tau: usize,
    /// Baseline survival at `tau` (right-continuous).
    pub s0_at_tau: f64,
    /// `sum_{t_i > tau} exp(beta . z_i) ln(t_i / tau)`.
    pub numerator: f64,
}

/// Hill-type estimator of the tail index above `tau`, together with the
/// Breslow baseline survival at `tau`.
///
/// `tau` may be any strictly positive value; index-driven procedures snap it
/// onto observed times, arbitrary user thresholds are accepted here.
pub fn hill_theta(sample: &SurvivalSample, beta: &[f64], tau: f64) -> Result<TailFit> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::domain(format!("threshold must be strictly positive, got {tau}")));
    }
    if beta.len() != sample.n_covariates() {
        return Err(Error::domain(format!(
            "beta has length {}, expected {} covariates",
            beta.len(),
            sample.n_covariates()
        )));
    }

    let mut numerator = 0.0;
    let mut n_tau = 0usize;
    for i in 0..sample.n() {
        let t = sample.time(i);
        if t > tau {
            numerator += dot(beta, sample.covariates_of(i)).exp() * (t / tau).ln();
            if sample.is_event(i) {
                n_tau += 1;
            }
        }
    }
    if n_tau == 0 {
        return Err(Error::selection(format!("no events above threshold {tau}")));
    }
    let theta = numerator / n_tau as f64;

    // Breslow baseline survival at tau. Increments are gathered per distinct
    // time in descending order, then accumulated ascending: the exact same
    // summation order as the cum-hazard prefix in `breslow_baseline`, so the
    // junction value matches the step curve bit for bit.
    let order = sample.order();
    let n = sample.n();
    let mut risk_sum = 0.0;
    let mut increments_desc: Vec<(f64, f64)> = Vec::new();
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
        increments_desc.push((t, increment));
        block_start = block_end;
    }
    let mut h0_at_tau = 0.0;
    for &(t, increment) in increments_desc.iter().rev() {
        if t > tau {
            break;
        }
        h0_at_tau += increment;
    }
    let s0_at_tau = (-h0_at_tau).exp();

    Ok(TailFit { tau, theta, n_tau, s0_at_tau, numerator })
}

/// The semi-parametric model: Breslow/Nelson-Aalen baseline up to `tau`,
/// Pareto tail `S0(tau) (x/tau)^{-1/theta}` beyond it. Continuous at the
/// junction by construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SemiParamModel {
    pub cox: CoxFit,
    pub tail: TailFit,
}

impl SemiParamModel {
    pub fn new(cox: CoxFit, tail: TailFit) -> Result<Self> {
        if let Some(&last) = cox.cum_hazard.knots().last() {
            if tail.tau > last {
                return Err(Error::domain(format!(
                    "threshold {} exceeds the largest observed time {}",
                    tail.tau, last
                )));
            }
        }
        Ok(Self { cox, tail })
    }

    /// Fit at a fixed threshold: Breslow baseline plus Hill tail.
    pub fn fit_fixed(sample: &SurvivalSample, beta: &[f64], tau: f64) -> Result<Self> {
        let cox = crate::cox::breslow_baseline(sample, beta)?;
        let tail = hill_theta(sample, beta, tau)?;
        Self::new(cox, tail)
    }

    /// Assemble from an existing baseline and tail statistics, taking the
    /// junction survival straight from the baseline curve.
    pub fn from_parts(
        cox: CoxFit,
        tau: f64,
        theta: f64,
        n_tau: usize,
        numerator: f64,
    ) -> Result<Self> {
        let s0_at_tau = cox.baseline_survival(tau);
        Self::new(cox, TailFit { tau, theta, n_tau, s0_at_tau, numerator })
    }

    /// Baseline survival `S0_{tau,theta}(x)`.
    pub fn baseline_survival(&self, x: f64) -> f64 {
        if x <= self.tail.tau {
            self.cox.baseline_survival(x)
        } else {
            self.tail.s0_at_tau * (x / self.tail.tau).powf(-1.0 / self.tail.theta)
        }
    }

    /// Baseline cumulative hazard: `H0(x)` below `tau`,
    /// `H0(tau) + ln(x/tau)/theta` above.
    pub fn baseline_cum_hazard(&self, x: f64) -> f64 {
        if x <= self.tail.tau {
            self.cox.baseline_cum_hazard(x)
        } else {
            self.cox.baseline_cum_hazard(self.tail.tau) + (x / self.tail.tau).ln() / self.tail.theta
        }
    }

    /// Conditional survival `S(x|z) = S0_{tau,theta}(x)^{exp(beta . z)}`.
    pub fn survival(&self, z: &[f64], x: f64) -> f64 {
        self.baseline_survival(x).powf(self.cox.risk_score(z))
    }

    /// Conditional cumulative hazard `exp(beta . z) H0_{tau,theta}(x)`.
    pub fn cum_hazard(&self, z: &[f64], x: f64) -> f64 {
        self.cox.risk_score(z) * self.baseline_cum_hazard(x)
    }

    /// Smallest `x` with `S(x|z) <= p`.
    ///
    /// In the Pareto region the closed form
    /// `x = tau (p^{exp(-beta . z)} / S0(tau))^{-theta}` applies; in the step
    /// region the left-most knot reaching the level is returned.
    pub fn quantile(&self, z: &[f64], p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("quantile level must lie in (0,1), got {p}")));
        }
        let w = self.cox.risk_score(z);
        let junction = self.tail.s0_at_tau.powf(w);
        if p < junction {
            let base = p.powf(1.0 / w) / self.tail.s0_at_tau;
            Ok(self.tail.tau * base.powf(-self.tail.theta))
        } else if p == junction {
            Ok(self.tail.tau)
        } else {
            // Step region: the knot exists because the step curve reaches the
            // junction value at tau.
            self.cox
                .quantile_at(z, p)?
                .ok_or_else(|| Error::numeric("step inversion failed below the junction"))
        }
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;
    use crate::cox::breslow_baseline;
    use crate::data::load_dataset;

    fn sample_from(csv: &str) -> SurvivalSample {
        load_dataset(csv.as_bytes()).unwrap()
    }

    #[test]
    fn kl_hand_values() {
        assert_eq!(kl_pareto(1.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(kl_pareto(2.0, 1.0).unwrap(), 1.0 - 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(kl_pareto(1.0, 2.0).unwrap(), 2f64.ln() - 0.5, epsilon = 1e-15);
        assert!(kl_pareto(0.0, 1.0).is_err());
        assert!(kl_pareto(1.0, -2.0).is_err());
    }

    proptest! {
        #[test]
        fn kl_nonnegative_and_scale_invariant(
            a in 1e-3f64..1e3,
            b in 1e-3f64..1e3,
            c in 1e-3f64..1e3,
        ) {
            let k = kl_pareto(a, b).unwrap();
            prop_assert!(k >= 0.0);
            let scaled = kl_pareto(c * a, c * b).unwrap();
            prop_assert!((k - scaled).abs() <= 1e-9 * (1.0 + k));
        }

        #[test]
        fn kl_zero_iff_equal(a in 1e-3f64..1e3) {
            prop_assert_eq!(kl_pareto(a, a).unwrap(), 0.0);
            let k = kl_pareto(a, a * 1.5).unwrap();
            prop_assert!(k > 0.0);
        }
    }

    #[test]
    fn hill_hand_sums() {
        let e = std::f64::consts::E;
        // times {e, e^2}, both events, beta = 0, tau = 1 -> (1 + 2)/2
        let s = sample_from(&format!("time,status\n{e},1\n{},1\n", e * e));
        let fit = hill_theta(&s, &[], 1.0).unwrap();
        assert_relative_eq!(fit.theta, 1.5, epsilon = 1e-12);
        assert_eq!(fit.n_tau, 2);

        // censored e^2 keeps the numerator but not the denominator -> 3/1
        let s = sample_from(&format!("time,status\n{e},1\n{},0\n", e * e));
        let fit = hill_theta(&s, &[], 1.0).unwrap();
        assert_relative_eq!(fit.theta, 3.0, epsilon = 1e-12);
        assert_eq!(fit.n_tau, 1);

        // single exceedance with risk score 2 -> theta = 2
        let s = sample_from(&format!("time,status,z1\n{e},1,1\n"));
        let fit = hill_theta(&s, &[2f64.ln()], 1.0).unwrap();
        assert_relative_eq!(fit.theta, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn hill_errors_without_events_above() {
        let s = sample_from("time,status\n2,0\n3,0\n5,1\n");
        assert!(hill_theta(&s, &[], 5.0).is_err());
        assert!(hill_theta(&s, &[], 4.0).is_ok());
    }

    #[test]
    fn hill_matches_classical_hill_oracle() {
        // With beta = 0 and no censoring the estimator reduces to the
        // classical Hill estimator on the exceedances.
        let mut state = 0x9E3779B97F4A7C15u64;
        let mut unif = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for trial in 0..20 {
            let n = 5 + (trial % 40);
            let mut times: Vec<f64> = (0..n).map(|_| unif().max(1e-12).powf(-0.7)).collect();
            let csv = {
                let mut s = String::from("time,status\n");
                for t in &times {
                    s.push_str(&format!("{t},1\n"));
                }
                s
            };
            let sample = sample_from(&csv);
            times.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let k = 1 + trial % (n - 1);
            let tau = times[k]; // (k+1)-th largest
            let classical: f64 =
                times[..k].iter().map(|t| (t / tau).ln()).sum::<f64>() / k as f64;
            let fit = hill_theta(&sample, &[], tau).unwrap();
            assert_relative_eq!(fit.theta, classical, epsilon = 1e-12);
        }
    }

    fn fixture_model() -> SemiParamModel {
        let s = sample_from(
            "time,status,z1\n0.5,1,0\n1.1,1,0.3\n2.0,0,-0.2\n3.5,1,0.1\n6.0,1,0\n9.0,1,-0.4\n",
        );
        SemiParamModel::fit_fixed(&s, &[0.25], 3.5).unwrap()
    }

    #[test]
    fn junction_is_continuous() {
        let m = fixture_model();
        let tau = m.tail.tau;
        // Pareto factor is exactly 1 at x = tau.
        let pareto_at_tau = m.tail.s0_at_tau * (tau / tau).powf(-1.0 / m.tail.theta);
        assert_eq!(pareto_at_tau, m.cox.baseline_survival(tau));
        assert_eq!(m.baseline_survival(tau), m.cox.baseline_survival(tau));
    }

    #[test]
    fn pareto_region_halves_at_doubling_when_theta_is_one() {
        let mut m = fixture_model();
        m.tail.theta = 1.0;
        let tau = m.tail.tau;
        assert_relative_eq!(
            m.baseline_survival(2.0 * tau),
            m.cox.baseline_survival(tau) / 2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn risk_score_two_squares_survival() {
        let m = fixture_model();
        let z = [2f64.ln() / m.cox.beta[0]];
        for x in [1.0, 3.0, 5.0, 20.0] {
            assert_relative_eq!(m.survival(&z, x), m.baseline_survival(x).powi(2), epsilon = 1e-12);
        }
    }

    #[test]
    fn cum_hazard_hand_value() {
        // tau = 1, H0(1) = 1, theta = 0.5, z = 0, x = e -> 1 + 2 = 3
        let s = sample_from("time,status\n1,1\n");
        let cox = breslow_baseline(&s, &[]).unwrap();
        assert_eq!(cox.baseline_cum_hazard(1.0), 1.0);
        let tail = TailFit { tau: 1.0, theta: 0.5, n_tau: 1, s0_at_tau: (-1.0f64).exp(), numerator: 0.5 };
        let m = SemiParamModel::new(cox, tail).unwrap();
        assert_relative_eq!(m.cum_hazard(&[], std::f64::consts::E), 3.0, epsilon = 1e-12);
        assert_eq!(m.cum_hazard(&[], 0.5), 0.0);
    }

    #[test]
    fn survival_equals_exp_minus_hazard() {
        let m = fixture_model();
        let mut x = 0.1;
        while x < 40.0 {
            for z in [-1.0, 0.0, 0.8] {
                assert_relative_eq!(
                    m.survival(&[z], x),
                    (-m.cum_hazard(&[z], x)).exp(),
                    epsilon = 1e-12
                );
            }
            x *= 1.37;
        }
    }

    #[test]
    fn hazard_scales_exactly_with_risk_score() {
        let m = fixture_model();
        for x in [1.0, 2.0, 7.0, 30.0] {
            let h0 = m.cum_hazard(&[0.0], x);
            if h0 > 0.0 {
                let h1 = m.cum_hazard(&[1.0], x);
                assert_relative_eq!(h1 / h0, m.cox.risk_score(&[1.0]), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn quantile_closed_form_hand_value() {
        // theta = 1, S0(tau) = 0.5, tau = 10, z = 0, p = 0.25 -> x = 20
        let s = sample_from("time,status\n1,1\n10,0\n");
        let mut cox = breslow_baseline(&s, &[]).unwrap();
        cox.cum_hazard = crate::step::StepFunction::new(vec![10.0], vec![2f64.ln()], 0.0).unwrap();
        cox.increments = crate::step::StepFunction::new(vec![10.0], vec![2f64.ln()], 0.0).unwrap();
        let tail = TailFit { tau: 10.0, theta: 1.0, n_tau: 1, s0_at_tau: 0.5, numerator: 1.0 };
        let m = SemiParamModel::new(cox, tail).unwrap();
        assert_relative_eq!(m.quantile(&[], 0.25).unwrap(), 20.0, epsilon = 1e-12);
        // junction level returns tau itself
        assert_eq!(m.quantile(&[], 0.5).unwrap(), 10.0);
    }

    #[test]
    fn quantile_roundtrips_in_pareto_region() {
        let m = fixture_model();
        for z in [-0.5, 0.0, 1.0] {
            let junction = m.tail.s0_at_tau.powf(m.cox.risk_score(&[z]));
            for f in [0.9, 0.5, 0.1, 0.01] {
                let p = junction * f;
                let x = m.quantile(&[z], p).unwrap();
                assert_relative_eq!(m.survival(&[z], x), p, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn quantile_step_region_returns_leftmost_knot() {
        let m = fixture_model();
        let p = m.baseline_survival(1.1) + 1e-6; // just above the value at knot 1.1
        let x = m.quantile(&[0.0], p).unwrap();
        assert_eq!(x, 1.1);
        assert!(m.survival(&[0.0], x) <= p);
        assert!(m.quantile(&[0.0], 1.5).is_err());
        assert!(m.quantile(&[0.0], 0.0).is_err());
    }

    #[test]
    fn survival_tends_to_zero_and_is_monotone() {
        let m = fixture_model();
        let mut prev = 1.0;
        let mut x = 0.0;
        for _ in 0..2000 {
            x += 0.05;
            let v = m.baseline_survival(x);
            assert!(v > 0.0 && v <= 1.0);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
        assert!(m.baseline_survival(1e9) < 1e-3);
    }

    #[test]
    fn rejects_threshold_beyond_data() {
        let s = sample_from("time,status\n1,1\n2,1\n");
        let cox = breslow_baseline(&s, &[]).unwrap();
        let tail = TailFit { tau: 5.0, theta: 1.0, n_tau: 1, s0_at_tau: 0.3, numerator: 1.0 };
        assert!(SemiParamModel::new(cox, tail).is_err());
    }
}
