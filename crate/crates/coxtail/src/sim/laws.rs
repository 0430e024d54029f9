//! Heavy-tailed reference laws used by the simulation studies.

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};

/// Heavy-tailed law in the Frechet domain of attraction.
///
/// - `TruncatedCauchy { x0, gamma }`: a Cauchy with location `x0` and scale
///   `gamma` conditioned on exceeding 0, supported on `[0, inf)`; tail
///   index 1. The survival is
///   `S(x) = S_C((x - x0)/gamma) / S_C(-x0/gamma)` with
///   `S_C(v) = 1/2 - arctan(v)/pi`.
/// - `LogGamma { shape, rate }`: density
///   `b^a ln(x)^{a-1} / (Gamma(a) x^{b+1})` on `(1, inf)`; tail index `1/b`;
///   sampled exactly as `exp(Gamma(shape, rate))`.
/// - `Pareto { theta }`: `S(x) = x^{-1/theta}` on `[1, inf)`; tail index
///   `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeavyTailLaw {
    TruncatedCauchy { x0: f64, gamma: f64 },
    LogGamma { shape: f64, rate: f64 },
    Pareto { theta: f64 },
}

impl HeavyTailLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            HeavyTailLaw::TruncatedCauchy { x0, gamma } => {
                if !(gamma > 0.0) || !x0.is_finite() || !gamma.is_finite() {
                    return Err(Error::domain(format!(
                        "truncated Cauchy needs finite x0 and gamma > 0 (got x0={x0}, gamma={gamma})"
                    )));
                }
            }
            HeavyTailLaw::LogGamma { shape, rate } => {
                if !(shape > 0.0) || !(rate > 0.0) {
                    return Err(Error::domain(format!(
                        "log-Gamma needs shape > 0 and rate > 0 (got {shape}, {rate})"
                    )));
                }
            }
            HeavyTailLaw::Pareto { theta } => {
                if !(theta > 0.0) {
                    return Err(Error::domain(format!("Pareto needs theta > 0 (got {theta})")));
                }
            }
        }
        Ok(())
    }

    /// Tail index of the law (Frechet extreme-value index).
    pub fn tail_index(&self) -> f64 {
        match *self {
            HeavyTailLaw::TruncatedCauchy { .. } => 1.0,
            HeavyTailLaw::LogGamma { rate, .. } => 1.0 / rate,
            HeavyTailLaw::Pareto { theta } => theta,
        }
    }

    /// Survival function; 1 below the support, 0 limits above.
    pub fn survival(&self, x: f64) -> f64 {
        match *self {
            HeavyTailLaw::TruncatedCauchy { x0, gamma } => {
                if x <= 0.0 {
                    1.0
                } else {
                    cauchy_survival((x - x0) / gamma) / cauchy_survival(-x0 / gamma)
                }
            }
            HeavyTailLaw::LogGamma { shape, rate } => {
                if x <= 1.0 {
                    1.0
                } else {
                    gamma_ur(shape, rate * x.ln())
                }
            }
            HeavyTailLaw::Pareto { theta } => {
                if x <= 1.0 {
                    1.0
                } else {
                    x.powf(-1.0 / theta)
                }
            }
        }
    }

    /// Density with respect to Lebesgue measure; 0 outside the support.
    pub fn density(&self, x: f64) -> f64 {
        match *self {
            HeavyTailLaw::TruncatedCauchy { x0, gamma } => {
                if x < 0.0 {
                    0.0
                } else {
                    let v = (x - x0) / gamma;
                    1.0 / (std::f64::consts::PI * gamma * (1.0 + v * v))
                        / cauchy_survival(-x0 / gamma)
                }
            }
            HeavyTailLaw::LogGamma { shape, rate } => {
                if x <= 1.0 {
                    0.0
                } else {
                    (shape * rate.ln() + (shape - 1.0) * x.ln().ln()
                        - ln_gamma(shape)
                        - (rate + 1.0) * x.ln())
                    .exp()
                }
            }
            HeavyTailLaw::Pareto { theta } => {
                if x < 1.0 {
                    0.0
                } else {
                    x.powf(-1.0 / theta - 1.0) / theta
                }
            }
        }
    }

    /// Inverse survival: the `x` with `survival(x) = u` for `u` in `(0, 1)`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::domain(format!("survival level must lie in (0,1), got {u}")));
        }
        Ok(match *self {
            HeavyTailLaw::TruncatedCauchy { x0, gamma } => {
                let denom = cauchy_survival(-x0 / gamma);
                x0 + gamma * (std::f64::consts::PI * (0.5 - u * denom)).tan()
            }
            HeavyTailLaw::LogGamma { shape, rate } => {
                use statrs::distribution::{ContinuousCDF, Gamma};
                let g = Gamma::new(shape, rate)
                    .map_err(|e| Error::numeric(format!("gamma quantile setup failed: {e}")))?;
                g.inverse_cdf(1.0 - u).exp()
            }
            HeavyTailLaw::Pareto { theta } => u.powf(-theta),
        })
    }

    /// Draw one value. The truncated Cauchy and Pareto use the closed-form
    /// inverse transform; the log-Gamma is `exp` of a Gamma draw (exact).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            HeavyTailLaw::LogGamma { shape, rate } => {
                let g = rand_distr::Gamma::new(shape, 1.0 / rate)
                    .expect("validated shape and rate");
                g.sample(rng).exp()
            }
            _ => self
                .quantile(open_unit(rng))
                .expect("open-unit draw is inside (0,1)"),
        }
    }
}

#[inline]
fn cauchy_survival(v: f64) -> f64 {
    0.5 - v.atan() / std::f64::consts::PI
}

/// Uniform draw from the open interval (0, 1).
pub(crate) fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn truncated_cauchy_hand_values() {
        let law = HeavyTailLaw::TruncatedCauchy { x0: 0.0, gamma: 1.0 };
        assert_eq!(law.survival(0.0), 1.0);
        // S(1) = (1/2 - 1/4) / (1/2) = 0.5 since arctan(1) = pi/4
        assert_relative_eq!(law.survival(1.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(law.quantile(0.5).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn truncated_cauchy_with_location() {
        let law = HeavyTailLaw::TruncatedCauchy { x0: 10.0, gamma: 0.1 };
        assert_eq!(law.survival(-1.0), 1.0);
        assert_relative_eq!(law.survival(10.0), 0.5 / cauchy_survival(-100.0), epsilon = 1e-12);
        for u in [0.9, 0.5, 0.1, 1e-3] {
            let x = law.quantile(u).unwrap();
            assert!(x > 0.0);
            assert_relative_eq!(law.survival(x), u, epsilon = 1e-9);
        }
    }

    #[test]
    fn log_gamma_shape_one_is_pareto() {
        // shape a = 1: density b x^{-b-1}, i.e. Pareto with index 1/b.
        let law = HeavyTailLaw::LogGamma { shape: 1.0, rate: 2.0 };
        let pareto = HeavyTailLaw::Pareto { theta: 0.5 };
        for x in [1.5, 2.0, 5.0, 100.0] {
            assert_relative_eq!(law.density(x), 2.0 * x.powf(-3.0), epsilon = 1e-10);
            assert_relative_eq!(law.survival(x), pareto.survival(x), epsilon = 1e-10);
        }
    }

    #[test]
    fn pareto_roundtrip() {
        let law = HeavyTailLaw::Pareto { theta: 1.0 };
        assert_relative_eq!(law.quantile(0.5).unwrap(), 2.0, epsilon = 1e-15);
        assert_relative_eq!(law.survival(2.0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn quantile_survival_roundtrip_all_laws() {
        let laws = [
            HeavyTailLaw::TruncatedCauchy { x0: 0.0, gamma: 1.0 },
            HeavyTailLaw::TruncatedCauchy { x0: 10.0, gamma: 2.0 },
            HeavyTailLaw::LogGamma { shape: 2.0, rate: 2.0 },
            HeavyTailLaw::Pareto { theta: 0.7 },
        ];
        for law in laws {
            for u in [0.99, 0.7, 0.3, 0.05, 1e-4] {
                let x = law.quantile(u).unwrap();
                assert_relative_eq!(law.survival(x), u, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn density_integrates_to_survival_drop() {
        // crude quadrature check: integral of the density over [a, b] equals
        // S(a) - S(b)
        let laws = [
            HeavyTailLaw::TruncatedCauchy { x0: 0.0, gamma: 2.0 },
            HeavyTailLaw::LogGamma { shape: 2.0, rate: 2.0 },
            HeavyTailLaw::Pareto { theta: 1.5 },
        ];
        for law in laws {
            let (a, b) = (1.1, 6.0);
            let steps = 20_000;
            let h = (b - a) / steps as f64;
            let mut integral = 0.5 * (law.density(a) + law.density(b));
            for i in 1..steps {
                integral += law.density(a + i as f64 * h);
            }
            integral *= h;
            assert_relative_eq!(integral, law.survival(a) - law.survival(b), epsilon = 1e-5);
        }
    }

    #[test]
    fn sampler_matches_survival_by_ks() {
        let laws = [
            HeavyTailLaw::TruncatedCauchy { x0: 0.0, gamma: 1.0 },
            HeavyTailLaw::LogGamma { shape: 2.0, rate: 2.0 },
            HeavyTailLaw::Pareto { theta: 1.0 },
        ];
        for (i, law) in laws.into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(42 + i as u64);
            let n = 100_000;
            let mut draws: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
            draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut ks: f64 = 0.0;
            for (j, &x) in draws.iter().enumerate() {
                let empirical_hi = (j + 1) as f64 / n as f64;
                let empirical_lo = j as f64 / n as f64;
                let f = 1.0 - law.survival(x);
                ks = ks.max((f - empirical_hi).abs()).max((f - empirical_lo).abs());
            }
            assert!(ks < 0.01, "KS distance {ks} too large for {law:?}");
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(HeavyTailLaw::TruncatedCauchy { x0: 0.0, gamma: 0.0 }.validate().is_err());
        assert!(HeavyTailLaw::LogGamma { shape: -1.0, rate: 2.0 }.validate().is_err());
        assert!(HeavyTailLaw::Pareto { theta: 0.0 }.validate().is_err());
        assert!(HeavyTailLaw::Pareto { theta: 1.0 }.quantile(0.0).is_err());
        assert!(HeavyTailLaw::Pareto { theta: 1.0 }.quantile(1.0).is_err());
    }
}
