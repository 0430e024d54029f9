//! Simulation lab: heavy-tailed generators, censored Cox data generation,
//! error metrics and the Monte-Carlo runner.

mod laws;
mod runner;

pub use laws::HeavyTailLaw;
pub use runner::{
    censoring_rate_above, geometric_grid, rel_mse, run_monte_carlo, simulate_cox_sample,
    avg_rel_mse, CovariateLaw, EstimatorReport, M0Rule, MCReport, PointError, RelMse,
    SelectionSettings, SimConfig,
};
