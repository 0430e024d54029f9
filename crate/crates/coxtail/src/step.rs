//! Right-continuous step functions on the time axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A right-continuous step function.
///
/// The function takes `left_value` on `(-inf, knots[0])` and `values[i]` on
/// `[knots[i], knots[i+1])`. Knots must be strictly ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    knots: Vec<f64>,
    values: Vec<f64>,
    left_value: f64,
}

impl StepFunction {
    pub fn new(knots: Vec<f64>, values: Vec<f64>, left_value: f64) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(Error::domain(format!(
                "step function needs one value per knot (got {} knots, {} values)",
                knots.len(),
                values.len()
            )));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::domain("step function knots must be strictly ascending"));
        }
        if knots.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::domain("step function knots and values must be finite"));
        }
        Ok(Self { knots, values, left_value })
    }

    /// Step function with no knots, constant `value` everywhere.
    pub fn constant(value: f64) -> Self {
        Self { knots: Vec::new(), values: Vec::new(), left_value: value }
    }

    /// Right-continuous evaluation: the value attached to the last knot <= x.
    pub fn eval(&self, x: f64) -> f64 {
        // partition_point returns the number of knots <= x
        let idx = self.knots.partition_point(|&k| k <= x);
        if idx == 0 {
            self.left_value
        } else {
            self.values[idx - 1]
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn left_value(&self) -> f64 {
        self.left_value
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    /// Smallest knot whose value is >= `target`, for non-decreasing step
    /// functions (cumulative hazards). `None` when the function never
    /// reaches `target`.
    pub fn first_knot_reaching(&self, target: f64) -> Option<f64> {
        let idx = self.values.partition_point(|&v| v < target);
        self.knots.get(idx).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_is_right_continuous() {
        let f = StepFunction::new(vec![1.0, 2.0, 5.0], vec![0.5, 1.5, 3.0], 0.0).unwrap();
        assert_eq!(f.eval(0.999), 0.0);
        assert_eq!(f.eval(1.0), 0.5);
        assert_eq!(f.eval(1.5), 0.5);
        assert_eq!(f.eval(2.0), 1.5);
        assert_eq!(f.eval(4.999), 1.5);
        assert_eq!(f.eval(5.0), 3.0);
        assert_eq!(f.eval(1e12), 3.0);
    }

    #[test]
    fn rejects_unsorted_knots() {
        assert!(StepFunction::new(vec![1.0, 1.0], vec![0.0, 1.0], 0.0).is_err());
        assert!(StepFunction::new(vec![2.0, 1.0], vec![0.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn first_knot_reaching_finds_jump() {
        let f = StepFunction::new(vec![1.0, 2.0, 5.0], vec![0.5, 1.5, 3.0], 0.0).unwrap();
        assert_eq!(f.first_knot_reaching(0.2), Some(1.0));
        assert_eq!(f.first_knot_reaching(0.5), Some(1.0));
        assert_eq!(f.first_knot_reaching(0.6), Some(2.0));
        assert_eq!(f.first_knot_reaching(3.0), Some(5.0));
        assert_eq!(f.first_knot_reaching(3.1), None);
    }
}
