use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Uniform time grid `0 = t_0 < t_1 < ... < t_N = T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeGrid<S> {
    horizon: S,
    steps: usize,
    points: Vec<S>,
}

impl<S: Scalar> TimeGrid<S> {
    pub fn new(horizon: S, steps: usize) -> Result<Self> {
        if !horizon.is_finite_value() || horizon <= S::zero() {
            return Err(Error::InvalidGrid(format!("horizon must be positive and finite, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::InvalidGrid("step count must be at least 1".into()));
        }
        let n = S::from_count(steps);
        // t_k = T*k/N keeps t_N == T exactly
        let points = (0..=steps).map(|k| horizon * S::from_count(k) / n).collect();
        Ok(Self { horizon, steps, points })
    }

    pub fn horizon(&self) -> S {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> S {
        self.horizon / S::from_count(self.steps)
    }

    pub fn points(&self) -> &[S] {
        &self.points
    }

    pub fn time(&self, k: usize) -> S {
        self.points[k]
    }

    /// Same horizon and step count.
    pub fn same_as(&self, other: &Self) -> bool {
        self.steps == other.steps && self.horizon == other.horizon
    }
}

/// Shorthand for [`TimeGrid::new`].
pub fn make_grid<S: Scalar>(horizon: S, steps: usize) -> Result<TimeGrid<S>> {
    TimeGrid::new(horizon, steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    #[test]
    fn quarter_grid() {
        let g = make_grid(1.0f64, 4).unwrap();
        assert_eq!(g.points(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn single_step() {
        let g = make_grid(2.0f64, 1).unwrap();
        assert_eq!(g.points(), &[0.0, 2.0]);
        assert_eq!(g.dt(), 2.0);
    }

    #[test]
    fn fine_grid_spacing() {
        let g = make_grid(1.0f64, 10_000).unwrap();
        assert!((g.dt() - 1e-4).abs() < 1e-18);
        assert_eq!(g.points()[0], 0.0);
        assert_eq!(*g.points().last().unwrap(), 1.0);
        for w in g.points().windows(2) {
            assert!(w[1] > w[0]);
            assert!(((w[1] - w[0]) - g.dt()).abs() <= 4.0 * f64::EPSILON);
        }
    }

    #[test]
    fn exact_rational_grid() {
        let g = make_grid(Rational64::new(3, 2), 3).unwrap();
        assert_eq!(g.dt(), Rational64::new(1, 2));
        assert_eq!(g.time(3), Rational64::new(3, 2));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(make_grid(0.0f64, 4).is_err());
        assert!(make_grid(-1.0f64, 4).is_err());
        assert!(make_grid(f64::NAN, 4).is_err());
        assert!(make_grid(1.0f64, 0).is_err());
    }
}
