//! Volatility-density specifications. Each spec stands for one measure on
//! path space: the law of a driver whose quadratic variation has density
//! `mu_t` with respect to time.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceBounds<F> {
    pub lower: F,
    pub upper: F,
}

impl<F: Real> VarianceBounds<F> {
    pub fn envelope(self, other: Self) -> Self {
        Self {
            lower: self.lower.min(other.lower),
            upper: self.upper.max(other.upper),
        }
    }

    pub fn contains(&self, v: F) -> bool {
        self.lower <= v && v <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VolKind<F> {
    Constant(F),
    /// `values[i]` applies on `[breakpoints[i-1], breakpoints[i])`, with the
    /// first value from time 0 and the last one up to the horizon.
    PiecewiseConstant { breakpoints: Vec<F>, values: Vec<F> },
    RegimeSwitching { states: Vec<F>, switch_prob: F },
    /// `weight` is the probability of drawing `left`.
    Mixture {
        left: Box<VolatilitySpec<F>>,
        right: Box<VolatilitySpec<F>>,
        weight: F,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolatilitySpec<F> {
    kind: VolKind<F>,
    bounds: VarianceBounds<F>,
}

fn check_rate<F: Real>(v: F, what: &str) -> Result<()> {
    if v.is_finite() && v > F::zero() {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!("{what} must be a positive finite variance rate, got {v}")))
    }
}

fn check_probability<F: Real>(p: F, what: &str) -> Result<()> {
    if p >= F::zero() && p <= F::one() {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!("{what} must lie in [0, 1], got {p}")))
    }
}

fn tight_bounds<F: Real>(values: &[F]) -> VarianceBounds<F> {
    let lower = values.iter().copied().fold(F::infinity(), F::min);
    let upper = values.iter().copied().fold(F::neg_infinity(), F::max);
    VarianceBounds { lower, upper }
}

impl<F: Real> VolatilitySpec<F> {
    pub fn constant(variance: F) -> Result<Self> {
        check_rate(variance, "constant variance")?;
        Ok(Self {
            kind: VolKind::Constant(variance),
            bounds: VarianceBounds { lower: variance, upper: variance },
        })
    }

    pub fn piecewise_constant(breakpoints: Vec<F>, values: Vec<F>) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return Err(Error::InvalidSpec(format!(
                "piecewise spec needs one more value than breakpoints ({} values, {} breakpoints)",
                values.len(),
                breakpoints.len()
            )));
        }
        for v in &values {
            check_rate(*v, "piecewise value")?;
        }
        if breakpoints.iter().any(|b| !b.is_finite() || *b <= F::zero()) {
            return Err(Error::InvalidSpec("breakpoints must be positive and finite".into()));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSpec("breakpoints must be strictly increasing".into()));
        }
        let bounds = tight_bounds(&values);
        Ok(Self { kind: VolKind::PiecewiseConstant { breakpoints, values }, bounds })
    }

    pub fn regime_switching(states: Vec<F>, switch_prob: F) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidSpec("regime spec needs at least one state".into()));
        }
        for v in &states {
            check_rate(*v, "regime state")?;
        }
        check_probability(switch_prob, "switch probability")?;
        let bounds = tight_bounds(&states);
        Ok(Self { kind: VolKind::RegimeSwitching { states, switch_prob }, bounds })
    }

    pub fn mixture(left: Self, right: Self, weight: F) -> Result<Self> {
        check_probability(weight, "mixture weight")?;
        let bounds = left.bounds.envelope(right.bounds);
        Ok(Self {
            kind: VolKind::Mixture { left: Box::new(left), right: Box::new(right), weight },
            bounds,
        })
    }

    /// Replace the tight bounds by wider declared ones.
    pub fn with_bounds(mut self, lower: F, upper: F) -> Result<Self> {
        check_rate(lower, "lower bound")?;
        check_rate(upper, "upper bound")?;
        if !(lower <= self.bounds.lower && self.bounds.upper <= upper) {
            return Err(Error::InvalidSpec(format!(
                "declared bounds [{lower}, {upper}] do not enclose reachable rates [{}, {}]",
                self.bounds.lower, self.bounds.upper
            )));
        }
        self.bounds = VarianceBounds { lower, upper };
        Ok(self)
    }

    pub fn kind(&self) -> &VolKind<F> {
        &self.kind
    }

    pub fn bounds(&self) -> VarianceBounds<F> {
        self.bounds
    }

    /// Every variance rate a sampled path can take.
    pub fn reachable_rates(&self) -> Vec<F> {
        match &self.kind {
            VolKind::Constant(v) => vec![*v],
            VolKind::PiecewiseConstant { values, .. } => values.clone(),
            VolKind::RegimeSwitching { states, .. } => states.clone(),
            VolKind::Mixture { left, right, .. } => {
                let mut out = left.reachable_rates();
                out.extend(right.reachable_rates());
                out
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, VolKind::Constant(_))
    }
}

/// The measure `(P + Q) / 2`, sampled by a fair coin between the two.
pub fn average_measure<F: Real>(p: &VolatilitySpec<F>, q: &VolatilitySpec<F>) -> VolatilitySpec<F> {
    VolatilitySpec::mixture(p.clone(), q.clone(), F::lit(0.5)).expect("one half is a valid weight")
}

impl<F: Real> fmt::Display for VolatilitySpec<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            VolKind::Constant(v) => write!(f, "Constant({v})"),
            VolKind::PiecewiseConstant { breakpoints, values } => {
                write!(f, "PiecewiseConstant({breakpoints:?}, {values:?})")
            }
            VolKind::RegimeSwitching { states, switch_prob } => {
                write!(f, "RegimeSwitching({states:?}, {switch_prob})")
            }
            VolKind::Mixture { left, right, weight } => write!(f, "Mixture({left}, {right}, {weight})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_bounds_are_tight() {
        let s = VolatilitySpec::constant(4.0).unwrap();
        assert_eq!(s.bounds(), VarianceBounds { lower: 4.0, upper: 4.0 });
        assert!(VolatilitySpec::constant(0.0).is_err());
        assert!(VolatilitySpec::constant(f64::INFINITY).is_err());
    }

    #[test]
    fn mixture_takes_envelope() {
        let a = VolatilitySpec::constant(1.0).unwrap();
        let b = VolatilitySpec::regime_switching(vec![2.0, 9.0], 0.1).unwrap();
        let m = VolatilitySpec::mixture(a, b, 0.3).unwrap();
        assert_eq!(m.bounds(), VarianceBounds { lower: 1.0, upper: 9.0 });
    }

    #[test]
    fn average_of_constants() {
        let avg = average_measure(
            &VolatilitySpec::constant(1.0).unwrap(),
            &VolatilitySpec::constant(4.0).unwrap(),
        );
        assert_eq!(avg.bounds(), VarianceBounds { lower: 1.0, upper: 4.0 });
        match avg.kind() {
            VolKind::Mixture { weight, .. } => assert_eq!(*weight, 0.5),
            other => panic!("expected mixture, got {other:?}"),
        }
    }

    #[test]
    fn declared_bounds_must_enclose() {
        let s = VolatilitySpec::regime_switching(vec![1.0, 4.0], 0.2).unwrap();
        assert!(s.clone().with_bounds(0.5, 5.0).is_ok());
        assert!(s.clone().with_bounds(1.5, 5.0).is_err());
        assert!(s.with_bounds(0.0, 5.0).is_err());
    }

    #[test]
    fn rejects_malformed_specs() {
        assert!(VolatilitySpec::piecewise_constant(vec![0.5], vec![1.0]).is_err());
        assert!(VolatilitySpec::piecewise_constant(vec![0.5, 0.2], vec![1.0, 2.0, 3.0]).is_err());
        assert!(VolatilitySpec::<f64>::regime_switching(vec![], 0.1).is_err());
        assert!(VolatilitySpec::regime_switching(vec![1.0], 1.5).is_err());
        let c = VolatilitySpec::constant(1.0).unwrap();
        assert!(VolatilitySpec::mixture(c.clone(), c, -0.1).is_err());
    }
}
