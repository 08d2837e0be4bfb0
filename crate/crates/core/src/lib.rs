//! Quasi-sure solutions of stochastic differential equations under a finite
//! family of volatility models.
//!
//! Every member of the family is a law for the driver path, described by
//! its variance-rate process. Paths are generated per member, solved
//! strongly with a scheme that reads only the path, checked for agreement
//! wherever several members see the same path, and patched into a single
//! universal solution. The worst case over the family gives the sublinear
//! expectation used for robust pricing.
//!
//! The numerical core is generic over the scalar type. The pathwise
//! integral and grid arithmetic accept exact rationals; simulation needs
//! `f32` or `f64`. Aliases for the usual `f64` instantiation live at the
//! crate root.

pub mod calculus;
pub mod error;
pub mod gexpect;
pub mod measures;
pub mod patching;
pub mod scalar;
pub mod sde;

pub use error::{ConflictDetail, Error, Result};
pub use scalar::{Real, Scalar};

/// Exact rational scalar for the pathwise calculus.
pub type Rational = num_rational::Rational64;

pub type Grid = measures::TimeGrid<f64>;
pub type VolSpec = measures::VolatilitySpec<f64>;
pub type Family = measures::MeasureFamily<f64>;
pub type FamilyMember = measures::Member<f64>;
pub type Driver = measures::DriverPath<f64>;
pub type Process = calculus::GridProcess<f64>;
pub type Coefficients = sde::CoefficientSet<f64>;
pub type Solution = sde::SolutionPath<f64>;
pub type Table = patching::UniversalSolutionTable<f64>;
pub type Payoff = gexpect::Functional<f64>;
pub type McConfig = gexpect::MonteCarloConfig<f64>;
pub type WorstCase = gexpect::GEstimate<f64>;

pub type GridF32 = measures::TimeGrid<f32>;
pub type DriverF32 = measures::DriverPath<f32>;
pub type CoefficientsF32 = sde::CoefficientSet<f32>;
