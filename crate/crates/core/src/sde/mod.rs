//! Strong solving of `dX = b dt + h d<B> + sigma dB` along a driver path,
//! and sampling-based checks of the coefficient regularity classes.

mod coefficients;
mod solver;
mod validate;

pub use coefficients::{builtin_coefficients, CoefficientFn, CoefficientSet, RegularityClass, BUILTIN_NAMES};
pub use solver::{
    euler_residuals, euler_step, qv_increment, solve_segment, solve_strong, solve_under, QvMode, SolutionPath,
};
pub use validate::{
    check_lipschitz, check_monotone, check_yamada_watanabe, validate, Interval, RegularityReport, Violation,
    DEFAULT_TOLERANCE,
};
