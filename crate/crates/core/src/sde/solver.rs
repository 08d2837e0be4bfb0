use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::measures::{DriverPath, Provenance, TimeGrid};
use crate::scalar::Real;

/// Source of the quadratic-variation increment fed to the `h` channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QvMode {
    /// `(dB_k)^2`, read off the path itself.
    #[default]
    Pathwise,
    /// `mu_k dt` from the generator's variance record.
    Generator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPath<F> {
    pub grid: Arc<TimeGrid<F>>,
    pub values: Vec<F>,
    pub x0: F,
    pub driver_ref: Provenance,
    /// Measure the solve is attributed to. Never read by the scheme.
    pub measure_id: String,
    pub qv_mode: QvMode,
}

impl<F: Real> SolutionPath<F> {
    pub fn terminal(&self) -> F {
        *self.values.last().expect("solution has at least two points")
    }

    /// `sup_k |X_k - Y_k|`; infinite when the lengths differ.
    pub fn sup_deviation(&self, other: &Self) -> F {
        if self.values.len() != other.values.len() {
            return F::infinity();
        }
        self.values
            .iter()
            .zip(&other.values)
            .fold(F::zero(), |acc, (a, b)| acc.max((*a - *b).abs()))
    }

    /// Bitwise equality of the state sequence.
    pub fn same_values(&self, other: &Self) -> bool {
        self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| a.to_f64().map(f64::to_bits) == b.to_f64().map(f64::to_bits))
    }
}

/// One Euler step `x + b dt + h dqv + sigma dB`.
pub fn euler_step<F: Real>(coeffs: &CoefficientSet<F>, t: F, x: F, dt: F, dqv: F, db: F) -> F {
    x + (coeffs.drift)(t, x) * dt + (coeffs.qv_drift)(t, x) * dqv + (coeffs.diffusion)(t, x) * db
}

/// Quadratic-variation increment over step `k`.
pub fn qv_increment<F: Real>(driver: &DriverPath<F>, k: usize, mode: QvMode) -> F {
    match mode {
        QvMode::Pathwise => {
            let d = driver.increment(k);
            d * d
        }
        QvMode::Generator => driver.vol_record()[k] * driver.grid().dt(),
    }
}

/// State values for `k = start..=N`, starting from `x_start` at `t_start`.
pub fn solve_segment<F: Real>(
    coeffs: &CoefficientSet<F>,
    x_start: F,
    driver: &DriverPath<F>,
    start: usize,
    qv_mode: QvMode,
) -> Result<Vec<F>> {
    let grid = driver.grid();
    let n = grid.steps();
    if start > n {
        return Err(Error::InvalidParameter(format!("segment start {start} beyond grid end {n}")));
    }
    if !x_start.is_finite() {
        return Err(Error::InvalidParameter(format!("initial state must be finite, got {x_start}")));
    }
    let dt = grid.dt();
    let mut x = x_start;
    let mut out = Vec::with_capacity(n + 1 - start);
    out.push(x);
    for k in start..n {
        x = euler_step(coeffs, grid.time(k), x, dt, qv_increment(driver, k, qv_mode), driver.increment(k));
        if !x.is_finite() {
            return Err(Error::BlowUp { step: k + 1, path: None });
        }
        out.push(x);
    }
    Ok(out)
}

/// Euler solve attributing the result to `measure_id`. The label is only
/// bookkeeping: the state sequence depends on the path data alone.
pub fn solve_under<F: Real>(
    coeffs: &CoefficientSet<F>,
    x0: F,
    driver: &DriverPath<F>,
    qv_mode: QvMode,
    measure_id: &str,
) -> Result<SolutionPath<F>> {
    let values = solve_segment(coeffs, x0, driver, 0, qv_mode).map_err(|e| e.on_path(driver.path_id()))?;
    Ok(SolutionPath {
        grid: Arc::clone(driver.grid()),
        values,
        x0,
        driver_ref: driver.provenance().clone(),
        measure_id: measure_id.to_owned(),
        qv_mode,
    })
}

/// Strong solution along `driver`, attributed to the measure that generated it.
pub fn solve_strong<F: Real>(
    coeffs: &CoefficientSet<F>,
    x0: F,
    driver: &DriverPath<F>,
    qv_mode: QvMode,
) -> Result<SolutionPath<F>> {
    solve_under(coeffs, x0, driver, qv_mode, &driver.provenance().measure_id)
}

/// `X_{k+1} - euler_step(X_k)` at every step.
pub fn euler_residuals<F: Real>(
    coeffs: &CoefficientSet<F>,
    driver: &DriverPath<F>,
    solution: &SolutionPath<F>,
) -> Vec<F> {
    let grid = driver.grid();
    let dt = grid.dt();
    (0..grid.steps())
        .map(|k| {
            let x = solution.values[k];
            let next = euler_step(coeffs, grid.time(k), x, dt, qv_increment(driver, k, solution.qv_mode), driver.increment(k));
            solution.values[k + 1] - next
        })
        .collect()
}
