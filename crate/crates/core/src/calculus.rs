//! Pathwise stochastic calculus on grid processes.
//!
//! Nothing here knows about measures: every function consumes grid values
//! only. The integral is built from the stopping-time approximants
//! `M^eps`, where the integrand is frozen until it has moved by `eps`, and
//! the limit is taken along `eps = 2^-n`. On a finite grid the sequence is
//! eventually constant and equals the left-endpoint sum.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{DriverPath, TimeGrid};
use crate::scalar::{Real, Scalar};

/// Values of a process at every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridProcess<S> {
    grid: Arc<TimeGrid<S>>,
    values: Vec<S>,
}

impl<S: Scalar> GridProcess<S> {
    pub fn new(grid: Arc<TimeGrid<S>>, values: Vec<S>) -> Result<Self> {
        if values.len() != grid.steps() + 1 {
            return Err(Error::GridMismatch(format!(
                "process has {} values on a {}-step grid",
                values.len(),
                grid.steps()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite_value()) {
            return Err(Error::InvalidParameter(format!("non-finite process value at index {k}")));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Arc<TimeGrid<S>>, c: S) -> Self {
        let values = vec![c; grid.steps() + 1];
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<TimeGrid<S>> {
        &self.grid
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn terminal(&self) -> S {
        *self.values.last().expect("grid process has at least two points")
    }

    /// `sum_k |X_{k+1} - X_k|`.
    pub fn total_variation(&self) -> S {
        self.values
            .windows(2)
            .fold(S::zero(), |acc, w| acc + (w[1] - w[0]).magnitude())
    }

    /// Smallest non-zero one-step move. `None` for a constant process.
    pub fn min_step_oscillation(&self) -> Option<S> {
        self.values
            .windows(2)
            .map(|w| (w[1] - w[0]).magnitude())
            .filter(|d| *d > S::zero())
            .fold(None, |acc: Option<S>, d| Some(acc.map_or(d, |a| if d < a { d } else { a })))
    }

    /// `sup_k |self_k - other_k|`.
    pub fn sup_distance(&self, other: &Self) -> S {
        self.values
            .iter()
            .zip(&other.values)
            .fold(S::zero(), |acc, (a, b)| acc.larger((*a - *b).magnitude()))
    }

    fn map_with(&self, values: Vec<S>) -> Self {
        Self { grid: Arc::clone(&self.grid), values }
    }
}

impl<F: Real> GridProcess<F> {
    pub fn from_driver(driver: &DriverPath<F>) -> Self {
        Self { grid: Arc::clone(driver.grid()), values: driver.values().to_vec() }
    }
}

fn same_grid<S: Scalar>(a: &GridProcess<S>, b: &GridProcess<S>) -> Result<()> {
    if a.grid.same_as(&b.grid) {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "integrand grid ({} steps, T={}) differs from integrator grid ({} steps, T={})",
            a.grid.steps(),
            a.grid.horizon(),
            b.grid.steps(),
            b.grid.horizon()
        )))
    }
}

/// Left-endpoint sum `M_k = sum_{j<k} eta_j (X_{j+1} - X_j)`.
pub fn ito_sum<S: Scalar>(eta: &GridProcess<S>, x: &GridProcess<S>) -> Result<GridProcess<S>> {
    same_grid(eta, x)?;
    let xs = &x.values;
    let mut acc = S::zero();
    let mut out = Vec::with_capacity(xs.len());
    out.push(acc);
    for j in 0..xs.len() - 1 {
        acc = acc + eta.values[j] * (xs[j + 1] - xs[j]);
        out.push(acc);
    }
    Ok(x.map_with(out))
}

/// Grid stopping times: `tau_0 = 0` and `tau_{n+1}` is the first index
/// after `tau_n` where `eta` has moved by at least `eps`, capped at `N`.
/// The returned sequence always ends at `N`.
pub fn stopping_partition<S: Scalar>(eta: &GridProcess<S>, eps: S) -> Vec<usize> {
    let n = eta.values.len() - 1;
    let mut taus = vec![0];
    let mut anchor = eta.values[0];
    for k in 1..=n {
        if (eta.values[k] - anchor).magnitude() >= eps {
            taus.push(k);
            anchor = eta.values[k];
        }
    }
    if *taus.last().unwrap() != n {
        taus.push(n);
    }
    taus
}

fn check_eps<S: Scalar>(eps: S) -> Result<()> {
    if eps > S::zero() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("epsilon must be positive, got {eps}")))
    }
}

/// `M^eps_t = sum_n eta_{tau_n} (X_{tau_{n+1} ^ t} - X_{tau_n ^ t})` at every
/// grid point.
pub fn ito_epsilon<S: Scalar>(eta: &GridProcess<S>, x: &GridProcess<S>, eps: S) -> Result<GridProcess<S>> {
    same_grid(eta, x)?;
    check_eps(eps)?;
    let taus = stopping_partition(eta, eps);
    let xs = &x.values;
    let mut out = vec![S::zero(); xs.len()];
    let mut closed = S::zero();
    for cell in taus.windows(2) {
        let (a, b) = (cell[0], cell[1]);
        let frozen = eta.values[a];
        for k in a + 1..=b {
            out[k] = closed + frozen * (xs[k] - xs[a]);
        }
        closed = out[b];
    }
    Ok(x.map_with(out))
}

/// `eps * sum_k |dX_k|`: the distance `M^eps` can be from the left-endpoint
/// sum, since the frozen integrand is within `eps` of `eta_k` on every step.
pub fn epsilon_error_bound<S: Scalar>(x: &GridProcess<S>, eps: S) -> S {
    eps * x.total_variation()
}

/// `2^-n` in the scalar type.
pub fn dyadic<S: Scalar>(n: u32) -> S {
    S::one() / S::from_u64(1u64 << n).expect("power of two representable")
}

/// One row of the convergence diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproximantRow<S> {
    pub n: u32,
    pub epsilon: S,
    /// Sup-norm gap to the previous approximant; `None` on the first row.
    pub cauchy_gap: Option<S>,
    /// Sup-norm distance to the left-endpoint sum.
    pub sup_error: S,
    pub error_bound: S,
    pub cells: usize,
}

impl<S: Scalar> ApproximantRow<S> {
    pub fn within_bound(&self) -> bool {
        self.sup_error <= self.error_bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegralResult<S> {
    /// The last approximant.
    pub path: GridProcess<S>,
    pub epsilon_used: Vec<S>,
    /// One entry per consecutive pair of approximants.
    pub cauchy_gaps: Vec<S>,
    pub tolerance: S,
    pub converged: bool,
    /// First `n` from which every later approximant is identical.
    pub stabilized_at: Option<u32>,
    pub rows: Vec<ApproximantRow<S>>,
}

/// Runs `M^{2^-n}` for `n = 1..=n_max` and keeps the last one.
pub fn ito_limsup<S: Scalar>(
    eta: &GridProcess<S>,
    x: &GridProcess<S>,
    n_max: u32,
    tol: S,
) -> Result<IntegralResult<S>> {
    same_grid(eta, x)?;
    if !(2..=62).contains(&n_max) {
        return Err(Error::InvalidParameter(format!("n_max must be in 2..=62, got {n_max}")));
    }
    if tol < S::zero() {
        return Err(Error::InvalidParameter(format!("tolerance must be non-negative, got {tol}")));
    }
    let reference = ito_sum(eta, x)?;
    let mut rows = Vec::with_capacity(n_max as usize);
    let mut epsilon_used = Vec::with_capacity(n_max as usize);
    let mut cauchy_gaps = Vec::with_capacity(n_max as usize - 1);
    let mut prev: Option<GridProcess<S>> = None;
    let mut stable_from = 1;
    for n in 1..=n_max {
        let eps = dyadic::<S>(n);
        let approx = ito_epsilon(eta, x, eps)?;
        let gap = prev.as_ref().map(|p| approx.sup_distance(p));
        if let Some(g) = gap {
            cauchy_gaps.push(g);
            if g != S::zero() {
                stable_from = n;
            }
        }
        rows.push(ApproximantRow {
            n,
            epsilon: eps,
            cauchy_gap: gap,
            sup_error: approx.sup_distance(&reference),
            error_bound: epsilon_error_bound(x, eps),
            cells: stopping_partition(eta, eps).len() - 1,
        });
        epsilon_used.push(eps);
        prev = Some(approx);
    }
    let last_gap = *cauchy_gaps.last().expect("n_max >= 2");
    let converged = last_gap <= tol;
    Ok(IntegralResult {
        path: prev.expect("n_max >= 2"),
        epsilon_used,
        cauchy_gaps,
        tolerance: tol,
        converged,
        stabilized_at: (last_gap == S::zero()).then_some(stable_from),
        rows,
    })
}

/// `<X>_k = X_k^2 - X_0^2 - 2 sum_{j<k} X_j (X_{j+1} - X_j)`.
pub fn qv_from_integral<S: Scalar>(x: &GridProcess<S>) -> GridProcess<S> {
    let m = ito_sum(x, x).expect("a process shares its own grid");
    let x0 = x.values[0];
    let two = S::one() + S::one();
    let values = x
        .values
        .iter()
        .zip(&m.values)
        .map(|(xk, mk)| *xk * *xk - x0 * x0 - two * *mk)
        .collect();
    x.map_with(values)
}

/// `sum_{j<k} (X_{j+1} - X_j)^2`.
pub fn realized_qv<S: Scalar>(x: &GridProcess<S>) -> GridProcess<S> {
    let mut acc = S::zero();
    let mut values = Vec::with_capacity(x.values.len());
    values.push(acc);
    for w in x.values.windows(2) {
        let d = w[1] - w[0];
        acc = acc + d * d;
        values.push(acc);
    }
    x.map_with(values)
}

/// CSV with columns `n,epsilon,cauchy_gap,sup_error,error_bound,cells`.
/// `path_index` is prepended when given.
pub fn write_convergence_csv<F: Real, W: Write>(
    results: &[(u64, &IntegralResult<F>)],
    out: W,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["path_index", "n", "epsilon", "cauchy_gap", "sup_error", "error_bound", "cells"])?;
    for (idx, res) in results {
        for row in &res.rows {
            w.write_record([
                idx.to_string(),
                row.n.to_string(),
                row.epsilon.to_string(),
                row.cauchy_gap.map(|g| g.to_string()).unwrap_or_default(),
                row.sup_error.to_string(),
                row.error_bound.to_string(),
                row.cells.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
