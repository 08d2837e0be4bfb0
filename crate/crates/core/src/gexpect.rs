//! Worst-case expectation over a finite measure family.
//!
//! Each member gets a plain Monte Carlo estimate; the sublinear
//! expectation is the largest of them. Functionals are evaluated on the
//! path itself (terminal state, terminal driver value, or terminal
//! realized quadratic variation), never on the member's parameters.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{sample_driver, MeasureFamily, Member, PathStream, TimeGrid};
use crate::scalar::Real;
use crate::sde::{solve_strong, CoefficientSet, QvMode};

/// Paths per partial sum. Fixed so the summation order does not depend on
/// the thread count.
pub const BLOCK_SIZE: usize = 1024;

/// What a terminal functional reads off a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Terminal state `X_T` of the solved equation.
    State,
    /// Terminal driver value `B_T`.
    Driver,
    /// Terminal realized quadratic variation `<B>_T`.
    Qv,
}

#[derive(Clone)]
pub struct Functional<F> {
    pub target: Target,
    pub map: Arc<dyn Fn(F) -> F + Send + Sync>,
    pub description: String,
}

impl<F> std::fmt::Debug for Functional<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Functional")
            .field("target", &self.target)
            .field("description", &self.description)
            .finish_non_exhaustive()
    }
}

impl<F: Real> Functional<F> {
    pub fn new(target: Target, description: impl Into<String>, map: impl Fn(F) -> F + Send + Sync + 'static) -> Self {
        Self { target, map: Arc::new(map), description: description.into() }
    }

    pub fn terminal(description: impl Into<String>, map: impl Fn(F) -> F + Send + Sync + 'static) -> Self {
        Self::new(Target::State, description, map)
    }

    pub fn driver_terminal(description: impl Into<String>, map: impl Fn(F) -> F + Send + Sync + 'static) -> Self {
        Self::new(Target::Driver, description, map)
    }

    pub fn qv_terminal(description: impl Into<String>, map: impl Fn(F) -> F + Send + Sync + 'static) -> Self {
        Self::new(Target::Qv, description, map)
    }

    /// `lambda * F`, on the same target.
    pub fn scaled(&self, lambda: F) -> Self {
        let inner = Arc::clone(&self.map);
        Self {
            target: self.target,
            map: Arc::new(move |v| lambda * inner(v)),
            description: format!("{lambda} * ({})", self.description),
        }
    }

    pub fn apply(&self, v: F) -> F {
        (self.map)(v)
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarloConfig<F> {
    pub grid: Arc<TimeGrid<F>>,
    pub n_paths: u64,
    pub seed: u64,
    pub qv_mode: QvMode,
    /// Key the streams by path index only, so every member sees the same
    /// normal draws.
    pub common_random_numbers: bool,
}

impl<F: Real> MonteCarloConfig<F> {
    pub fn new(grid: Arc<TimeGrid<F>>, n_paths: u64, seed: u64) -> Self {
        Self { grid, n_paths, seed, qv_mode: QvMode::Pathwise, common_random_numbers: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate<F> {
    pub measure_id: String,
    pub mean: F,
    pub stderr: F,
    pub n: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GEstimate<F> {
    pub sup_value: F,
    pub argmax_id: String,
    pub inf_value: F,
    pub argmin_id: String,
    pub per_measure: Vec<Estimate<F>>,
}

/// Per-path functional values under one member, in path order.
pub fn sample_functional<F: Real>(
    member: &Member<F>,
    coeffs: Option<&CoefficientSet<F>>,
    x0: F,
    functional: &Functional<F>,
    cfg: &MonteCarloConfig<F>,
) -> Result<Vec<F>> {
    if functional.target == Target::State && coeffs.is_none() {
        return Err(Error::InvalidParameter(format!(
            "functional `{}` reads the state but no coefficients were given",
            functional.description
        )));
    }
    (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut stream = if cfg.common_random_numbers {
                PathStream::common(cfg.seed, &member.id, i)
            } else {
                PathStream::new(cfg.seed, &member.id, i)
            };
            let driver = sample_driver(&member.spec, &cfg.grid, &mut stream);
            let read = match functional.target {
                Target::State => solve_strong(coeffs.expect("checked above"), x0, &driver, cfg.qv_mode)?.terminal(),
                Target::Driver => driver.terminal(),
                Target::Qv => driver.terminal_qv(),
            };
            let v = functional.apply(read);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::InvalidParameter(format!(
                    "functional `{}` is not finite on path {}",
                    functional.description,
                    driver.path_id()
                )))
            }
        })
        .collect()
}

/// Mean and standard error. Partial sums run over fixed blocks and are
/// merged in block order.
pub fn mean_and_stderr<F: Real>(values: &[F]) -> (F, F) {
    let n = F::from_count(values.len());
    let total = values
        .par_chunks(BLOCK_SIZE)
        .map(|b| b.iter().fold(F::zero(), |acc, v| acc + *v))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(F::zero(), |acc, s| acc + s);
    let mean = total / n;
    let ss = values
        .par_chunks(BLOCK_SIZE)
        .map(|b| b.iter().fold(F::zero(), |acc, v| acc + (*v - mean) * (*v - mean)))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(F::zero(), |acc, s| acc + s);
    let var = ss / (n - F::one());
    (mean, (var / n).sqrt())
}

/// Monte Carlo estimate of `E^P[F]`.
pub fn estimate<F: Real>(
    member: &Member<F>,
    coeffs: Option<&CoefficientSet<F>>,
    x0: F,
    functional: &Functional<F>,
    cfg: &MonteCarloConfig<F>,
) -> Result<Estimate<F>> {
    if cfg.n_paths < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 paths, got {}", cfg.n_paths)));
    }
    let values = sample_functional(member, coeffs, x0, functional, cfg)?;
    let (mean, stderr) = mean_and_stderr(&values);
    Ok(Estimate { measure_id: member.id.clone(), mean, stderr, n: cfg.n_paths, seed: cfg.seed })
}

/// Max and min over per-member estimates; ties go to the earlier member.
pub fn aggregate<F: Real>(per_measure: Vec<Estimate<F>>) -> Result<GEstimate<F>> {
    let first = per_measure
        .first()
        .ok_or_else(|| Error::InvalidFamily("no estimates to aggregate".into()))?;
    let (mut sup, mut inf) = (first, first);
    for e in &per_measure[1..] {
        if e.mean > sup.mean {
            sup = e;
        }
        if e.mean < inf.mean {
            inf = e;
        }
    }
    Ok(GEstimate {
        sup_value: sup.mean,
        argmax_id: sup.measure_id.clone(),
        inf_value: inf.mean,
        argmin_id: inf.measure_id.clone(),
        per_measure: per_measure.clone(),
    })
}

/// `sup_P E^P[F]` over the family, with the attaining member.
pub fn g_expect<F: Real>(
    family: &MeasureFamily<F>,
    coeffs: Option<&CoefficientSet<F>>,
    x0: F,
    functional: &Functional<F>,
    cfg: &MonteCarloConfig<F>,
) -> Result<GEstimate<F>> {
    let per_measure = family
        .members()
        .iter()
        .map(|m| estimate(m, coeffs, x0, functional, cfg))
        .collect::<Result<Vec<_>>>()?;
    aggregate(per_measure)
}

/// Robust price of a terminal payoff on the state: simulate under every
/// member, solve each path with the pathwise quadratic-variation feed,
/// evaluate the payoff on the path, and take the worst case.
pub fn robust_price<F: Real>(
    family: &MeasureFamily<F>,
    coeffs: &CoefficientSet<F>,
    x0: F,
    payoff: &Functional<F>,
    cfg: &MonteCarloConfig<F>,
) -> Result<GEstimate<F>> {
    if payoff.target != Target::State {
        return Err(Error::InvalidParameter(format!(
            "payoff `{}` must be a terminal functional of the state",
            payoff.description
        )));
    }
    let cfg = MonteCarloConfig { qv_mode: QvMode::Pathwise, ..cfg.clone() };
    g_expect(family, Some(coeffs), x0, payoff, &cfg)
}

/// CSV with columns `measure_id,mean,stderr,n`.
pub fn write_breakdown_csv<F: Real, W: Write>(estimates: &[Estimate<F>], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["measure_id", "mean", "stderr", "n"])?;
    for e in estimates {
        w.write_record([e.measure_id.clone(), e.mean.to_string(), e.stderr.to_string(), e.n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
