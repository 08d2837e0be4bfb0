use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::family::Member;
use super::grid::TimeGrid;
use super::spec::{VolKind, VolatilitySpec};
use super::stream::{PathStream, Provenance};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Mixture component chosen while sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Left,
    Right,
}

impl Branch {
    pub fn label(self) -> &'static str {
        match self {
            Branch::Left => "left",
            Branch::Right => "right",
        }
    }
}

/// A discretized canonical path together with the generator-side record of
/// the variance rates used to draw it.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverPath<F> {
    grid: Arc<TimeGrid<F>>,
    values: Vec<F>,
    vol_record: Vec<F>,
    qv_pathwise: Vec<F>,
    provenance: Provenance,
    branch: Vec<Branch>,
}

fn cumulative_squares<F: Real>(values: &[F]) -> Vec<F> {
    let mut acc = F::zero();
    let mut out = Vec::with_capacity(values.len());
    out.push(acc);
    for w in values.windows(2) {
        let d = w[1] - w[0];
        acc = acc + d * d;
        out.push(acc);
    }
    out
}

impl<F: Real> DriverPath<F> {
    /// Build a path from externally supplied data. The realized quadratic
    /// variation is recomputed from `values`.
    pub fn from_parts(
        grid: Arc<TimeGrid<F>>,
        values: Vec<F>,
        vol_record: Vec<F>,
        provenance: Provenance,
    ) -> Result<Self> {
        let n = grid.steps();
        if values.len() != n + 1 || vol_record.len() != n {
            return Err(Error::GridMismatch(format!(
                "driver needs {} values and {} rates, got {} and {}",
                n + 1,
                n,
                values.len(),
                vol_record.len()
            )));
        }
        if values[0] != F::zero() {
            return Err(Error::InvalidParameter("driver must start at 0".into()));
        }
        if values.iter().chain(&vol_record).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("driver data must be finite".into()));
        }
        let qv_pathwise = cumulative_squares(&values);
        Ok(Self { grid, values, vol_record, qv_pathwise, provenance, branch: Vec::new() })
    }

    pub fn grid(&self) -> &Arc<TimeGrid<F>> {
        &self.grid
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn vol_record(&self) -> &[F] {
        &self.vol_record
    }

    pub fn qv_pathwise(&self) -> &[F] {
        &self.qv_pathwise
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn path_id(&self) -> String {
        self.provenance.path_id()
    }

    /// Outermost mixture component, if generated under a mixture.
    pub fn branch_tag(&self) -> Option<Branch> {
        self.branch.first().copied()
    }

    /// Full branch chain through nested mixtures.
    pub fn branches(&self) -> &[Branch] {
        &self.branch
    }

    pub fn terminal(&self) -> F {
        *self.values.last().expect("non-empty path")
    }

    pub fn terminal_qv(&self) -> F {
        *self.qv_pathwise.last().expect("non-empty path")
    }

    pub fn increment(&self, k: usize) -> F {
        self.values[k + 1] - self.values[k]
    }
}

fn sample_rates<F: Real>(
    spec: &VolatilitySpec<F>,
    grid: &TimeGrid<F>,
    stream: &mut PathStream,
    branch: &mut Vec<Branch>,
) -> Vec<F> {
    let n = grid.steps();
    match spec.kind() {
        VolKind::Constant(v) => vec![*v; n],
        VolKind::PiecewiseConstant { breakpoints, values } => (0..n)
            .map(|k| {
                let t = grid.time(k);
                values[breakpoints.iter().take_while(|b| **b <= t).count()]
            })
            .collect(),
        VolKind::RegimeSwitching { states, switch_prob } => {
            let m = states.len();
            let p = switch_prob.approx_f64();
            let mut idx = ((stream.uniform() * m as f64) as usize).min(m - 1);
            let mut out = Vec::with_capacity(n);
            for k in 0..n {
                if k > 0 && m > 1 && stream.uniform() < p {
                    let mut j = ((stream.uniform() * (m - 1) as f64) as usize).min(m - 2);
                    if j >= idx {
                        j += 1;
                    }
                    idx = j;
                }
                out.push(states[idx]);
            }
            out
        }
        VolKind::Mixture { left, right, weight } => {
            if stream.uniform() < weight.approx_f64() {
                branch.push(Branch::Left);
                sample_rates(left, grid, stream, branch)
            } else {
                branch.push(Branch::Right);
                sample_rates(right, grid, stream, branch)
            }
        }
    }
}

/// Draw a variance-rate record of length `N`. A mixture draws its component
/// first and then delegates to it with the same stream.
pub fn sample_vol_path<F: Real>(
    spec: &VolatilitySpec<F>,
    grid: &TimeGrid<F>,
    stream: &mut PathStream,
) -> (Vec<F>, Option<Branch>) {
    let mut branch = Vec::new();
    let rates = sample_rates(spec, grid, stream, &mut branch);
    (rates, branch.first().copied())
}

/// Draw one driver path: rates first, then `dB_k = sqrt(mu_k dt) Z_k`.
pub fn sample_driver<F: Real>(
    spec: &VolatilitySpec<F>,
    grid: &Arc<TimeGrid<F>>,
    stream: &mut PathStream,
) -> DriverPath<F> {
    let mut branch = Vec::new();
    let vol_record = sample_rates(spec, grid, stream, &mut branch);
    let dt = grid.dt();
    let mut values = Vec::with_capacity(vol_record.len() + 1);
    let mut b = F::zero();
    values.push(b);
    for mu in &vol_record {
        let z = F::lit(stream.standard_normal());
        b = b + (*mu * dt).sqrt() * z;
        values.push(b);
    }
    let qv_pathwise = cumulative_squares(&values);
    DriverPath {
        grid: Arc::clone(grid),
        values,
        vol_record,
        qv_pathwise,
        provenance: stream.provenance().clone(),
        branch,
    }
}

/// Paths `0..n` of one member, generated in parallel. Output is
/// independent of the thread count.
pub fn generate_batch<F: Real>(
    member: &Member<F>,
    grid: &Arc<TimeGrid<F>>,
    seed: u64,
    n: u64,
) -> Vec<DriverPath<F>> {
    (0..n)
        .into_par_iter()
        .map(|i| sample_driver(&member.spec, grid, &mut PathStream::new(seed, &member.id, i)))
        .collect()
}

/// CSV with columns `path_index,k,t_k,B_k,mu_k,qv_k`. `mu_k` is empty on
/// the terminal row since rates live on steps.
pub fn write_driver_csv<F: Real, W: Write>(paths: &[DriverPath<F>], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["path_index", "k", "t_k", "B_k", "mu_k", "qv_k"])?;
    for p in paths {
        let idx = p.provenance.path_index.to_string();
        for k in 0..p.values.len() {
            let mu = p.vol_record.get(k).map(|m| m.to_string()).unwrap_or_default();
            w.write_record([
                idx.clone(),
                k.to_string(),
                p.grid.time(k).to_string(),
                p.values[k].to_string(),
                mu,
                p.qv_pathwise[k].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
