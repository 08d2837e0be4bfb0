//! Typical sets, cross-measure compatibility, and assembly of the universal
//! solution.
//!
//! A path is typical under a measure when its generator-side variance
//! record lies in the support of that measure's spec. For every path seen
//! by several measures, the per-measure solutions must agree bitwise;
//! the universal table then stores that common solution, and paths seen by
//! no measure go to the exceptional set with a constant default.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{ConflictDetail, Error, Result};
use crate::measures::{
    average_measure, sample_driver, Branch, DriverPath, MeasureFamily, Member, PathStream, Provenance, TimeGrid,
    VolKind, VolatilitySpec,
};
use crate::scalar::Real;
use crate::sde::{euler_residuals, solve_under, CoefficientSet, QvMode, SolutionPath};

pub const DEFAULT_TYPICAL_TOLERANCE: f64 = 1e-12;

/// Identifies a generated path: measure label plus path index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathKey {
    pub measure_id: String,
    pub path_index: u64,
}

impl From<&Provenance> for PathKey {
    fn from(p: &Provenance) -> Self {
        Self { measure_id: p.measure_id.clone(), path_index: p.path_index }
    }
}

impl fmt::Display for PathKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.measure_id, self.path_index)
    }
}

impl Serialize for PathKey {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

fn close<F: Real>(a: F, b: F, tol: F) -> bool {
    (a - b).abs() <= tol * F::one().max(b.abs())
}

fn rates_in_support<F: Real>(spec: &VolatilitySpec<F>, grid: &TimeGrid<F>, rates: &[F], tol: F) -> bool {
    match spec.kind() {
        VolKind::Constant(v) => rates.iter().all(|m| close(*m, *v, tol)),
        VolKind::PiecewiseConstant { breakpoints, values } => rates.iter().enumerate().all(|(k, m)| {
            let t = grid.time(k);
            close(*m, values[breakpoints.iter().take_while(|b| **b <= t).count()], tol)
        }),
        VolKind::RegimeSwitching { states, .. } => {
            rates.iter().all(|m| states.iter().any(|s| close(*m, *s, tol)))
        }
        VolKind::Mixture { left, right, .. } => {
            rates_in_support(left, grid, rates, tol) || rates_in_support(right, grid, rates, tol)
        }
    }
}

/// Whether the driver's variance record lies in the support of `spec`.
pub fn typical_under<F: Real>(spec: &VolatilitySpec<F>, driver: &DriverPath<F>, tol: F) -> bool {
    rates_in_support(spec, driver.grid(), driver.vol_record(), tol)
}

/// Ids of the members that see `driver` as typical, in family order.
pub fn seeing_members<'a, F: Real>(family: &'a MeasureFamily<F>, driver: &DriverPath<F>, tol: F) -> Vec<&'a Member<F>> {
    family.members().iter().filter(|m| typical_under(&m.spec, driver, tol)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypicalSetRecord {
    pub measure_id: String,
    pub path_ids: BTreeSet<PathKey>,
}

/// One record per member, in family order.
pub fn assign_typical<F: Real>(family: &MeasureFamily<F>, paths: &[DriverPath<F>], tol: F) -> Vec<TypicalSetRecord> {
    let seen: Vec<Vec<usize>> = paths
        .par_iter()
        .map(|p| {
            family
                .members()
                .iter()
                .enumerate()
                .filter(|(_, m)| typical_under(&m.spec, p, tol))
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    let mut records: Vec<TypicalSetRecord> = family
        .members()
        .iter()
        .map(|m| TypicalSetRecord { measure_id: m.id.clone(), path_ids: BTreeSet::new() })
        .collect();
    for (p, members) in paths.iter().zip(seen) {
        for i in members {
            records[i].path_ids.insert(PathKey::from(p.provenance()));
        }
    }
    records
}

/// Anything that turns a driver path into a solution attributed to a member.
pub trait PathSolver<F>: Sync {
    fn solve(&self, coeffs: &CoefficientSet<F>, x0: F, driver: &DriverPath<F>, member: &Member<F>)
        -> Result<SolutionPath<F>>;
}

/// Euler solve with the pathwise quadratic-variation feed.
#[derive(Debug, Clone, Copy, Default)]
pub struct PathwiseSolver;

impl<F: Real> PathSolver<F> for PathwiseSolver {
    fn solve(
        &self,
        coeffs: &CoefficientSet<F>,
        x0: F,
        driver: &DriverPath<F>,
        member: &Member<F>,
    ) -> Result<SolutionPath<F>> {
        solve_under(coeffs, x0, driver, QvMode::Pathwise, &member.id)
    }
}

/// A deliberately measure-dependent scheme for differential tests.
///
/// Adds the Itô correction `½ σ σ' ((ΔB)² − ν Δt)` to the Euler step, where
/// `ν` is the midpoint of the member's variance bounds. The consistent
/// pathwise scheme would subtract the realized increment `(ΔB)²`, making the
/// correction vanish; substituting the nominal variance lets the member leak
/// into the solution, so compatibility checks must reject it.
#[derive(Debug, Clone, Copy, Default)]
pub struct NominalQvSolver;

impl<F: Real> PathSolver<F> for NominalQvSolver {
    fn solve(
        &self,
        coeffs: &CoefficientSet<F>,
        x0: F,
        driver: &DriverPath<F>,
        member: &Member<F>,
    ) -> Result<SolutionPath<F>> {
        let grid = driver.grid();
        let dt = grid.dt();
        let half = F::lit(0.5);
        let bounds = member.spec.bounds();
        let nominal = (bounds.lower + bounds.upper) * half;
        let mut x = x0;
        let mut values = Vec::with_capacity(grid.steps() + 1);
        values.push(x);
        for k in 0..grid.steps() {
            let t = grid.time(k);
            let db = driver.increment(k);
            let h = F::lit(1e-6) * x.abs().max(F::one());
            let slope = ((coeffs.diffusion)(t, x + h) - (coeffs.diffusion)(t, x - h)) / (h + h);
            let correction = half * (coeffs.diffusion)(t, x) * slope * (db * db - nominal * dt);
            x = crate::sde::euler_step(coeffs, t, x, dt, db * db, db) + correction;
            if !x.is_finite() {
                return Err(Error::BlowUp { step: k + 1, path: Some(driver.path_id()) });
            }
            values.push(x);
        }
        Ok(SolutionPath {
            grid: Arc::clone(grid),
            values,
            x0,
            driver_ref: driver.provenance().clone(),
            measure_id: member.id.clone(),
            qv_mode: QvMode::Pathwise,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairDeviation<F> {
    pub first: String,
    pub second: String,
    pub path_id: PathKey,
    pub deviation: F,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompatibilityReport<F> {
    pub pairs: Vec<PairDeviation<F>>,
    /// Paths seen by at least two measures.
    pub shared_paths: usize,
    /// Shared paths with at least one non-zero deviation.
    pub offending_paths: usize,
    pub max_deviation: F,
    pub pass: bool,
}

impl<F: Real> CompatibilityReport<F> {
    fn from_pairs(pairs: Vec<PairDeviation<F>>, shared_paths: usize) -> Self {
        let max_deviation = pairs.iter().fold(F::zero(), |acc, p| acc.max(p.deviation));
        let offending: BTreeSet<&PathKey> =
            pairs.iter().filter(|p| p.deviation != F::zero()).map(|p| &p.path_id).collect();
        // NaN deviations count as offending and fail the report
        let nan = pairs.iter().any(|p| p.deviation.is_nan());
        Self {
            shared_paths,
            offending_paths: offending.len(),
            max_deviation,
            pass: max_deviation == F::zero() && !nan,
            pairs,
        }
    }

    pub fn offenders(&self) -> impl Iterator<Item = &PairDeviation<F>> {
        self.pairs.iter().filter(|p| p.deviation != F::zero())
    }
}

fn pairwise<F: Real>(key: &PathKey, sols: &[(&str, SolutionPath<F>)]) -> Vec<PairDeviation<F>> {
    let mut out = Vec::new();
    for i in 0..sols.len() {
        for j in i + 1..sols.len() {
            out.push(PairDeviation {
                first: sols[i].0.to_owned(),
                second: sols[j].0.to_owned(),
                path_id: key.clone(),
                deviation: sols[i].1.sup_deviation(&sols[j].1),
            });
        }
    }
    out
}

/// Compatibility with the default pathwise solver.
pub fn check_compatibility<F: Real>(
    family: &MeasureFamily<F>,
    coeffs: &CoefficientSet<F>,
    x0: F,
    paths: &[DriverPath<F>],
    tol: F,
) -> Result<CompatibilityReport<F>> {
    check_compatibility_with(&PathwiseSolver, family, coeffs, x0, paths, tol)
}

/// Solve every shared path once per seeing measure and record the sup-norm
/// deviation of every pair.
pub fn check_compatibility_with<F: Real, P: PathSolver<F>>(
    solver: &P,
    family: &MeasureFamily<F>,
    coeffs: &CoefficientSet<F>,
    x0: F,
    paths: &[DriverPath<F>],
    tol: F,
) -> Result<CompatibilityReport<F>> {
    let per_path: Vec<Option<Vec<PairDeviation<F>>>> = paths
        .par_iter()
        .map(|p| {
            let seeing = seeing_members(family, p, tol);
            if seeing.len() < 2 {
                return Ok(None);
            }
            let sols = seeing
                .iter()
                .map(|m| Ok((m.id.as_str(), solver.solve(coeffs, x0, p, m)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(Some(pairwise(&PathKey::from(p.provenance()), &sols)))
        })
        .collect::<Result<_>>()?;
    let shared = per_path.iter().filter(|p| p.is_some()).count();
    Ok(CompatibilityReport::from_pairs(per_path.into_iter().flatten().flatten().collect(), shared))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AverageConsistencyReport<F> {
    pub average_id: String,
    pub compatibility: CompatibilityReport<F>,
    pub left_count: usize,
    pub right_count: usize,
    /// Paths whose regeneration under the branch component differed.
    pub regeneration_mismatches: usize,
    /// Paths not typical under their branch component.
    pub atypical: usize,
    pub pass: bool,
}

/// Sample under `(P + Q) / 2` and check each path against the component
/// its coin chose: regenerating under the component from the same stream
/// state must reproduce the path, the path must be typical under the
/// component, and the solve under the average must equal the solve
/// attributed to the component.
#[allow(clippy::too_many_arguments)]
pub fn check_average_consistency<F: Real>(
    p: &Member<F>,
    q: &Member<F>,
    coeffs: &CoefficientSet<F>,
    x0: F,
    grid: &Arc<TimeGrid<F>>,
    n_paths: u64,
    seed: u64,
    tol: F,
) -> Result<AverageConsistencyReport<F>> {
    let average_id = format!("avg({},{})", p.id, q.id);
    let average = Member::new(average_id.clone(), average_measure(&p.spec, &q.spec));
    struct PathCheck<F> {
        branch: Branch,
        regenerated: bool,
        typical: bool,
        pairs: Vec<PairDeviation<F>>,
    }
    let checks: Vec<PathCheck<F>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let base = PathStream::new(seed, &average.id, i);
            let driver = sample_driver(&average.spec, grid, &mut base.clone());
            let branch = driver.branch_tag().expect("average measure always tags its branch");
            let component = match branch {
                Branch::Left => p,
                Branch::Right => q,
            };
            let mut delegated = base;
            delegated.uniform();
            let again = sample_driver(&component.spec, grid, &mut delegated);
            let regenerated = again.values() == driver.values() && again.vol_record() == driver.vol_record();
            let typical = typical_under(&component.spec, &driver, tol);
            let under_average = PathwiseSolver.solve(coeffs, x0, &driver, &average)?;
            let under_component = PathwiseSolver.solve(coeffs, x0, &driver, component)?;
            let pairs = pairwise(
                &PathKey::from(driver.provenance()),
                &[(average.id.as_str(), under_average), (component.id.as_str(), under_component)],
            );
            Ok(PathCheck { branch, regenerated, typical, pairs })
        })
        .collect::<Result<_>>()?;
    let left_count = checks.iter().filter(|c| c.branch == Branch::Left).count();
    let regeneration_mismatches = checks.iter().filter(|c| !c.regenerated).count();
    let atypical = checks.iter().filter(|c| !c.typical).count();
    let n = checks.len();
    let compatibility = CompatibilityReport::from_pairs(checks.into_iter().flat_map(|c| c.pairs).collect(), n);
    Ok(AverageConsistencyReport {
        average_id,
        pass: compatibility.pass && regeneration_mismatches == 0 && atypical == 0,
        compatibility,
        left_count,
        right_count: n - left_count,
        regeneration_mismatches,
        atypical,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableEntry<F> {
    pub solution: SolutionPath<F>,
    /// Seeing measures, in family order.
    pub provenance: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniversalSolutionTable<F> {
    pub grid: Arc<TimeGrid<F>>,
    pub entries: BTreeMap<PathKey, TableEntry<F>>,
    pub exceptional: BTreeSet<PathKey>,
    pub default_value: F,
    pub conflicts: Vec<ConflictDetail>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableSummary<F> {
    pub total_paths: usize,
    pub entries: usize,
    pub exceptional: usize,
    pub default_value: F,
    /// Number of seeing measures -> number of paths.
    pub provenance_size_histogram: BTreeMap<usize, usize>,
    /// Semicolon-joined seeing set -> number of paths.
    pub provenance_sets: BTreeMap<String, usize>,
    pub exceptional_ids: Vec<PathKey>,
}

impl<F: Real> UniversalSolutionTable<F> {
    pub fn len(&self) -> usize {
        self.entries.len() + self.exceptional.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `X_k` on a path; the default value on the exceptional set.
    pub fn value(&self, key: &PathKey, k: usize) -> Option<F> {
        if let Some(e) = self.entries.get(key) {
            e.solution.values.get(k).copied()
        } else if self.exceptional.contains(key) && k <= self.grid.steps() {
            Some(self.default_value)
        } else {
            None
        }
    }

    pub fn summary(&self) -> TableSummary<F> {
        let mut provenance_size_histogram = BTreeMap::new();
        let mut provenance_sets = BTreeMap::new();
        for e in self.entries.values() {
            *provenance_size_histogram.entry(e.provenance.len()).or_insert(0) += 1;
            *provenance_sets.entry(e.provenance.join(";")).or_insert(0) += 1;
        }
        if !self.exceptional.is_empty() {
            provenance_size_histogram.insert(0, self.exceptional.len());
        }
        TableSummary {
            total_paths: self.len(),
            entries: self.entries.len(),
            exceptional: self.exceptional.len(),
            default_value: self.default_value,
            provenance_size_histogram,
            provenance_sets,
            exceptional_ids: self.exceptional.iter().cloned().collect(),
        }
    }

    /// Largest `|X_{k+1} - euler_step(X_k)|` over every entry, using the
    /// driver paths the table was built from.
    pub fn max_residual(&self, coeffs: &CoefficientSet<F>, paths: &[DriverPath<F>]) -> F {
        paths
            .iter()
            .filter_map(|p| self.entries.get(&PathKey::from(p.provenance())).map(|e| (p, e)))
            .flat_map(|(p, e)| euler_residuals(coeffs, p, &e.solution))
            .fold(F::zero(), |acc, r| acc.max(r.abs()))
    }

    /// CSV with columns `path_id,k,t_k,X_k,provenance`, rows ordered by path.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["path_id", "k", "t_k", "X_k", "provenance"])?;
        let keys: BTreeSet<&PathKey> = self.entries.keys().chain(&self.exceptional).collect();
        for key in keys {
            let id = key.to_string();
            let provenance = self.entries.get(key).map(|e| e.provenance.join(";")).unwrap_or_default();
            for (k, t) in self.grid.points().iter().enumerate() {
                let x = self.value(key, k).expect("key is in the table");
                w.write_record([id.as_str(), &k.to_string(), &t.to_string(), &x.to_string(), provenance.as_str()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

enum Patched<F> {
    Entry(PathKey, TableEntry<F>),
    Exceptional(PathKey),
    Conflict(Vec<ConflictDetail>),
}

/// Assemble the universal solution with the default pathwise solver.
pub fn patch<F: Real>(
    family: &MeasureFamily<F>,
    coeffs: &CoefficientSet<F>,
    x0: F,
    paths: &[DriverPath<F>],
    tol: F,
) -> Result<UniversalSolutionTable<F>> {
    patch_with(&PathwiseSolver, family, coeffs, x0, paths, tol)
}

/// Assemble the universal solution: solve each path under every seeing
/// measure, require bitwise agreement, and keep the common solution.
pub fn patch_with<F: Real, P: PathSolver<F>>(
    solver: &P,
    family: &MeasureFamily<F>,
    coeffs: &CoefficientSet<F>,
    x0: F,
    paths: &[DriverPath<F>],
    tol: F,
) -> Result<UniversalSolutionTable<F>> {
    let Some(first) = paths.first() else {
        return Err(Error::InvalidParameter("cannot patch an empty batch".into()));
    };
    let grid = Arc::clone(first.grid());
    let mut keys = BTreeSet::new();
    for p in paths {
        if !p.grid().same_as(&grid) {
            return Err(Error::GridMismatch(format!("path {} is on a different grid", p.path_id())));
        }
        if !keys.insert(PathKey::from(p.provenance())) {
            return Err(Error::InvalidParameter(format!("duplicate path id {}", p.path_id())));
        }
    }
    let patched: Vec<Patched<F>> = paths
        .par_iter()
        .map(|p| {
            let key = PathKey::from(p.provenance());
            let seeing = seeing_members(family, p, tol);
            if seeing.is_empty() {
                return Ok(Patched::Exceptional(key));
            }
            let sols = seeing
                .iter()
                .map(|m| Ok((m.id.as_str(), solver.solve(coeffs, x0, p, m)?)))
                .collect::<Result<Vec<_>>>()?;
            let conflicts: Vec<ConflictDetail> = pairwise(&key, &sols)
                .into_iter()
                .filter(|d| d.deviation != F::zero())
                .map(|d| ConflictDetail {
                    path_id: d.path_id.to_string(),
                    first: d.first,
                    second: d.second,
                    deviation: d.deviation.approx_f64(),
                })
                .collect();
            if !conflicts.is_empty() {
                return Ok(Patched::Conflict(conflicts));
            }
            let provenance = seeing.iter().map(|m| m.id.clone()).collect();
            let solution = sols.into_iter().next().expect("non-empty").1;
            Ok(Patched::Entry(key, TableEntry { solution, provenance }))
        })
        .collect::<Result<_>>()?;

    let mut table = UniversalSolutionTable {
        grid,
        entries: BTreeMap::new(),
        exceptional: BTreeSet::new(),
        default_value: F::zero(),
        conflicts: Vec::new(),
    };
    for item in patched {
        match item {
            Patched::Entry(k, e) => {
                table.entries.insert(k, e);
            }
            Patched::Exceptional(k) => {
                table.exceptional.insert(k);
            }
            Patched::Conflict(c) => table.conflicts.extend(c),
        }
    }
    if !table.conflicts.is_empty() {
        table.conflicts.sort_by(|a, b| {
            (&a.path_id, &a.first, &a.second).cmp(&(&b.path_id, &b.first, &b.second))
        });
        return Err(Error::Conflict(table.conflicts));
    }
    Ok(table)
}
