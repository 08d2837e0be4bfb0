//! Numerical falsifiers for the coefficient classes. A pass means no
//! violation was found on the sampled points at the given tolerance.

use std::collections::BTreeMap;

use serde::Serialize;

use super::coefficients::{CoefficientSet, RegularityClass};
use crate::error::{Error, Result};
use crate::measures::PathStream;
use crate::scalar::Real;

pub const DEFAULT_TOLERANCE: f64 = 0.01;

/// Depth of the deterministic near-endpoint probes: separations down to
/// `width * 4^-ENDPOINT_PROBES`.
const ENDPOINT_PROBES: i32 = 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval<F> {
    pub lo: F,
    pub hi: F,
}

impl<F: Real> Interval<F> {
    pub fn new(lo: F, hi: F) -> Result<Self> {
        if lo.is_finite() && hi.is_finite() && lo < hi {
            Ok(Self { lo, hi })
        } else {
            Err(Error::InvalidParameter(format!("domain [{lo}, {hi}] must be a finite non-empty interval")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation<F> {
    pub check: String,
    pub x: F,
    pub y: F,
    /// Observed value of the checked quantity.
    pub observed: F,
    /// What it was allowed to be.
    pub allowed: F,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport<F> {
    pub class: RegularityClass<F>,
    pub estimated: BTreeMap<String, F>,
    pub sample_count: usize,
    pub violations: usize,
    pub worst: Option<Violation<F>>,
    pub sub_verdicts: BTreeMap<String, bool>,
    pub pass: bool,
}

/// Collects violations and keeps the one with the largest excess.
struct Tally<F> {
    violations: usize,
    worst: Option<(F, Violation<F>)>,
    per_check: BTreeMap<String, bool>,
}

impl<F: Real> Tally<F> {
    fn new(checks: &[&str]) -> Self {
        Self {
            violations: 0,
            worst: None,
            per_check: checks.iter().map(|c| ((*c).to_owned(), true)).collect(),
        }
    }

    fn record(&mut self, check: &str, x: F, y: F, observed: F, allowed: F) {
        if observed <= allowed {
            return;
        }
        self.violations += 1;
        self.per_check.insert(check.to_owned(), false);
        let excess = observed - allowed;
        if self.worst.as_ref().is_none_or(|(w, _)| excess > *w || excess.is_nan()) {
            self.worst = Some((excess, Violation { check: check.to_owned(), x, y, observed, allowed }));
        }
    }

    fn finish(self, class: RegularityClass<F>, estimated: BTreeMap<String, F>, sample_count: usize) -> RegularityReport<F> {
        RegularityReport {
            class,
            estimated,
            sample_count,
            pass: self.violations == 0,
            violations: self.violations,
            worst: self.worst.map(|(_, v)| v),
            sub_verdicts: self.per_check,
        }
    }
}

/// Sample `(t, x, y)` triples with `x != y`: uniform pairs, close pairs at
/// log-uniform separations, and fixed probes closing in on both endpoints.
fn sample_pairs<F: Real>(domain: Interval<F>, n_pairs: usize, stream: &mut PathStream) -> Vec<(F, F, F)> {
    let lo = domain.lo.approx_f64();
    let hi = domain.hi.approx_f64();
    let width = hi - lo;
    let mut out = Vec::with_capacity(n_pairs + 2 * ENDPOINT_PROBES as usize);
    for j in 1..=ENDPOINT_PROBES {
        let d = width * 4f64.powi(-j);
        out.push((0.0, lo + d, lo + 4.0 * d));
        out.push((0.0, hi - 4.0 * d, hi - d));
    }
    for i in 0..n_pairs {
        let t = stream.uniform();
        let x = lo + width * stream.uniform();
        let y = if i % 2 == 0 {
            lo + width * stream.uniform()
        } else {
            let sep = width * 2f64.powf(-30.0 * stream.uniform());
            let y = if stream.uniform() < 0.5 { x + sep } else { x - sep };
            y.clamp(lo, hi)
        };
        if x != y {
            out.push((t, x, y));
        }
    }
    out.into_iter().map(|(t, x, y)| (F::lit(t), F::lit(x), F::lit(y))).collect()
}

fn check_constant<F: Real>(k: F) -> Result<F> {
    if k.is_finite() && k >= F::zero() {
        Ok(k)
    } else {
        Err(Error::InvalidParameter(format!("declared constant must be finite and non-negative, got {k}")))
    }
}

/// Sup of `|f(x) - f(y)| / |x - y|` for each of `b`, `h`, `sigma`; every
/// ratio must stay below `declared_k * (1 + tolerance)`.
pub fn check_lipschitz<F: Real>(
    coeffs: &CoefficientSet<F>,
    domain: Interval<F>,
    n_pairs: usize,
    declared_k: F,
    stream: &mut PathStream,
) -> Result<RegularityReport<F>> {
    let declared_k = check_constant(declared_k)?;
    if n_pairs == 0 {
        return Err(Error::InvalidParameter("n_pairs must be at least 1".into()));
    }
    let allowed = declared_k * (F::one() + F::lit(DEFAULT_TOLERANCE));
    let fns = [("b", &coeffs.drift), ("h", &coeffs.qv_drift), ("sigma", &coeffs.diffusion)];
    let mut tally = Tally::new(&["lipschitz_b", "lipschitz_h", "lipschitz_sigma"]);
    let mut est = [F::zero(); 3];
    let mut growth = [F::zero(); 3];
    let pairs = sample_pairs(domain, n_pairs, stream);
    for &(t, x, y) in &pairs {
        for (i, (label, f)) in fns.iter().enumerate() {
            let (fx, fy) = (f(t, x), f(t, y));
            let ratio = (fx - fy).abs() / (x - y).abs();
            est[i] = est[i].max(ratio);
            growth[i] = growth[i].max(fx.abs() / (F::one() + x.abs()));
            tally.record(&format!("lipschitz_{label}"), x, y, ratio, allowed);
        }
    }
    let mut estimated = BTreeMap::new();
    for (i, (label, _)) in fns.iter().enumerate() {
        estimated.insert(format!("lipschitz_{label}"), est[i]);
        estimated.insert(format!("growth_{label}"), growth[i]);
    }
    estimated.insert("declared_k".into(), declared_k);
    Ok(tally.finish(coeffs.class, estimated, pairs.len()))
}

/// Modulus `rho(u) = u^alpha` for the diffusion. Passes iff the integral of
/// `rho^-2` diverges at 0 (`alpha >= 1/2`) and every sampled pair obeys
/// `|sigma(x) - sigma(y)| <= rho(|x - y|) (1 + tolerance)`.
pub fn check_yamada_watanabe<F: Real>(
    coeffs: &CoefficientSet<F>,
    alpha: F,
    domain: Interval<F>,
    n_pairs: usize,
    stream: &mut PathStream,
) -> Result<RegularityReport<F>> {
    if !alpha.is_finite() || alpha <= F::zero() {
        return Err(Error::InvalidParameter(format!("Yamada-Watanabe exponent must be positive, got {alpha}")));
    }
    if n_pairs == 0 {
        return Err(Error::InvalidParameter("n_pairs must be at least 1".into()));
    }
    let mut tally = Tally::new(&["divergence", "modulus"]);
    let half = F::lit(0.5);
    // int_0^eps u^(-2 alpha) du diverges iff 2 alpha >= 1
    tally.record("divergence", F::zero(), F::zero(), half, alpha);
    let slack = F::one() + F::lit(DEFAULT_TOLERANCE);
    let mut holder = F::zero();
    let pairs = sample_pairs(domain, n_pairs, stream);
    for &(t, x, y) in &pairs {
        let diff = ((coeffs.diffusion)(t, x) - (coeffs.diffusion)(t, y)).abs();
        let rho = (x - y).abs().powf(alpha);
        holder = holder.max(diff / rho);
        tally.record("modulus", x, y, diff, rho * slack);
    }
    let mut estimated = BTreeMap::new();
    estimated.insert("alpha".into(), alpha);
    estimated.insert("holder_constant".into(), holder);
    Ok(tally.finish(RegularityClass::YamadaWatanabe { alpha }, estimated, pairs.len()))
}

/// Monotone form `2 (x - y)(b(x) - b(y)) + (sigma(x) - sigma(y))^2 <= K |x - y|^2`
/// on pairs and coercivity `2 x b(x) + sigma(x)^2 <= K (1 + x^2)` on points,
/// both with `K * (1 + tolerance)`.
pub fn check_monotone<F: Real>(
    coeffs: &CoefficientSet<F>,
    domain: Interval<F>,
    n_pairs: usize,
    declared_k: F,
    stream: &mut PathStream,
) -> Result<RegularityReport<F>> {
    let declared_k = check_constant(declared_k)?;
    if n_pairs == 0 {
        return Err(Error::InvalidParameter("n_pairs must be at least 1".into()));
    }
    let k = declared_k * (F::one() + F::lit(DEFAULT_TOLERANCE));
    let two = F::lit(2.0);
    let b = &coeffs.drift;
    let s = &coeffs.diffusion;
    let mut tally = Tally::new(&["monotone", "coercive"]);
    let mut mono = F::neg_infinity();
    let mut coer = F::neg_infinity();
    let pairs = sample_pairs(domain, n_pairs, stream);
    for &(t, x, y) in &pairs {
        let dx = x - y;
        let ds = s(t, x) - s(t, y);
        let form = two * dx * (b(t, x) - b(t, y)) + ds * ds;
        mono = mono.max(form / (dx * dx));
        tally.record("monotone", x, y, form, k * dx * dx);
        for z in [x, y] {
            let sz = s(t, z);
            let c = two * z * b(t, z) + sz * sz;
            let scale = F::one() + z * z;
            coer = coer.max(c / scale);
            tally.record("coercive", z, z, c, k * scale);
        }
    }
    let mut estimated = BTreeMap::new();
    estimated.insert("monotone_k".into(), mono);
    estimated.insert("coercive_k".into(), coer);
    estimated.insert("declared_k".into(), declared_k);
    Ok(tally.finish(coeffs.class, estimated, pairs.len()))
}

/// Run the check matching the coefficient class. Lipschitz, stochastic-vol
/// and monotone classes need a declared constant on the coefficient set.
pub fn validate<F: Real>(
    coeffs: &CoefficientSet<F>,
    domain: Interval<F>,
    n_pairs: usize,
    stream: &mut PathStream,
) -> Result<RegularityReport<F>> {
    let declared = || {
        coeffs.declared_constant.ok_or_else(|| {
            Error::InvalidParameter(format!("coefficient set `{}` declares no constant to check against", coeffs.name))
        })
    };
    match coeffs.class {
        RegularityClass::Lipschitz | RegularityClass::StochVol => {
            check_lipschitz(coeffs, domain, n_pairs, declared()?, stream)
        }
        RegularityClass::YamadaWatanabe { alpha } => check_yamada_watanabe(coeffs, alpha, domain, n_pairs, stream),
        RegularityClass::Monotone => check_monotone(coeffs, domain, n_pairs, declared()?, stream),
    }
}
