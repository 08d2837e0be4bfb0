//! TOML run configuration.
//!
//! ```toml
//! [grid]
//! horizon = 1.0
//! steps = 10000
//!
//! [[family.members]]
//! id = "c4"
//! kind = "constant"          # constant | piecewise_constant | regime_switching | mixture
//! variance = 4.0
//!
//! [[family.members]]
//! id = "rs"
//! kind = "regime_switching"
//! states = [1.0, 4.0]
//! switch_prob = 0.1
//! bounds = [0.5, 4.0]        # optional, must enclose the reachable rates
//!
//! [coefficients]
//! name = "gbm"
//! x0 = 1.0
//! params = { mu = 0.05, nu = 0.2 }
//!
//! [functional]
//! target = "state"           # state | driver | qv
//! payoff = "call"            # identity | square | call | put | straddle | constant
//! strike = 1.0
//! scale = 1.0
//!
//! [run]
//! n_paths = 1000
//! master_seed = 42
//! ```
//!
//! The full grammar, including the `integrate`, `validate` and `average`
//! sections, is in the repository README.

use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::Arc;

use qsure::gexpect::{Functional, Target};
use qsure::measures::{MeasureFamily, Member, TimeGrid, VolatilitySpec};
use qsure::sde::{builtin_coefficients, CoefficientSet, Interval, QvMode};
use serde::Deserialize;
use toml::Spanned;

use crate::error::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    grid: Spanned<RawGrid>,
    family: Option<Spanned<RawFamily>>,
    coefficients: Option<Spanned<RawCoefficients>>,
    functional: Option<Spanned<RawFunctional>>,
    run: Spanned<RawRun>,
    integrate: Option<Spanned<RawIntegrate>>,
    validate: Option<Spanned<RawValidate>>,
    average: Option<Spanned<RawAverage>>,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    horizon: f64,
    steps: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFamily {
    members: Vec<Spanned<RawSpec>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    id: Option<String>,
    kind: String,
    variance: Option<f64>,
    breakpoints: Option<Vec<f64>>,
    values: Option<Vec<f64>>,
    states: Option<Vec<f64>>,
    switch_prob: Option<f64>,
    components: Option<Vec<RawSpec>>,
    weight: Option<f64>,
    bounds: Option<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoefficients {
    name: String,
    #[serde(default = "one")]
    x0: f64,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    declared_constant: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFunctional {
    #[serde(default = "state")]
    target: String,
    payoff: String,
    strike: Option<f64>,
    value: Option<f64>,
    #[serde(default = "one")]
    scale: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    #[serde(default)]
    n_paths: u64,
    master_seed: Option<u64>,
    threads: Option<usize>,
    #[serde(default)]
    qv_mode: QvMode,
    #[serde(default)]
    common_random_numbers: bool,
    typical_tolerance: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegrate {
    member: Option<String>,
    #[serde(default = "driver")]
    integrand: String,
    constant: Option<f64>,
    #[serde(default = "twenty")]
    n_max: u32,
    #[serde(default)]
    tolerance: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawValidate {
    domain: [f64; 2],
    #[serde(default = "pairs")]
    n_pairs: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAverage {
    left: String,
    right: String,
    n_paths: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    directory: Option<String>,
}

fn one() -> f64 {
    1.0
}
fn state() -> String {
    "state".into()
}
fn driver() -> String {
    "driver".into()
}
fn twenty() -> u32 {
    20
}
fn pairs() -> usize {
    10_000
}

/// A validated configuration.
pub struct RunConfig {
    pub grid: Arc<TimeGrid<f64>>,
    pub family: Option<MeasureFamily<f64>>,
    pub coefficients: Option<(CoefficientSet<f64>, f64)>,
    pub functional: Option<Functional<f64>>,
    pub n_paths: u64,
    pub master_seed: u64,
    pub threads: Option<usize>,
    pub qv_mode: QvMode,
    pub common_random_numbers: bool,
    pub typical_tolerance: f64,
    pub integrate: IntegrateSection,
    pub validate: Option<ValidateSection>,
    pub average: Option<AverageSection>,
    pub output_dir: Option<String>,
}

pub enum Integrand {
    Driver,
    Constant(f64),
}

pub struct IntegrateSection {
    pub member: Option<String>,
    pub integrand: Integrand,
    pub n_max: u32,
    pub tolerance: f64,
}

pub struct ValidateSection {
    pub domain: Interval<f64>,
    pub n_pairs: usize,
}

pub struct AverageSection {
    pub left: String,
    pub right: String,
    pub n_paths: Option<u64>,
}

/// Resolves byte offsets to 1-based line numbers.
struct Lines<'a>(&'a str);

impl Lines<'_> {
    fn at(&self, span: &Range<usize>) -> usize {
        self.0[..span.start.min(self.0.len())].bytes().filter(|b| *b == b'\n').count() + 1
    }

    fn err(&self, span: &Range<usize>, msg: impl std::fmt::Display) -> CliError {
        CliError::Config(format!("line {}: {msg}", self.at(span)))
    }
}

impl RunConfig {
    /// Parse and validate. `seed_override` replaces `run.master_seed`.
    pub fn parse(src: &str, seed_override: Option<u64>) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(src).map_err(|e| CliError::Config(e.to_string()))?;
        let lines = Lines(src);

        let g = &raw.grid;
        let grid = TimeGrid::new(g.get_ref().horizon, g.get_ref().steps).map_err(|e| lines.err(&g.span(), e))?;

        let family = match &raw.family {
            None => None,
            Some(f) => {
                let mut members = Vec::new();
                for m in &f.get_ref().members {
                    let span = m.span();
                    let id = m.get_ref().id.clone().ok_or_else(|| lines.err(&span, "family member needs an `id`"))?;
                    let spec = build_spec(m.get_ref()).map_err(|e| lines.err(&span, format!("member `{id}`: {e}")))?;
                    members.push(Member::new(id, spec));
                }
                Some(MeasureFamily::new(members).map_err(|e| lines.err(&f.span(), e))?)
            }
        };

        let coefficients = match &raw.coefficients {
            None => None,
            Some(c) => {
                let rc = c.get_ref();
                let mut set = builtin_coefficients(&rc.name, &rc.params).map_err(|e| lines.err(&c.span(), e))?;
                if let Some(k) = rc.declared_constant {
                    if !(k.is_finite() && k >= 0.0) {
                        return Err(lines.err(&c.span(), format!("declared_constant must be finite and >= 0, got {k}")));
                    }
                    set = set.with_declared_constant(k);
                }
                if !rc.x0.is_finite() {
                    return Err(lines.err(&c.span(), "x0 must be finite"));
                }
                Some((set, rc.x0))
            }
        };

        let functional = match &raw.functional {
            None => None,
            Some(f) => Some(build_functional(f.get_ref()).map_err(|e| lines.err(&f.span(), e))?),
        };

        let run = raw.run.get_ref();
        let master_seed = seed_override
            .or(run.master_seed)
            .ok_or_else(|| lines.err(&raw.run.span(), "[run] requires `master_seed` (or pass --seed)"))?;
        if run.threads == Some(0) {
            return Err(lines.err(&raw.run.span(), "threads must be at least 1"));
        }
        let typical_tolerance = run.typical_tolerance.unwrap_or(qsure::patching::DEFAULT_TYPICAL_TOLERANCE);
        if !(typical_tolerance >= 0.0 && typical_tolerance.is_finite()) {
            return Err(lines.err(&raw.run.span(), "typical_tolerance must be finite and >= 0"));
        }

        let integrate = match &raw.integrate {
            None => IntegrateSection { member: None, integrand: Integrand::Driver, n_max: 20, tolerance: 0.0 },
            Some(s) => {
                let ri = s.get_ref();
                let integrand = match (ri.integrand.as_str(), ri.constant) {
                    ("driver", _) => Integrand::Driver,
                    ("constant", Some(c)) if c.is_finite() => Integrand::Constant(c),
                    ("constant", _) => return Err(lines.err(&s.span(), "constant integrand needs a finite `constant`")),
                    (other, _) => {
                        return Err(lines.err(&s.span(), format!("unknown integrand `{other}` (driver | constant)")))
                    }
                };
                if !(2..=62).contains(&ri.n_max) {
                    return Err(lines.err(&s.span(), format!("n_max must be in 2..=62, got {}", ri.n_max)));
                }
                if ri.tolerance.is_nan() || ri.tolerance < 0.0 {
                    return Err(lines.err(&s.span(), "tolerance must be >= 0"));
                }
                IntegrateSection { member: ri.member.clone(), integrand, n_max: ri.n_max, tolerance: ri.tolerance }
            }
        };

        let validate = match &raw.validate {
            None => None,
            Some(v) => {
                let rv = v.get_ref();
                let domain = Interval::new(rv.domain[0], rv.domain[1]).map_err(|e| lines.err(&v.span(), e))?;
                if rv.n_pairs == 0 {
                    return Err(lines.err(&v.span(), "n_pairs must be positive"));
                }
                Some(ValidateSection { domain, n_pairs: rv.n_pairs })
            }
        };

        let average = match &raw.average {
            None => None,
            Some(a) => {
                let ra = a.get_ref();
                if let Some(fam) = &family {
                    for id in [&ra.left, &ra.right] {
                        if fam.get(id).is_none() {
                            return Err(lines.err(&a.span(), format!("[average] names unknown member `{id}`")));
                        }
                    }
                }
                Some(AverageSection { left: ra.left.clone(), right: ra.right.clone(), n_paths: ra.n_paths })
            }
        };

        Ok(Self {
            grid: Arc::new(grid),
            family,
            coefficients,
            functional,
            n_paths: run.n_paths,
            master_seed,
            threads: run.threads,
            qv_mode: run.qv_mode,
            common_random_numbers: run.common_random_numbers,
            typical_tolerance,
            integrate,
            validate,
            average,
            output_dir: raw.output.and_then(|o| o.directory),
        })
    }

    pub fn family(&self) -> Result<&MeasureFamily<f64>, CliError> {
        self.family.as_ref().ok_or_else(|| CliError::Config("this command needs a [family] section".into()))
    }

    pub fn coefficients(&self) -> Result<(&CoefficientSet<f64>, f64), CliError> {
        self.coefficients
            .as_ref()
            .map(|(c, x0)| (c, *x0))
            .ok_or_else(|| CliError::Config("this command needs a [coefficients] section".into()))
    }

    pub fn functional(&self) -> Result<&Functional<f64>, CliError> {
        self.functional.as_ref().ok_or_else(|| CliError::Config("this command needs a [functional] section".into()))
    }
}

fn build_spec(raw: &RawSpec) -> Result<VolatilitySpec<f64>, String> {
    let need = |name: &str, v: Option<&Vec<f64>>| v.cloned().ok_or_else(|| format!("kind `{}` needs `{name}`", raw.kind));
    let spec = match raw.kind.as_str() {
        "constant" => {
            VolatilitySpec::constant(raw.variance.ok_or("kind `constant` needs `variance`")?).map_err(|e| e.to_string())?
        }
        "piecewise_constant" => VolatilitySpec::piecewise_constant(
            need("breakpoints", raw.breakpoints.as_ref())?,
            need("values", raw.values.as_ref())?,
        )
        .map_err(|e| e.to_string())?,
        "regime_switching" => VolatilitySpec::regime_switching(
            need("states", raw.states.as_ref())?,
            raw.switch_prob.ok_or("kind `regime_switching` needs `switch_prob`")?,
        )
        .map_err(|e| e.to_string())?,
        "mixture" => {
            let parts = raw.components.as_ref().ok_or("kind `mixture` needs `components`")?;
            if parts.len() != 2 {
                return Err(format!("a mixture takes exactly two components, got {}", parts.len()));
            }
            if parts.iter().any(|p| p.id.is_some()) {
                return Err("mixture components take no `id`".into());
            }
            VolatilitySpec::mixture(build_spec(&parts[0])?, build_spec(&parts[1])?, raw.weight.unwrap_or(0.5))
                .map_err(|e| e.to_string())?
        }
        other => {
            return Err(format!(
                "unknown kind `{other}` (constant | piecewise_constant | regime_switching | mixture)"
            ))
        }
    };
    match raw.bounds {
        Some([lo, hi]) => spec.with_bounds(lo, hi).map_err(|e| e.to_string()),
        None => Ok(spec),
    }
}

fn build_functional(raw: &RawFunctional) -> Result<Functional<f64>, String> {
    let target = match raw.target.as_str() {
        "state" => Target::State,
        "driver" => Target::Driver,
        "qv" => Target::Qv,
        other => return Err(format!("unknown target `{other}` (state | driver | qv)")),
    };
    if !raw.scale.is_finite() {
        return Err("scale must be finite".into());
    }
    let strike = || raw.strike.filter(|k| k.is_finite()).ok_or(format!("payoff `{}` needs a finite `strike`", raw.payoff));
    let f = match raw.payoff.as_str() {
        "identity" => Functional::new(target, "identity", |x| x),
        "square" => Functional::new(target, "square", |x| x * x),
        "call" => {
            let k = strike()?;
            Functional::new(target, format!("call(K={k})"), move |x: f64| (x - k).max(0.0))
        }
        "put" => {
            let k = strike()?;
            Functional::new(target, format!("put(K={k})"), move |x: f64| (k - x).max(0.0))
        }
        "straddle" => {
            let k = strike()?;
            Functional::new(target, format!("straddle(K={k})"), move |x: f64| (x - k).abs())
        }
        "constant" => {
            let c = raw.value.filter(|c| c.is_finite()).ok_or("payoff `constant` needs a finite `value`")?;
            Functional::new(target, format!("constant({c})"), move |_| c)
        }
        other => return Err(format!("unknown payoff `{other}` (identity | square | call | put | straddle | constant)")),
    };
    Ok(if raw.scale == 1.0 { f } else { f.scaled(raw.scale) })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[grid]
horizon = 1.0
steps = 10

[[family.members]]
id = "c4"
kind = "constant"
variance = 4.0

[run]
n_paths = 3
master_seed = 9
"#;

    #[test]
    fn parses_minimal_config() {
        let cfg = RunConfig::parse(BASE, None).unwrap();
        assert_eq!(cfg.master_seed, 9);
        assert_eq!(cfg.family().unwrap().len(), 1);
        assert_eq!(cfg.grid.steps(), 10);
        assert!(cfg.coefficients().is_err());
    }

    #[test]
    fn seed_override_wins() {
        assert_eq!(RunConfig::parse(BASE, Some(1)).unwrap().master_seed, 1);
    }

    #[test]
    fn missing_seed_is_rejected_with_line() {
        let src = BASE.replace("master_seed = 9\n", "");
        match RunConfig::parse(&src, None) {
            Err(CliError::Config(msg)) => {
                assert!(msg.contains("master_seed"));
                assert!(msg.starts_with("line 11"), "{msg}");
            }
            _ => panic!("expected a config error"),
        }
    }

    #[test]
    fn bad_member_reports_its_line() {
        let src = BASE.replace("variance = 4.0", "variance = -1.0");
        match RunConfig::parse(&src, None) {
            Err(CliError::Config(msg)) => assert!(msg.starts_with("line 6") && msg.contains("c4"), "{msg}"),
            _ => panic!("expected a config error"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let src = BASE.replace("steps = 10", "steps = 10\nstep = 3");
        assert!(matches!(RunConfig::parse(&src, None), Err(CliError::Config(m)) if m.contains("step")));
    }

    #[test]
    fn nested_mixture_and_payoffs() {
        let src = format!(
            "{BASE}\n[[family.members]]\nid = \"avg\"\nkind = \"mixture\"\ncomponents = [{{ kind = \"constant\", variance = 1.0 }}, {{ kind = \"regime_switching\", states = [1.0, 4.0], switch_prob = 0.5 }}]\n\n[functional]\npayoff = \"call\"\nstrike = 1.0\nscale = -1.0\n"
        );
        let cfg = RunConfig::parse(&src, None).unwrap();
        assert_eq!(cfg.family().unwrap().envelope().upper, 4.0);
        assert_eq!(cfg.functional().unwrap().apply(1.5), -0.5);
    }
}
