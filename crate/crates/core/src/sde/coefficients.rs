use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// `(t, x) -> rate`.
pub type CoefficientFn<F> = Arc<dyn Fn(F, F) -> F + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum RegularityClass<F> {
    Lipschitz,
    YamadaWatanabe { alpha: F },
    Monotone,
    StochVol,
}

/// Drift `b`, quadratic-variation drift `h` and diffusion `sigma` of
/// `dX = b dt + h d<B> + sigma dB`.
#[derive(Clone)]
pub struct CoefficientSet<F> {
    pub name: String,
    pub drift: CoefficientFn<F>,
    pub qv_drift: CoefficientFn<F>,
    pub diffusion: CoefficientFn<F>,
    pub class: RegularityClass<F>,
    pub params: BTreeMap<String, F>,
    /// Constant the validators hold the coefficients to: the Lipschitz
    /// constant, or `K` of the monotone and coercivity forms.
    pub declared_constant: Option<F>,
}

impl<F: fmt::Debug> fmt::Debug for CoefficientSet<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("name", &self.name)
            .field("class", &self.class)
            .field("params", &self.params)
            .field("declared_constant", &self.declared_constant)
            .finish_non_exhaustive()
    }
}

impl<F: Real> CoefficientSet<F> {
    pub fn new(
        name: impl Into<String>,
        drift: impl Fn(F, F) -> F + Send + Sync + 'static,
        qv_drift: impl Fn(F, F) -> F + Send + Sync + 'static,
        diffusion: impl Fn(F, F) -> F + Send + Sync + 'static,
        class: RegularityClass<F>,
    ) -> Self {
        Self {
            name: name.into(),
            drift: Arc::new(drift),
            qv_drift: Arc::new(qv_drift),
            diffusion: Arc::new(diffusion),
            class,
            params: BTreeMap::new(),
            declared_constant: None,
        }
    }

    pub fn with_declared_constant(mut self, k: F) -> Self {
        self.declared_constant = Some(k);
        self
    }

    pub fn with_param(mut self, key: &str, value: F) -> Self {
        self.params.insert(key.to_owned(), value);
        self
    }

    /// All-zero coefficients.
    pub fn zero() -> Self {
        Self::new("zero", |_, _| F::zero(), |_, _| F::zero(), |_, _| F::zero(), RegularityClass::Lipschitz)
            .with_declared_constant(F::zero())
    }
}

pub const BUILTIN_NAMES: [&str; 5] = ["gbm", "qv_drift_gbm", "sqrt_diffusion", "cubic_monotone", "stochvol"];

fn take_params<F: Real>(
    name: &str,
    given: &BTreeMap<String, F>,
    defaults: &[(&str, f64)],
) -> Result<BTreeMap<String, F>> {
    if let Some(bad) = given.keys().find(|k| !defaults.iter().any(|(d, _)| d == k)) {
        let allowed: Vec<_> = defaults.iter().map(|(d, _)| *d).collect();
        return Err(Error::InvalidParameter(format!(
            "`{bad}` is not a parameter of `{name}` (expected one of {allowed:?})"
        )));
    }
    let mut out = BTreeMap::new();
    for (key, default) in defaults {
        let v = given.get(*key).copied().unwrap_or_else(|| F::lit(*default));
        if !v.is_finite() {
            return Err(Error::InvalidParameter(format!("`{name}.{key}` must be finite")));
        }
        out.insert((*key).to_owned(), v);
    }
    Ok(out)
}

/// Named parametric coefficient families.
///
/// | name | b | h | sigma | class |
/// |---|---|---|---|---|
/// | `gbm` (mu=0.05, nu=0.2) | mu x | 0 | nu x | Lipschitz |
/// | `qv_drift_gbm` (mu=0.05, eta=0.5, nu=0.2) | mu x | eta x | nu x | Lipschitz |
/// | `sqrt_diffusion` (alpha=0.5) | 0 | 0 | \|x\|^alpha | Yamada-Watanabe(alpha) |
/// | `cubic_monotone` (c=1, nu=1) | -c x^3 | 0 | nu | Monotone |
/// | `stochvol` (mu=0.05) | mu x | 0 | x | StochVol |
///
/// Under `stochvol` the volatility is carried entirely by the driver's
/// variance record.
pub fn builtin_coefficients<F: Real>(name: &str, params: &BTreeMap<String, F>) -> Result<CoefficientSet<F>> {
    let set = match name {
        "gbm" => {
            let p = take_params(name, params, &[("mu", 0.05), ("nu", 0.2)])?;
            let (mu, nu) = (p["mu"], p["nu"]);
            CoefficientSet::new(name, move |_, x| mu * x, |_, _| F::zero(), move |_, x| nu * x, RegularityClass::Lipschitz)
                .with_declared_constant(mu.abs().max(nu.abs()))
                .with_params(p)
        }
        "qv_drift_gbm" => {
            let p = take_params(name, params, &[("mu", 0.05), ("eta", 0.5), ("nu", 0.2)])?;
            let (mu, eta, nu) = (p["mu"], p["eta"], p["nu"]);
            CoefficientSet::new(name, move |_, x| mu * x, move |_, x| eta * x, move |_, x| nu * x, RegularityClass::Lipschitz)
                .with_declared_constant(mu.abs().max(eta.abs()).max(nu.abs()))
                .with_params(p)
        }
        "sqrt_diffusion" => {
            let p = take_params(name, params, &[("alpha", 0.5)])?;
            let alpha = p["alpha"];
            CoefficientSet::new(
                name,
                |_, _| F::zero(),
                |_, _| F::zero(),
                move |_, x: F| x.abs().powf(alpha),
                RegularityClass::YamadaWatanabe { alpha },
            )
            .with_params(p)
        }
        "cubic_monotone" => {
            let p = take_params(name, params, &[("c", 1.0), ("nu", 1.0)])?;
            let (c, nu) = (p["c"], p["nu"]);
            if c < F::zero() {
                return Err(Error::InvalidParameter("`cubic_monotone.c` must be non-negative".into()));
            }
            CoefficientSet::new(name, move |_, x| -c * x * x * x, |_, _| F::zero(), move |_, _| nu, RegularityClass::Monotone)
                .with_declared_constant(nu * nu)
                .with_params(p)
        }
        "stochvol" => {
            let p = take_params(name, params, &[("mu", 0.05)])?;
            let mu = p["mu"];
            CoefficientSet::new(name, move |_, x| mu * x, |_, _| F::zero(), |_, x| x, RegularityClass::StochVol)
                .with_declared_constant(mu.abs().max(F::one()))
                .with_params(p)
        }
        other => return Err(Error::UnknownCoefficients(other.to_owned())),
    };
    Ok(set)
}

impl<F: Real> CoefficientSet<F> {
    fn with_params(mut self, params: BTreeMap<String, F>) -> Self {
        self.params = params;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
        kv.iter().map(|(k, v)| ((*k).to_owned(), *v)).collect()
    }

    #[test]
    fn gbm_lookup() {
        let c = builtin_coefficients("gbm", &params(&[("mu", 0.05), ("nu", 0.2)])).unwrap();
        assert_eq!((c.drift)(0.0, 2.0), 0.1);
        assert_eq!((c.qv_drift)(0.3, 2.0), 0.0);
        assert_eq!((c.diffusion)(0.0, 2.0), 0.4);
        assert_eq!(c.class, RegularityClass::Lipschitz);
        assert_eq!(c.declared_constant, Some(0.2));
    }

    #[test]
    fn stochvol_diffusion_is_identity() {
        let c = builtin_coefficients("stochvol", &params(&[("mu", 0.05)])).unwrap();
        assert_eq!((c.diffusion)(0.7, 1.3), 1.3);
        assert_eq!(c.class, RegularityClass::StochVol);
    }

    #[test]
    fn sqrt_diffusion_class() {
        let c = builtin_coefficients("sqrt_diffusion", &params(&[("alpha", 0.5)])).unwrap();
        assert_eq!((c.diffusion)(0.0, 4.0), 2.0);
        assert_eq!((c.diffusion)(0.0, -9.0), 3.0);
        assert_eq!(c.class, RegularityClass::YamadaWatanabe { alpha: 0.5 });
    }

    #[test]
    fn qv_drift_channel_is_nonzero() {
        let c = builtin_coefficients::<f64>("qv_drift_gbm", &BTreeMap::new()).unwrap();
        assert_eq!((c.qv_drift)(0.0, 2.0), 1.0);
    }

    #[test]
    fn unknown_name_and_param() {
        assert!(matches!(
            builtin_coefficients::<f64>("heston", &BTreeMap::new()),
            Err(Error::UnknownCoefficients(_))
        ));
        assert!(builtin_coefficients("gbm", &params(&[("sigma", 0.2)])).is_err());
    }

    #[test]
    fn every_builtin_resolves() {
        for name in BUILTIN_NAMES {
            let c = builtin_coefficients::<f32>(name, &BTreeMap::new()).unwrap();
            assert_eq!(c.name, name);
        }
    }
}
