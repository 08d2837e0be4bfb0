use std::collections::BTreeSet;

use serde::Serialize;

use super::spec::{VarianceBounds, VolatilitySpec};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Member<F> {
    pub id: String,
    pub spec: VolatilitySpec<F>,
}

impl<F> Member<F> {
    pub fn new(id: impl Into<String>, spec: VolatilitySpec<F>) -> Self {
        Self { id: id.into(), spec }
    }
}

/// A finite, ordered family of measures. Order matters: it is the
/// tie-break order for worst-case aggregation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureFamily<F> {
    members: Vec<Member<F>>,
    envelope: VarianceBounds<F>,
}

impl<F: Real> MeasureFamily<F> {
    pub fn new(members: Vec<Member<F>>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::InvalidFamily("family must have at least one member".into()));
        };
        let mut seen = BTreeSet::new();
        for m in &members {
            if m.id.is_empty() {
                return Err(Error::InvalidFamily("member ids must be non-empty".into()));
            }
            if !seen.insert(m.id.as_str()) {
                return Err(Error::InvalidFamily(format!("duplicate member id `{}`", m.id)));
            }
        }
        let envelope = members
            .iter()
            .skip(1)
            .fold(first.spec.bounds(), |acc, m| acc.envelope(m.spec.bounds()));
        Ok(Self { members, envelope })
    }

    pub fn members(&self) -> &[Member<F>] {
        &self.members
    }

    pub fn envelope(&self) -> VarianceBounds<F> {
        self.envelope
    }

    pub fn get(&self, id: &str) -> Option<&Member<F>> {
        self.members.iter().find(|m| m.id == id)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}
