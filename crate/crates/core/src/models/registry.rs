use std::collections::BTreeMap;
use std::sync::Arc;

use super::{Circadian, LotkaVolterra};
use crate::error::{Error, Result};
use crate::ode::{check_jacobians, ModelSpec};

/// Number of random points used by the Jacobian self-test on registration.
const SELF_TEST_POINTS: usize = 20;

/// Name → model lookup used by experiment configurations.
#[derive(Clone, Default)]
pub struct ModelRegistry {
    models: BTreeMap<String, ModelSpec>,
}

impl ModelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry holding `lv` and `circadian`.
    pub fn with_builtins() -> Self {
        let mut r = Self::new();
        r.register("lv", Arc::new(LotkaVolterra::default())).expect("builtin lv");
        r.register("circadian", Arc::new(Circadian::default()))
            .expect("builtin circadian");
        r
    }

    /// Adds a model after checking its analytic Jacobians against finite
    /// differences.
    pub fn register(&mut self, name: &str, spec: ModelSpec) -> Result<()> {
        if self.models.contains_key(name) {
            return Err(Error::DuplicateModel(name.to_string()));
        }
        check_jacobians(spec.as_ref(), SELF_TEST_POINTS, 0)?;
        self.models.insert(name.to_string(), spec);
        Ok(())
    }

    pub fn resolve(&self, name: &str) -> Result<ModelSpec> {
        self.models.get(name).cloned().ok_or_else(|| Error::UnknownModel {
            name: name.to_string(),
            known: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.models.keys().cloned().collect()
    }
}
