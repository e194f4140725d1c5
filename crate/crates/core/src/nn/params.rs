use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{HdaError, Result};

/// Named parameter tensors in deterministic (sorted) order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Arc<Tensor>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.params.insert(name.into(), Arc::new(value));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name).map(|t| t.as_ref())
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name).map(Arc::make_mut)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v.as_ref()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    /// Total number of scalar parameters whose name starts with `prefix`.
    pub fn count_with_prefix(&self, prefix: &str) -> usize {
        self.iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, t)| t.len())
            .sum()
    }

    /// Snapshot of every parameter under `prefix`, for freeze checks.
    pub fn subset(&self, prefix: &str) -> ParamStore {
        ParamStore {
            params: self
                .params
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Records every parameter on `tape`; `trainable(name)` selects those receiving gradients.
    pub fn bind(&self, tape: &mut Tape, trainable: impl Fn(&str) -> bool) -> Binding {
        let vars = self
            .params
            .iter()
            .map(|(k, v)| (k.clone(), tape.param(v.clone(), trainable(k))))
            .collect();
        Binding { vars }
    }
}

/// Parameter name → tape variable for one forward pass.
pub struct Binding {
    vars: HashMap<String, Var>,
}

impl Binding {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| HdaError::Config(format!("missing parameter '{name}'")))
    }

    /// Overrides (or adds) the variable used for `name`.
    pub fn insert(&mut self, name: impl Into<String>, var: Var) {
        self.vars.insert(name.into(), var);
    }

    pub fn try_get(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }

    /// Gradients of every trainable parameter, in sorted name order.
    pub fn collect_grads(
        &self,
        tape: &Tape,
        grads: &mut super::tape::Gradients,
    ) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> = self
            .vars
            .iter()
            .filter(|(_, v)| tape.requires_grad(**v))
            .map(|(k, v)| {
                let g = grads
                    .take(*v)
                    .unwrap_or_else(|| Tensor::zeros(tape.shape(*v)));
                (k.clone(), g)
            })
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }
}
