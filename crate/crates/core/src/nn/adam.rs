use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{dim_err, HdaError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators keyed by parameter name.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, (Tensor, Tensor)>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig) -> Result<Self> {
        if !(config.learning_rate > 0.0) {
            return Err(HdaError::Config(format!(
                "learning rate must be positive, got {}",
                config.learning_rate
            )));
        }
        Ok(OptimizerState {
            config,
            step: 0,
            moments: BTreeMap::new(),
        })
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam step over the named gradients.
///
/// All gradients are validated before any parameter moves, so a non-finite gradient leaves
/// both the parameters and the optimizer state untouched.
pub fn adam_update(
    params: &mut ParamStore,
    grads: &[(String, Tensor)],
    state: &mut OptimizerState,
) -> Result<()> {
    for (name, g) in grads {
        let p = params
            .get(name)
            .ok_or_else(|| HdaError::Config(format!("gradient for unknown parameter '{name}'")))?;
        if p.shape() != g.shape() {
            return dim_err(format!(
                "adam: '{name}' is {:?}, gradient {:?}",
                p.shape(),
                g.shape()
            ));
        }
        if !g.is_finite() {
            return Err(HdaError::Divergence {
                stage: "optimizer".into(),
                epoch: state.step as usize,
                what: format!("gradient for '{name}'"),
            });
        }
    }
    state.step += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        eps,
    } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (name, g) in grads {
        let (m, v) = state
            .moments
            .entry(name.clone())
            .or_insert_with(|| (Tensor::zeros(g.shape()), Tensor::zeros(g.shape())));
        let p = params.get_mut(name).expect("validated above");
        for (((pv, mv), vv), &gv) in p
            .data_mut()
            .iter_mut()
            .zip(m.data_mut())
            .zip(v.data_mut())
            .zip(g.data())
        {
            *mv = beta1 * *mv + (1.0 - beta1) * gv;
            *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
            let mh = *mv / c1;
            let vh = *vv / c2;
            *pv -= learning_rate * mh / (vh.sqrt() + eps);
        }
    }
    Ok(())
}
