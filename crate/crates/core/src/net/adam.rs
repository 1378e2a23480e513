use serde::{Deserialize, Serialize};

use super::layer::Layer;
use super::network::{DenseGrad, Network};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates and step count for one parameter block.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::dim("adam gradient", params.len(), grads.len()));
    }
    if state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::dim("adam state", params.len(), state.m.len()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Adam over every dense layer of a network.
#[derive(Debug, Clone)]
pub struct NetworkAdam {
    cfg: AdamConfig,
    states: Vec<Option<(AdamState, AdamState)>>,
}

impl NetworkAdam {
    pub fn new(net: &Network, cfg: AdamConfig) -> Self {
        let states = net
            .layers()
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => Some((AdamState::new(d.weight.len()), AdamState::new(d.bias.len()))),
                _ => None,
            })
            .collect();
        Self { cfg, states }
    }

    pub fn step(&mut self, net: &mut Network, grads: &[Option<DenseGrad>]) -> Result<()> {
        if grads.len() != self.states.len() {
            return Err(Error::dim("network gradient list", self.states.len(), grads.len()));
        }
        for ((layer, state), grad) in net
            .layers_mut()
            .iter_mut()
            .zip(self.states.iter_mut())
            .zip(grads)
        {
            if let (Some(d), Some((sw, sb)), Some(g)) = (layer.as_dense_mut(), state.as_mut(), grad) {
                adam_step(&mut d.weight, &g.weight, sw, &self.cfg)?;
                adam_step(&mut d.bias, &g.bias, sb, &self.cfg)?;
            }
        }
        Ok(())
    }
}
