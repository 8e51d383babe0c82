//! Adadelta with per-group learning-rate multipliers.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::model::{Network, ParamGroup};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdadeltaParams {
    pub rho: f64,
    pub eps: f64,
    /// Multiplier for the depth branch (convolutions and reduction).
    pub depth_mult: f64,
    /// Multiplier for the fully connected head.
    pub fusion_mult: f64,
}

impl Default for AdadeltaParams {
    fn default() -> Self {
        AdadeltaParams {
            rho: 0.9,
            eps: 1e-8,
            depth_mult: 10.0,
            fusion_mult: 1.0,
        }
    }
}

impl AdadeltaParams {
    pub fn multiplier(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Depth => self.depth_mult,
            ParamGroup::Fusion => self.fusion_mult,
        }
    }
}

/// One scalar Adadelta update. Updates both accumulators and returns the
/// raw step `Δ` (before learning rate and multiplier).
#[inline]
pub fn adadelta_delta(sq_grad: &mut f64, sq_update: &mut f64, g: f64, rho: f64, eps: f64) -> f64 {
    *sq_grad = rho * *sq_grad + (1.0 - rho) * g * g;
    let delta = -(math::sqrt(*sq_update + eps) / math::sqrt(*sq_grad + eps)) * g;
    *sq_update = rho * *sq_update + (1.0 - rho) * delta * delta;
    delta
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adadelta {
    pub params: AdadeltaParams,
    sq_grad: Vec<Vec<f64>>,
    sq_update: Vec<Vec<f64>>,
    groups: Vec<ParamGroup>,
}

impl Adadelta {
    pub fn new(net: &Network, params: AdadeltaParams) -> Self {
        let tensors = net.tensors();
        Adadelta {
            params,
            sq_grad: tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
            sq_update: tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
            groups: net.param_specs().into_iter().map(|s| s.group).collect(),
        }
    }

    /// Zeroes both accumulators.
    pub fn reset(&mut self) {
        for v in self.sq_grad.iter_mut().chain(&mut self.sq_update) {
            v.fill(0.0);
        }
    }

    pub fn sq_grad(&self) -> &[Vec<f64>] {
        &self.sq_grad
    }

    pub fn sq_update(&self) -> &[Vec<f64>] {
        &self.sq_update
    }

    /// Applies `lr × multiplier(group) × Δ` to every parameter of `net`.
    pub fn step(&mut self, net: &mut Network, grads: &Network, lr: f64) {
        let AdadeltaParams { rho, eps, .. } = self.params;
        let params = net.tensors_mut();
        for (i, (w, g)) in params.into_iter().zip(grads.tensors()).enumerate() {
            let scale = lr * self.params.multiplier(self.groups[i]);
            let (eg, ex) = (&mut self.sq_grad[i], &mut self.sq_update[i]);
            for j in 0..w.len() {
                let d = adadelta_delta(&mut eg[j], &mut ex[j], g[j], rho, eps);
                w[j] += scale * d;
            }
        }
    }
}
