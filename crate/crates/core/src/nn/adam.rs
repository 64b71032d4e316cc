//! Adam over a declared parameter group, with global-norm clipping.
//!
//! The actor head and the critic (with the shared trunk) are separate
//! groups over one `ParamSet`, so each optimizer only ever touches its own
//! tensors. A group member missing from a gradient set is a dense
//! zero-gradient step: moments decay, bias correction advances.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::params::{ParamId, ParamSet, Tensor};
use crate::nn::tape::Gradients;

/// Scale `grads` so the global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}

#[derive(Debug, Clone)]
pub struct AdamState {
    group: Vec<ParamId>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &ParamSet, group: Vec<ParamId>, lr: f64) -> Self {
        let m = group.iter().map(|&id| vec![0.0; params.get(id).data.len()]).collect();
        let v = group.iter().map(|&id| vec![0.0; params.get(id).data.len()]).collect();
        AdamState {
            group,
            m,
            v,
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One Adam step over the group. NaN/Inf in any relevant gradient
    /// aborts before mutating anything.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients) -> Result<()> {
        for &id in &self.group {
            if let Some(g) = grads.get(id) {
                if let Some(k) = g.iter().position(|v| !v.is_finite()) {
                    return Err(Error::numeric(format!(
                        "non-finite gradient in `{}`[{k}]",
                        params.name(id)
                    )));
                }
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (slot, &id) in self.group.iter().enumerate() {
            let tensor = params.get_mut(id);
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            for k in 0..tensor.data.len() {
                let g = grads.get(id).map(|g| g[k]).unwrap_or(0.0);
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                tensor.data[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    /// Moments and step count as named tensors for checkpointing.
    /// Keys: `{prefix}.m.{param}`, `{prefix}.v.{param}`, `{prefix}.t`.
    pub fn to_named(&self, prefix: &str, params: &ParamSet) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        for (slot, &id) in self.group.iter().enumerate() {
            let name = params.name(id);
            out.insert(format!("{prefix}.m.{name}"), Tensor::vector(self.m[slot].clone()));
            out.insert(format!("{prefix}.v.{name}"), Tensor::vector(self.v[slot].clone()));
        }
        out.insert(format!("{prefix}.t"), Tensor::vector(vec![self.t as f64]));
        out
    }

    pub fn load_named(
        &mut self,
        prefix: &str,
        params: &ParamSet,
        named: &BTreeMap<String, Tensor>,
    ) -> Result<()> {
        for (slot, &id) in self.group.iter().enumerate() {
            let name = params.name(id);
            for (store, key) in [
                (&mut self.m[slot], format!("{prefix}.m.{name}")),
                (&mut self.v[slot], format!("{prefix}.v.{name}")),
            ] {
                let src = named
                    .get(&key)
                    .ok_or_else(|| Error::format(format!("checkpoint missing `{key}`")))?;
                if src.data.len() != store.len() {
                    return Err(Error::format(format!(
                        "checkpoint `{key}`: length {} != {}",
                        src.data.len(),
                        store.len()
                    )));
                }
                store.copy_from_slice(&src.data);
            }
        }
        let tkey = format!("{prefix}.t");
        let t = named
            .get(&tkey)
            .ok_or_else(|| Error::format(format!("checkpoint missing `{tkey}`")))?;
        self.t = t.data.first().copied().unwrap_or(0.0) as u64;
        Ok(())
    }
}
