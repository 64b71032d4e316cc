//! Named parameter tensors shared by the actor, critic, and their targets.
//!
//! Parameters live in a `ParamSet` and are addressed by `ParamId`, a dense
//! index assigned at registration. Names are stable strings used for
//! checkpoints and for pairing online/target sets in `soft_update`.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Row-major float64 tensor, rank 1 or 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Shape,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            data: vec![0.0; shape.len()],
            shape,
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: Shape::Vector(data.len()),
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::config(format!(
                "matrix data length {} != {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: Shape::Matrix(rows, cols),
            data,
        })
    }

    pub fn rows(&self) -> usize {
        match self.shape {
            Shape::Vector(n) => n,
            Shape::Matrix(r, _) => r,
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape {
            Shape::Vector(_) => 1,
            Shape::Matrix(_, c) => c,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    by_name: BTreeMap<String, ParamId>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    fn register(&mut self, name: &str, tensor: Tensor) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::config(format!("duplicate parameter `{name}`")));
        }
        let id = ParamId(self.tensors.len());
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    /// Matrix initialized uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), fan_in = cols.
    pub fn add_matrix(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        rng: &mut impl Rng,
    ) -> Result<ParamId> {
        if rows == 0 || cols == 0 {
            return Err(Error::config(format!("parameter `{name}`: zero dimension")));
        }
        let bound = 1.0 / (cols as f64).sqrt();
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        self.register(name, Tensor::matrix(rows, cols, data)?)
    }

    /// Bias vector initialized to a constant (zero except LSTM forget gates).
    pub fn add_vector(&mut self, name: &str, len: usize, fill: f64) -> Result<ParamId> {
        if len == 0 {
            return Err(Error::config(format!("parameter `{name}`: zero dimension")));
        }
        self.register(name, Tensor::vector(vec![fill; len]))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    /// `target ← tau*online + (1-tau)*target`, elementwise, matched by name.
    pub fn soft_update_from(&mut self, online: &ParamSet, tau: f64) -> Result<()> {
        if !(0.0 < tau && tau <= 1.0) {
            return Err(Error::config(format!("soft update tau {tau} out of (0, 1]")));
        }
        if self.names != online.names {
            return Err(Error::config("soft update: parameter sets differ by name"));
        }
        for (t, o) in self.tensors.iter_mut().zip(&online.tensors) {
            if t.shape != o.shape {
                return Err(Error::config(format!(
                    "soft update: shape mismatch on some parameter ({:?} vs {:?})",
                    t.shape, o.shape
                )));
            }
            for (tv, ov) in t.data.iter_mut().zip(&o.data) {
                *tv = tau * *ov + (1.0 - tau) * *tv;
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Export as name → tensor, the checkpoint-facing view.
    pub fn to_named(&self) -> BTreeMap<String, Tensor> {
        self.by_name
            .iter()
            .map(|(name, id)| (name.clone(), self.tensors[id.0].clone()))
            .collect()
    }

    /// Overwrite values from a named map; every parameter must be present
    /// with a matching shape. Extra map entries are ignored.
    pub fn load_named(&mut self, named: &BTreeMap<String, Tensor>) -> Result<()> {
        for (name, id) in &self.by_name {
            let src = named
                .get(name)
                .ok_or_else(|| Error::format(format!("checkpoint missing tensor `{name}`")))?;
            let dst = &mut self.tensors[id.0];
            if src.shape != dst.shape {
                return Err(Error::format(format!(
                    "checkpoint tensor `{name}`: shape {:?} != expected {:?}",
                    src.shape, dst.shape
                )));
            }
            dst.data.copy_from_slice(&src.data);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::{stream, Tag};

    fn small_set(seed: u64) -> ParamSet {
        let mut rng = stream(seed, Tag::ParamInit, &[0]);
        let mut p = ParamSet::new();
        p.add_matrix("w", 3, 4, &mut rng).unwrap();
        p.add_vector("b", 3, 0.0).unwrap();
        p
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let p = small_set(7);
        let w = p.get(p.id("w").unwrap());
        let bound = 1.0 / 2.0;
        assert!(w.data.iter().all(|v| v.abs() < bound));
        let b = p.get(p.id("b").unwrap());
        assert!(b.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = small_set(11);
        let b = small_set(11);
        let c = small_set(12);
        let wid = a.id("w").unwrap();
        assert_eq!(a.get(wid).data, b.get(wid).data);
        assert_ne!(a.get(wid).data, c.get(wid).data);
    }

    #[test]
    fn soft_update_single_step_is_exact() {
        let mut online = ParamSet::new();
        online.add_vector("v", 4, 1.0).unwrap();
        let mut target = ParamSet::new();
        target.add_vector("v", 4, 0.0).unwrap();
        let tau = 0.001;
        target.soft_update_from(&online, tau).unwrap();
        let got = target.get(target.id("v").unwrap()).data[0];
        assert_eq!(got, tau * 1.0 + (1.0 - tau) * 0.0);
    }

    #[test]
    fn soft_update_iterated_matches_closed_form() {
        let mut online = ParamSet::new();
        online.add_vector("v", 1, 1.0).unwrap();
        let mut target = ParamSet::new();
        target.add_vector("v", 1, 0.0).unwrap();
        let tau = 0.05;
        for _ in 0..200 {
            target.soft_update_from(&online, tau).unwrap();
        }
        let want = 1.0 - (1.0 - tau).powi(200);
        let got = target.get(target.id("v").unwrap()).data[0];
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn mismatched_sets_refuse_soft_update() {
        let online = small_set(1);
        let mut other = ParamSet::new();
        other.add_vector("x", 2, 0.0).unwrap();
        assert!(other.soft_update_from(&online, 0.5).is_err());
    }

    #[test]
    fn named_round_trip_restores_values() {
        let p = small_set(3);
        let named = p.to_named();
        let mut q = small_set(99);
        q.load_named(&named).unwrap();
        let wid = q.id("w").unwrap();
        assert_eq!(q.get(wid).data, p.get(p.id("w").unwrap()).data);
    }
}
