//! Reverse-mode differentiation over a fixed-topology tape.
//!
//! A `Tape` records vector-valued primitive ops during a forward pass and
//! replays them backwards once to produce parameter gradients. There is no
//! general graph machinery: the networks here are statically known, and a
//! tape spanning an unrolled episode is how BPTT is expressed.
//!
//! Tapes are single-use. They borrow the `ParamSet` they were built
//! against, so parameters cannot be updated while a tape is alive.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::act::{softmax, ActKind};
use crate::nn::params::{ParamId, ParamSet, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf { watched: bool },
    ParamVec(ParamId),
    MatVec { w: ParamId, x: usize },
    Add(usize, usize),
    Mul(usize, usize),
    Act { x: usize, kind: ActKind },
    Softmax { x: usize },
    Dot(usize, usize),
    Concat(Vec<usize>),
}

struct Node {
    op: Op,
    val: Vec<f64>,
}

/// Accumulated dLoss/dθ keyed by parameter, plus adjoints of watched leaves.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    by_param: BTreeMap<ParamId, Vec<f64>>,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.by_param.get(&id).map(|v| v.as_slice())
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.by_param.iter().map(|(id, g)| (*id, g.as_slice()))
    }

    fn accumulate(&mut self, id: ParamId, len: usize) -> &mut Vec<f64> {
        self.by_param.entry(id).or_insert_with(|| vec![0.0; len])
    }

    /// Elementwise sum, used to reduce per-sample gradients in fixed order.
    pub fn add_assign(&mut self, other: &Gradients) {
        for (id, g) in &other.by_param {
            let acc = self.by_param.entry(*id).or_insert_with(|| vec![0.0; g.len()]);
            debug_assert_eq!(acc.len(), g.len());
            for (a, b) in acc.iter_mut().zip(g) {
                *a += b;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.by_param.values_mut() {
            for v in g.iter_mut() {
                *v *= factor;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.by_param
            .values()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.by_param
            .values()
            .all(|g| g.iter().all(|v| v.is_finite()))
    }

    pub fn is_empty(&self) -> bool {
        self.by_param.is_empty()
    }
}

/// Result of one backward sweep.
#[derive(Debug)]
pub struct Backprop {
    pub grads: Gradients,
    watched: BTreeMap<usize, Vec<f64>>,
}

impl Backprop {
    /// Adjoint of a leaf created with `watched_leaf`.
    pub fn watched(&self, id: NodeId) -> Option<&[f64]> {
        self.watched.get(&id.0).map(|v| v.as_slice())
    }
}

pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    spent: bool,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            spent: false,
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    fn push(&mut self, op: Op, val: Vec<f64>) -> NodeId {
        self.nodes.push(Node { op, val });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].val
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].val.len(), 1);
        self.nodes[id.0].val[0]
    }

    pub fn leaf(&mut self, values: &[f64]) -> NodeId {
        self.push(Op::Leaf { watched: false }, values.to_vec())
    }

    /// Leaf whose adjoint is retained by `backward`, e.g. an action input
    /// when the policy update needs dQ/da.
    pub fn watched_leaf(&mut self, values: &[f64]) -> NodeId {
        self.push(Op::Leaf { watched: true }, values.to_vec())
    }

    pub fn param_vec(&mut self, id: ParamId) -> Result<NodeId> {
        let t = self.params.get(id);
        match t.shape {
            Shape::Vector(_) => Ok(self.push(Op::ParamVec(id), t.data.clone())),
            Shape::Matrix(..) => Err(Error::config(format!(
                "parameter `{}` is a matrix, expected vector",
                self.params.name(id)
            ))),
        }
    }

    pub fn matvec(&mut self, w: ParamId, x: NodeId) -> Result<NodeId> {
        let t = self.params.get(w);
        let Shape::Matrix(rows, cols) = t.shape else {
            return Err(Error::config(format!(
                "parameter `{}` is a vector, expected matrix",
                self.params.name(w)
            )));
        };
        let xv = &self.nodes[x.0].val;
        if xv.len() != cols {
            return Err(Error::config(format!(
                "matvec `{}`: input dim {} != cols {cols}",
                self.params.name(w),
                xv.len()
            )));
        }
        let mut out = vec![0.0; rows];
        for i in 0..rows {
            let row = &t.data[i * cols..(i + 1) * cols];
            out[i] = row.iter().zip(xv).map(|(w, x)| w * x).sum();
        }
        Ok(self.push(Op::MatVec { w, x: x.0 }, out))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (&self.nodes[a.0].val, &self.nodes[b.0].val);
        if av.len() != bv.len() {
            return Err(Error::config(format!(
                "add: dim {} != {}",
                av.len(),
                bv.len()
            )));
        }
        let out: Vec<f64> = av.iter().zip(bv).map(|(x, y)| x + y).collect();
        Ok(self.push(Op::Add(a.0, b.0), out))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (&self.nodes[a.0].val, &self.nodes[b.0].val);
        if av.len() != bv.len() {
            return Err(Error::config(format!(
                "mul: dim {} != {}",
                av.len(),
                bv.len()
            )));
        }
        let out: Vec<f64> = av.iter().zip(bv).map(|(x, y)| x * y).collect();
        Ok(self.push(Op::Mul(a.0, b.0), out))
    }

    pub fn activation(&mut self, x: NodeId, kind: ActKind) -> NodeId {
        let out: Vec<f64> = self.nodes[x.0].val.iter().map(|&v| kind.apply(v)).collect();
        self.push(Op::Act { x: x.0, kind }, out)
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let out = softmax(&self.nodes[x.0].val);
        self.push(Op::Softmax { x: x.0 }, out)
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (&self.nodes[a.0].val, &self.nodes[b.0].val);
        if av.len() != bv.len() {
            return Err(Error::config(format!(
                "dot: dim {} != {}",
                av.len(),
                bv.len()
            )));
        }
        let out = av.iter().zip(bv).map(|(x, y)| x * y).sum();
        Ok(self.push(Op::Dot(a.0, b.0), vec![out]))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut out = Vec::new();
        for p in parts {
            out.extend_from_slice(&self.nodes[p.0].val);
        }
        self.push(Op::Concat(parts.iter().map(|p| p.0).collect()), out)
    }

    /// Replay the tape in reverse from `root`, seeded with dLoss/droot.
    ///
    /// Consumes the tape's usefulness: a second call is a usage error.
    pub fn backward(&mut self, root: NodeId, seed: &[f64]) -> Result<Backprop> {
        if self.spent {
            return Err(Error::usage("tape already replayed"));
        }
        self.spent = true;
        if self.nodes.is_empty() {
            return Err(Error::usage("backward on empty tape"));
        }
        if seed.len() != self.nodes[root.0].val.len() {
            return Err(Error::config(format!(
                "backward seed dim {} != root dim {}",
                seed.len(),
                self.nodes[root.0].val.len()
            )));
        }

        let mut adj: Vec<Vec<f64>> = self.nodes.iter().map(|n| vec![0.0; n.val.len()]).collect();
        adj[root.0].copy_from_slice(seed);

        let mut grads = Gradients::new();
        let mut watched = BTreeMap::new();

        for idx in (0..=root.0).rev() {
            let node_adj = std::mem::take(&mut adj[idx]);
            if node_adj.iter().all(|&v| v == 0.0) {
                if let Op::Leaf { watched: true } = self.nodes[idx].op {
                    watched.insert(idx, node_adj);
                }
                continue;
            }
            match &self.nodes[idx].op {
                Op::Leaf { watched: w } => {
                    if *w {
                        watched.insert(idx, node_adj);
                    }
                }
                Op::ParamVec(id) => {
                    let g = grads.accumulate(*id, node_adj.len());
                    for (gv, av) in g.iter_mut().zip(&node_adj) {
                        *gv += av;
                    }
                }
                Op::MatVec { w, x } => {
                    let t = self.params.get(*w);
                    let Shape::Matrix(rows, cols) = t.shape else {
                        unreachable!("matvec recorded with vector param");
                    };
                    let xv = self.nodes[*x].val.clone();
                    {
                        let gw = grads.accumulate(*w, rows * cols);
                        for i in 0..rows {
                            for j in 0..cols {
                                gw[i * cols + j] += node_adj[i] * xv[j];
                            }
                        }
                    }
                    let gx = &mut adj[*x];
                    for i in 0..rows {
                        let row = &t.data[i * cols..(i + 1) * cols];
                        for j in 0..cols {
                            gx[j] += node_adj[i] * row[j];
                        }
                    }
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    for (g, v) in adj[a].iter_mut().zip(&node_adj) {
                        *g += v;
                    }
                    for (g, v) in adj[b].iter_mut().zip(&node_adj) {
                        *g += v;
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let bv = self.nodes[b].val.clone();
                    let av = self.nodes[a].val.clone();
                    for ((g, v), o) in adj[a].iter_mut().zip(&node_adj).zip(&bv) {
                        *g += v * o;
                    }
                    for ((g, v), o) in adj[b].iter_mut().zip(&node_adj).zip(&av) {
                        *g += v * o;
                    }
                }
                Op::Act { x, kind } => {
                    let x = *x;
                    let kind = *kind;
                    let yv = self.nodes[idx].val.clone();
                    for ((g, v), y) in adj[x].iter_mut().zip(&node_adj).zip(&yv) {
                        *g += v * kind.deriv_from_output(*y);
                    }
                }
                Op::Softmax { x } => {
                    let x = *x;
                    let y = self.nodes[idx].val.clone();
                    let inner: f64 = node_adj.iter().zip(&y).map(|(a, p)| a * p).sum();
                    for ((g, a), p) in adj[x].iter_mut().zip(&node_adj).zip(&y) {
                        *g += p * (a - inner);
                    }
                }
                Op::Dot(a, b) => {
                    let (a, b) = (*a, *b);
                    let s = node_adj[0];
                    let bv = self.nodes[b].val.clone();
                    let av = self.nodes[a].val.clone();
                    for (g, o) in adj[a].iter_mut().zip(&bv) {
                        *g += s * o;
                    }
                    for (g, o) in adj[b].iter_mut().zip(&av) {
                        *g += s * o;
                    }
                }
                Op::Concat(parts) => {
                    let parts = parts.clone();
                    let mut offset = 0;
                    for p in parts {
                        let len = self.nodes[p].val.len();
                        for (g, v) in adj[p].iter_mut().zip(&node_adj[offset..offset + len]) {
                            *g += v;
                        }
                        offset += len;
                    }
                }
            }
        }

        // Watched leaves with zero adjoint still deserve an entry so callers
        // can distinguish "zero gradient" from "not on this tape".
        for (idx, node) in self.nodes.iter().enumerate().take(root.0 + 1) {
            if let Op::Leaf { watched: true } = node.op {
                watched
                    .entry(idx)
                    .or_insert_with(|| vec![0.0; node.val.len()]);
            }
        }

        Ok(Backprop { grads, watched })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::{stream, Tag};

    /// y = v . sigmoid(W x + b), straight-line duplicate for the oracle.
    fn oracle(w: &[f64], b: &[f64], v: &[f64], x: &[f64], rows: usize, cols: usize) -> f64 {
        let mut acc = 0.0;
        for i in 0..rows {
            let mut z = b[i];
            for j in 0..cols {
                z += w[i * cols + j] * x[j];
            }
            acc += v[i] * crate::nn::act::sigmoid(z);
        }
        acc
    }

    fn build(seed: u64) -> (ParamSet, Vec<f64>, Vec<f64>) {
        let mut rng = stream(seed, Tag::ParamInit, &[1]);
        let mut p = ParamSet::new();
        p.add_matrix("w", 3, 2, &mut rng).unwrap();
        p.add_vector("b", 3, 0.1).unwrap();
        let x = vec![0.4, -1.3];
        let v = vec![0.7, -0.2, 0.5];
        (p, x, v)
    }

    #[test]
    fn forward_matches_straight_line_oracle() {
        let (p, x, v) = build(5);
        let mut tape = Tape::new(&p);
        let xl = tape.leaf(&x);
        let vl = tape.leaf(&v);
        let wx = tape.matvec(p.id("w").unwrap(), xl).unwrap();
        let bl = tape.param_vec(p.id("b").unwrap()).unwrap();
        let z = tape.add(wx, bl).unwrap();
        let a = tape.activation(z, ActKind::Sigmoid);
        let y = tape.dot(vl, a).unwrap();

        let w = &p.get(p.id("w").unwrap()).data;
        let b = &p.get(p.id("b").unwrap()).data;
        let want = oracle(w, b, &v, &x, 3, 2);
        assert!((tape.scalar(y) - want).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_scalar_gradient_is_quarter_at_zero() {
        let mut p = ParamSet::new();
        p.add_vector("w", 1, 0.0).unwrap();
        let wid = p.id("w").unwrap();
        let mut tape = Tape::new(&p);
        let x = tape.leaf(&[1.0]);
        let w = tape.param_vec(wid).unwrap();
        let z = tape.mul(w, x).unwrap();
        let y = tape.activation(z, ActKind::Sigmoid);
        let bp = tape.backward(y, &[1.0]).unwrap();
        let g = bp.grads.get(wid).unwrap();
        assert!((g[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn dense_quadratic_loss_gradient_is_closed_form() {
        // L = (w.x - y)^2, dL/dw = 2(w.x - y) x
        let mut rng = stream(3, Tag::ParamInit, &[2]);
        let mut p = ParamSet::new();
        p.add_matrix("w", 1, 3, &mut rng).unwrap();
        let wid = p.id("w").unwrap();
        let x = vec![0.3, -0.8, 1.1];
        let target = 0.25;

        let mut tape = Tape::new(&p);
        let xl = tape.leaf(&x);
        let z = tape.matvec(wid, xl).unwrap();
        let pred = tape.scalar(z);
        let bp = tape.backward(z, &[2.0 * (pred - target)]).unwrap();
        let g = bp.grads.get(wid).unwrap();

        let w = &p.get(wid).data;
        let resid = w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() - target;
        for (j, xj) in x.iter().enumerate() {
            assert!((g[j] - 2.0 * resid * xj).abs() < 1e-12);
        }
    }

    #[test]
    fn replaying_a_tape_is_a_usage_error() {
        let (p, x, _) = build(9);
        let mut tape = Tape::new(&p);
        let xl = tape.leaf(&x);
        let z = tape.matvec(p.id("w").unwrap(), xl).unwrap();
        tape.backward(z, &[1.0, 0.0, 0.0]).unwrap();
        let err = tape.backward(z, &[1.0, 0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn watched_leaf_reports_input_gradient() {
        // y = w . a: dy/da = w
        let mut rng = stream(4, Tag::ParamInit, &[3]);
        let mut p = ParamSet::new();
        p.add_matrix("w", 1, 2, &mut rng).unwrap();
        let wid = p.id("w").unwrap();
        let mut tape = Tape::new(&p);
        let a = tape.watched_leaf(&[0.2, -0.6]);
        let y = tape.matvec(wid, a).unwrap();
        let bp = tape.backward(y, &[1.0]).unwrap();
        let da = bp.watched(a).unwrap();
        let w = &p.get(wid).data;
        assert!((da[0] - w[0]).abs() < 1e-15);
        assert!((da[1] - w[1]).abs() < 1e-15);
    }

    #[test]
    fn softmax_node_backward_matches_jacobian() {
        let mut p = ParamSet::new();
        p.add_vector("z", 3, 0.0).unwrap();
        let zid = p.id("z").unwrap();
        p.get_mut(zid).data.copy_from_slice(&[0.2, -0.5, 1.0]);

        let mut tape = Tape::new(&p);
        let z = tape.param_vec(zid).unwrap();
        let s = tape.softmax(z);
        let seed = vec![0.3, -0.1, 0.7];
        let y = tape.value(s).to_vec();
        let bp = tape.backward(s, &seed).unwrap();
        let g = bp.grads.get(zid).unwrap();

        // dL/dz_j = y_j (seed_j - sum_k seed_k y_k)
        let inner: f64 = seed.iter().zip(&y).map(|(a, b)| a * b).sum();
        for j in 0..3 {
            assert!((g[j] - y[j] * (seed[j] - inner)).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_reduce_is_order_fixed_sum() {
        let mut p = ParamSet::new();
        p.add_vector("b", 2, 0.0).unwrap();
        let bid = p.id("b").unwrap();
        let make = |seed: &[f64]| {
            let mut tape = Tape::new(&p);
            let b = tape.param_vec(bid).unwrap();
            let l = tape.leaf(seed);
            let y = tape.dot(b, l).unwrap();
            tape.backward(y, &[1.0]).unwrap().grads
        };
        let g1 = make(&[1.0, 2.0]);
        let g2 = make(&[3.0, 4.0]);
        let mut total = Gradients::new();
        total.add_assign(&g1);
        total.add_assign(&g2);
        assert_eq!(total.get(bid).unwrap(), &[4.0, 6.0]);
        assert!((total.global_norm() - (16.0f64 + 36.0).sqrt()).abs() < 1e-15);
    }
}
