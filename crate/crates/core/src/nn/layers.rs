//! Dense and LSTM building blocks expressed as tape ops.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::act::ActKind;
use crate::nn::params::{ParamId, ParamSet};
use crate::nn::tape::{NodeId, Tape};

/// Carried recurrent state, plain values detached from any tape.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            c: vec![0.0; hidden],
            h: vec![0.0; hidden],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().chain(&self.h).all(|v| v.is_finite())
    }
}

/// Parameter ids for one LSTM cell. Each gate matrix acts on the
/// concatenation [h_prev, x].
#[derive(Debug, Clone, Copy)]
pub struct LstmIds {
    pub w_f: ParamId,
    pub w_u: ParamId,
    pub w_o: ParamId,
    pub w_c: ParamId,
    pub b_f: ParamId,
    pub b_u: ParamId,
    pub b_o: ParamId,
    pub b_c: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmIds {
    /// Registers the eight tensors under `prefix`. Forget-gate bias starts
    /// at +1 so early gradients are not strangled; the rest start at zero.
    pub fn register(
        params: &mut ParamSet,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let cols = hidden + input;
        Ok(LstmIds {
            w_f: params.add_matrix(&format!("{prefix}.w_f"), hidden, cols, rng)?,
            w_u: params.add_matrix(&format!("{prefix}.w_u"), hidden, cols, rng)?,
            w_o: params.add_matrix(&format!("{prefix}.w_o"), hidden, cols, rng)?,
            w_c: params.add_matrix(&format!("{prefix}.w_c"), hidden, cols, rng)?,
            b_f: params.add_vector(&format!("{prefix}.b_f"), hidden, 1.0)?,
            b_u: params.add_vector(&format!("{prefix}.b_u"), hidden, 0.0)?,
            b_o: params.add_vector(&format!("{prefix}.b_o"), hidden, 0.0)?,
            b_c: params.add_vector(&format!("{prefix}.b_c"), hidden, 0.0)?,
            input,
            hidden,
        })
    }
}

/// activation(Wx + b) recorded on the tape.
pub fn dense(
    tape: &mut Tape<'_>,
    w: ParamId,
    b: ParamId,
    x: NodeId,
    activation: ActKind,
) -> Result<NodeId> {
    let wx = tape.matvec(w, x)?;
    let bias = tape.param_vec(b)?;
    let z = tape.add(wx, bias)?;
    Ok(tape.activation(z, activation))
}

fn gate(
    tape: &mut Tape<'_>,
    w: ParamId,
    b: ParamId,
    hx: NodeId,
    kind: ActKind,
) -> Result<NodeId> {
    dense(tape, w, b, hx, kind)
}

/// One LSTM step on the tape:
///
/// ```text
/// z_f = sigmoid(W_f [h, x] + b_f)    z_u = sigmoid(W_u [h, x] + b_u)
/// z_o = sigmoid(W_o [h, x] + b_o)    cand = tanh(W_c [h, x] + b_c)
/// c' = z_f * c + z_u * cand          h' = z_o * tanh(c')
/// ```
///
/// `x`, `h_prev`, `c_prev` are tape nodes so gradients flow through
/// unrolled steps; truncated variants pass prior state as fresh leaves.
pub fn lstm_step(
    tape: &mut Tape<'_>,
    ids: &LstmIds,
    x: NodeId,
    h_prev: NodeId,
    c_prev: NodeId,
) -> Result<(NodeId, NodeId)> {
    let xv = tape.value(x);
    if let Some(i) = xv.iter().position(|v| !v.is_finite()) {
        return Err(Error::numeric(format!(
            "lstm input not finite at index {i}: {}",
            xv[i]
        )));
    }
    if xv.len() != ids.input {
        return Err(Error::config(format!(
            "lstm input dim {} != {}",
            xv.len(),
            ids.input
        )));
    }
    if tape.value(h_prev).len() != ids.hidden || tape.value(c_prev).len() != ids.hidden {
        return Err(Error::config("lstm state dim mismatch"));
    }

    let hx = tape.concat(&[h_prev, x]);
    let z_f = gate(tape, ids.w_f, ids.b_f, hx, ActKind::Sigmoid)?;
    let z_u = gate(tape, ids.w_u, ids.b_u, hx, ActKind::Sigmoid)?;
    let z_o = gate(tape, ids.w_o, ids.b_o, hx, ActKind::Sigmoid)?;
    let cand = gate(tape, ids.w_c, ids.b_c, hx, ActKind::Tanh)?;

    let keep = tape.mul(z_f, c_prev)?;
    let write = tape.mul(z_u, cand)?;
    let c_next = tape.add(keep, write)?;
    let c_act = tape.activation(c_next, ActKind::Tanh);
    let h_next = tape.mul(z_o, c_act)?;
    Ok((h_next, c_next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::act::sigmoid;
    use crate::streams::{stream, Tag};

    fn zero_lstm(input: usize, hidden: usize) -> (ParamSet, LstmIds) {
        let mut rng = stream(0, Tag::ParamInit, &[10]);
        let mut p = ParamSet::new();
        let ids = LstmIds::register(&mut p, "cell", input, hidden, &mut rng).unwrap();
        for pid in [ids.w_f, ids.w_u, ids.w_o, ids.w_c, ids.b_f] {
            p.get_mut(pid).data.fill(0.0);
        }
        (p, ids)
    }

    #[test]
    fn zero_weights_keep_zero_state() {
        let (p, ids) = zero_lstm(3, 2);
        let mut tape = Tape::new(&p);
        let x = tape.leaf(&[0.0, 0.0, 0.0]);
        let h0 = tape.leaf(&[0.0, 0.0]);
        let c0 = tape.leaf(&[0.0, 0.0]);
        let (h, c) = lstm_step(&mut tape, &ids, x, h0, c0).unwrap();
        assert_eq!(tape.value(c), &[0.0, 0.0]);
        assert_eq!(tape.value(h), &[0.0, 0.0]);
    }

    #[test]
    fn saturated_forget_gate_preserves_cell() {
        let (mut p, ids) = zero_lstm(1, 2);
        // Huge forget bias -> z_f ~ 1; update gate bias very negative -> z_u ~ 0.
        p.get_mut(ids.b_f).data.fill(40.0);
        p.get_mut(ids.b_u).data.fill(-40.0);
        let mut tape = Tape::new(&p);
        let x = tape.leaf(&[0.3]);
        let h0 = tape.leaf(&[0.0, 0.0]);
        let c0 = tape.leaf(&[0.7, -0.4]);
        let (_, c) = lstm_step(&mut tape, &ids, x, h0, c0).unwrap();
        let cv = tape.value(c);
        assert!((cv[0] - 0.7).abs() < 1e-6);
        assert!((cv[1] + 0.4).abs() < 1e-6);
    }

    /// Independent evaluation of the six equations, no tape involved.
    fn lstm_oracle(
        p: &ParamSet,
        ids: &LstmIds,
        x: &[f64],
        h: &[f64],
        c: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let hx: Vec<f64> = h.iter().chain(x).cloned().collect();
        let affine = |w: ParamId, b: ParamId| -> Vec<f64> {
            let wt = p.get(w);
            let bt = p.get(b);
            (0..ids.hidden)
                .map(|i| {
                    let row = &wt.data[i * hx.len()..(i + 1) * hx.len()];
                    row.iter().zip(&hx).map(|(a, b)| a * b).sum::<f64>() + bt.data[i]
                })
                .collect()
        };
        let z_f: Vec<f64> = affine(ids.w_f, ids.b_f).iter().map(|&v| sigmoid(v)).collect();
        let z_u: Vec<f64> = affine(ids.w_u, ids.b_u).iter().map(|&v| sigmoid(v)).collect();
        let z_o: Vec<f64> = affine(ids.w_o, ids.b_o).iter().map(|&v| sigmoid(v)).collect();
        let cand: Vec<f64> = affine(ids.w_c, ids.b_c).iter().map(|v| v.tanh()).collect();
        let c_next: Vec<f64> = (0..ids.hidden)
            .map(|i| z_f[i] * c[i] + z_u[i] * cand[i])
            .collect();
        let h_next: Vec<f64> = (0..ids.hidden)
            .map(|i| z_o[i] * c_next[i].tanh())
            .collect();
        (h_next, c_next)
    }

    #[test]
    fn random_step_matches_equation_oracle() {
        for seed in 0..20u64 {
            let mut rng = stream(seed, Tag::ParamInit, &[11]);
            let mut p = ParamSet::new();
            let ids = LstmIds::register(&mut p, "cell", 5, 4, &mut rng).unwrap();
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let h: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();

            let mut tape = Tape::new(&p);
            let xl = tape.leaf(&x);
            let hl = tape.leaf(&h);
            let cl = tape.leaf(&c);
            let (hn, cn) = lstm_step(&mut tape, &ids, xl, hl, cl).unwrap();

            let (h_want, c_want) = lstm_oracle(&p, &ids, &x, &h, &c);
            for (got, want) in tape.value(hn).iter().zip(&h_want) {
                assert!((got - want).abs() < 1e-12);
            }
            for (got, want) in tape.value(cn).iter().zip(&c_want) {
                assert!((got - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_finite_input_reports_index() {
        let (p, ids) = zero_lstm(3, 2);
        let mut tape = Tape::new(&p);
        let x = tape.leaf(&[0.0, f64::NAN, 0.0]);
        let h0 = tape.leaf(&[0.0, 0.0]);
        let c0 = tape.leaf(&[0.0, 0.0]);
        let err = lstm_step(&mut tape, &ids, x, h0, c0).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert!(err.to_string().contains("index 1"));
    }

    #[test]
    fn dense_zero_everything_gives_half_through_sigmoid() {
        let mut p = ParamSet::new();
        let mut rng = stream(1, Tag::ParamInit, &[12]);
        let w = p.add_matrix("w", 1, 2, &mut rng).unwrap();
        p.get_mut(w).data.fill(0.0);
        let b = p.add_vector("b", 1, 0.0).unwrap();
        let mut tape = Tape::new(&p);
        let x = tape.leaf(&[0.0, 0.0]);
        let y = dense(&mut tape, w, b, x, ActKind::Sigmoid).unwrap();
        assert_eq!(tape.value(y), &[0.5]);
    }

    #[test]
    fn dense_identity_sums() {
        let mut p = ParamSet::new();
        let mut rng = stream(1, Tag::ParamInit, &[13]);
        let w = p.add_matrix("w", 1, 2, &mut rng).unwrap();
        p.get_mut(w).data.copy_from_slice(&[1.0, 1.0]);
        let b = p.add_vector("b", 1, 0.0).unwrap();
        let mut tape = Tape::new(&p);
        let x = tape.leaf(&[1.0, 2.0]);
        let y = dense(&mut tape, w, b, x, ActKind::Identity).unwrap();
        assert_eq!(tape.value(y), &[3.0]);
    }
}
