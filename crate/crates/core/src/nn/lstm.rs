//! Gated LSTM cell and sequence encoder.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::Graph;
use super::init_affine;
use crate::autodiff::{NodeId, ParamStore, TensorValue};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub d_x: usize,
    pub d_h: usize,
}

/// Batched hidden/cell state, each `n x d_h`.
#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: NodeId,
    pub c: NodeId,
}

const GATES: [&str; 4] = ["i", "f", "o", "g"];

/// Four gate blocks over the concatenated [x; h] input. The forget-gate
/// bias starts at 1 to keep early cell state flowing.
pub fn lstm_init(cfg: &LstmConfig, store: &mut ParamStore, prefix: &str, rng: &mut impl Rng) -> Result<()> {
    for gate in GATES {
        init_affine(
            store,
            &format!("{prefix}.w_{gate}"),
            &format!("{prefix}.b_{gate}"),
            cfg.d_x + cfg.d_h,
            cfg.d_h,
            rng,
        )?;
    }
    let fb = store.get_mut(&format!("{prefix}.b_f"))?;
    for v in fb.data_mut() {
        *v = 1.0;
    }
    Ok(())
}

pub fn lstm_zero_state(g: &mut Graph, cfg: &LstmConfig, batch: usize) -> LstmState {
    let h = g.input(TensorValue::zeros(vec![batch, cfg.d_h]));
    let c = g.input(TensorValue::zeros(vec![batch, cfg.d_h]));
    LstmState { h, c }
}

/// One gated update: i,f,o = sigmoid(affine[x;h]), g = tanh(affine[x;h]),
/// c' = f*c + i*g, h' = o*tanh(c').
pub fn lstm_step(
    g: &mut Graph,
    store: &ParamStore,
    prefix: &str,
    cfg: &LstmConfig,
    state: LstmState,
    x: NodeId,
) -> Result<LstmState> {
    let xd = g.value(x).shape().dims().to_vec();
    if xd.len() != 2 || xd[1] != cfg.d_x {
        return Err(Error::shape(format!(
            "lstm {prefix}: input shape {:?} does not match d_x {}",
            xd, cfg.d_x
        )));
    }
    let xh = g.tape.concat(&[x, state.h], 1)?;
    let mut gates = Vec::with_capacity(4);
    for gate in GATES {
        let w = g.param(store, &format!("{prefix}.w_{gate}"))?;
        let b = g.param(store, &format!("{prefix}.b_{gate}"))?;
        let a = g.tape.matmul(xh, w)?;
        gates.push(g.tape.add(a, b)?);
    }
    let i = g.tape.sigmoid(gates[0])?;
    let f = g.tape.sigmoid(gates[1])?;
    let o = g.tape.sigmoid(gates[2])?;
    let cand = g.tape.tanh(gates[3])?;
    let fc = g.tape.mul(f, state.c)?;
    let ig = g.tape.mul(i, cand)?;
    let c_next = g.tape.add(fc, ig)?;
    let tc = g.tape.tanh(c_next)?;
    let h_next = g.tape.mul(o, tc)?;
    Ok(LstmState { h: h_next, c: c_next })
}

/// Folds `lstm_step` left-to-right from the zero state over a sequence
/// of batched inputs (each `n x d_x`), returning the final hidden state.
pub fn lstm_encode(
    g: &mut Graph,
    store: &ParamStore,
    prefix: &str,
    cfg: &LstmConfig,
    sequence: &[NodeId],
) -> Result<NodeId> {
    if sequence.is_empty() {
        return Err(Error::contract("lstm_encode: empty sequence"));
    }
    let batch = g.value(sequence[0]).shape().dims()[0];
    let mut state = lstm_zero_state(g, cfg, batch);
    for &x in sequence {
        state = lstm_step(g, store, prefix, cfg, state, x)?;
    }
    Ok(state.h)
}
