//! Parametric building blocks: MLPs, the LSTM cell, and attention.

pub mod attention;
pub mod graph;
pub mod lstm;
pub mod mlp;

pub use attention::{attend, attention_weights, multihead_init, self_attend, AttentionKind};
pub use graph::Graph;
pub use lstm::{lstm_encode, lstm_init, lstm_step, lstm_zero_state, LstmConfig, LstmState};
pub use mlp::{mlp_forward, mlp_init, Activation, MlpConfig};

use rand::Rng;

use crate::autodiff::{ParamStore, TensorValue};
use crate::error::Result;

/// Weight ~ uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)), shape (d_in, d_out).
pub fn init_weight(
    store: &mut ParamStore,
    name: &str,
    d_in: usize,
    d_out: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    let bound = (1.0 / d_in as f64).sqrt();
    let data: Vec<f64> = (0..d_in * d_out).map(|_| rng.gen_range(-bound..bound)).collect();
    store.insert(name, TensorValue::matrix(d_in, d_out, data)?)
}

/// Weight plus zero bias.
pub fn init_affine(
    store: &mut ParamStore,
    w_name: &str,
    b_name: &str,
    d_in: usize,
    d_out: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    init_weight(store, w_name, d_in, d_out, rng)?;
    store.insert(b_name, TensorValue::zeros(vec![d_out]))
}
