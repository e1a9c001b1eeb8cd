//! Multilayer perceptrons over tape nodes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::Graph;
use super::init_affine;
use crate::autodiff::{NodeId, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
    Softplus,
}

impl Activation {
    pub fn apply(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        match self {
            Activation::Identity => Ok(x),
            Activation::Tanh => g.tape.tanh(x),
            Activation::Sigmoid => g.tape.sigmoid(x),
            Activation::Softplus => g.tape.softplus(x),
        }
    }
}

/// Layer widths (input, hidden..., output) plus activations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub widths: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
}

impl MlpConfig {
    pub fn new(widths: Vec<usize>, hidden: Activation, output: Activation) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::config("mlp: need at least input and output widths"));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::config("mlp: all widths must be >= 1"));
        }
        Ok(MlpConfig { widths, hidden, output })
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("validated")
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }
}

pub fn mlp_init(cfg: &MlpConfig, store: &mut ParamStore, prefix: &str, rng: &mut impl Rng) -> Result<()> {
    for l in 0..cfg.layer_count() {
        init_affine(store, &format!("{prefix}.w{l}"), &format!("{prefix}.b{l}"), cfg.widths[l], cfg.widths[l + 1], rng)?;
    }
    Ok(())
}

/// Alternating affine maps and activations; `input` is batch x d_in.
pub fn mlp_forward(
    g: &mut Graph,
    store: &ParamStore,
    prefix: &str,
    cfg: &MlpConfig,
    input: NodeId,
) -> Result<NodeId> {
    let dims = g.value(input).shape().dims();
    if dims.len() != 2 || dims[1] != cfg.input_width() {
        return Err(Error::shape(format!(
            "mlp {prefix}: input shape {:?} does not match input width {}",
            dims,
            cfg.input_width()
        )));
    }
    let mut x = input;
    for l in 0..cfg.layer_count() {
        let w = g.param(store, &format!("{prefix}.w{l}"))?;
        let b = g.param(store, &format!("{prefix}.b{l}"))?;
        let xw = g.tape.matmul(x, w)?;
        x = g.tape.add(xw, b)?;
        let act = if l + 1 == cfg.layer_count() { cfg.output } else { cfg.hidden };
        x = act.apply(g, x)?;
    }
    Ok(x)
}
