//! Context/target batches and diagonal Gaussian parameter vectors.

use crate::autodiff::TensorValue;
use crate::error::{Error, Result};

/// Model inputs: plain points (`n x d_x`) or per-point sequences
/// (`n x L x d_x`) for the recurrent variant.
#[derive(Debug, Clone)]
pub enum InputSet {
    Points(TensorValue),
    Sequences(TensorValue),
}

impl InputSet {
    pub fn count(&self) -> usize {
        match self {
            InputSet::Points(t) => t.shape().dims()[0],
            InputSet::Sequences(t) => t.shape().dims()[0],
        }
    }

    pub fn is_sequences(&self) -> bool {
        matches!(self, InputSet::Sequences(_))
    }

    pub fn tensor(&self) -> &TensorValue {
        match self {
            InputSet::Points(t) | InputSet::Sequences(t) => t,
        }
    }
}

/// One realization's context and target sets. Targets may lack outputs
/// at pure prediction time.
#[derive(Debug, Clone)]
pub struct ContextTargetBatch {
    pub x_c: InputSet,
    pub y_c: TensorValue,
    pub x_t: InputSet,
    pub y_t: Option<TensorValue>,
}

impl ContextTargetBatch {
    pub fn new(x_c: InputSet, y_c: TensorValue, x_t: InputSet, y_t: Option<TensorValue>) -> Result<Self> {
        let n_c = x_c.count();
        let n_t = x_t.count();
        if n_c == 0 || n_t == 0 {
            return Err(Error::contract("batch needs at least one context and one target"));
        }
        if y_c.shape().dims()[0] != n_c {
            return Err(Error::shape("context outputs do not match context inputs"));
        }
        if let Some(y) = &y_t {
            if y.shape().dims()[0] != n_t {
                return Err(Error::shape("target outputs do not match target inputs"));
            }
        }
        if x_c.is_sequences() != x_t.is_sequences() {
            return Err(Error::contract("contexts and targets must share input form"));
        }
        Ok(ContextTargetBatch { x_c, y_c, x_t, y_t })
    }

    pub fn n_contexts(&self) -> usize {
        self.x_c.count()
    }

    pub fn n_targets(&self) -> usize {
        self.x_t.count()
    }
}

/// Mean/std vectors of a factorized Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl GaussianParams {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != sigma.len() {
            return Err(Error::shape("mu and sigma lengths differ"));
        }
        if sigma.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::contract("sigma entries must be positive and finite"));
        }
        Ok(GaussianParams { mu, sigma })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Closed-form KL(q || p) between diagonal Gaussians.
pub fn kl_diag_gaussians(q: &GaussianParams, p: &GaussianParams) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::shape("KL: dimension mismatch"));
    }
    let mut kl = 0.0;
    for i in 0..q.dim() {
        let (qm, qs) = (q.mu[i], q.sigma[i]);
        let (pm, ps) = (p.mu[i], p.sigma[i]);
        kl += (ps / qs).ln() + (qs * qs + (qm - pm) * (qm - pm)) / (2.0 * ps * ps) - 0.5;
    }
    Ok(kl)
}
