//! Plain LSTM regressor baseline: windows in, point estimate out,
//! trained with mean squared error.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, ParamStore, TensorValue};
use crate::error::{Error, Result};
use crate::nn::{lstm_encode, lstm_init, mlp_forward, mlp_init, Activation, Graph, LstmConfig, MlpConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmRegressorConfig {
    pub d_x: usize,
    pub d_y: usize,
    pub d_h: usize,
    pub window_len: usize,
    pub head_hidden: Vec<usize>,
}

impl LstmRegressorConfig {
    fn head_cfg(&self) -> Result<MlpConfig> {
        let mut widths = vec![self.d_h];
        widths.extend(&self.head_hidden);
        widths.push(self.d_y);
        MlpConfig::new(widths, Activation::Tanh, Activation::Identity)
    }

    fn lstm_cfg(&self) -> LstmConfig {
        LstmConfig { d_x: self.d_x, d_h: self.d_h }
    }
}

#[derive(Debug, Clone)]
pub struct LstmRegressor {
    pub cfg: LstmRegressorConfig,
    pub params: ParamStore,
}

impl LstmRegressor {
    pub fn new(cfg: LstmRegressorConfig, seed: u64) -> Result<Self> {
        if cfg.window_len == 0 || cfg.d_x == 0 || cfg.d_y == 0 || cfg.d_h == 0 {
            return Err(Error::config("lstm regressor dims must be >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        lstm_init(&cfg.lstm_cfg(), &mut params, "lstm", &mut rng)?;
        mlp_init(&cfg.head_cfg()?, &mut params, "head", &mut rng)?;
        Ok(LstmRegressor { cfg, params })
    }

    /// `seqs` is `n x L x d_x`; output is `n x d_y`.
    pub fn forward(&self, g: &mut Graph, seqs: &TensorValue) -> Result<NodeId> {
        let dims = seqs.shape().dims().to_vec();
        if dims.len() != 3 || dims[1] != self.cfg.window_len || dims[2] != self.cfg.d_x {
            return Err(Error::shape(format!(
                "lstm regressor: expected [n, {}, {}], got {:?}",
                self.cfg.window_len, self.cfg.d_x, dims
            )));
        }
        let node = g.input(seqs.clone());
        let mut steps = Vec::with_capacity(dims[1]);
        for t in 0..dims[1] {
            let s = g.tape.slice(node, 1, t, t + 1)?;
            steps.push(g.tape.reshape(s, vec![dims[0], self.cfg.d_x])?);
        }
        let h = lstm_encode(g, &self.params, "lstm", &self.cfg.lstm_cfg(), &steps)?;
        mlp_forward(g, &self.params, "head", &self.cfg.head_cfg()?, h)
    }

    /// One MSE training step's loss, with gradients accumulated.
    pub fn mse_loss_backward(&mut self, seqs: &TensorValue, targets: &TensorValue) -> Result<f64> {
        let mut g = Graph::new();
        let pred = self.forward(&mut g, seqs)?;
        let y = g.input(targets.clone());
        let diff = g.tape.sub(pred, y)?;
        let sq = g.tape.square(diff)?;
        let loss = g.tape.mean_all(sq)?;
        let loss_val = g.value(loss).scalar_value()?;
        g.backward_into(loss, &mut self.params)?;
        Ok(loss_val)
    }

    pub fn predict(&self, seqs: &TensorValue) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let pred = self.forward(&mut g, seqs)?;
        Ok(g.value(pred).data().to_vec())
    }
}
