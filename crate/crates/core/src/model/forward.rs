//! Model assembly: latent and deterministic encoders, the recurrent
//! input transform, decoder, ELBO objective, and predictive sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::batch::{ContextTargetBatch, InputSet};
use super::config::ModelConfig;
use crate::autodiff::{NodeId, ParamStore, TensorValue};
use crate::error::{Error, Result};
use crate::nn::{attend, lstm_encode, mlp_forward, self_attend, AttentionKind, Graph};

const HALF_LOG_2PI: f64 = 0.9189385332046727;

/// Tape-level diagonal Gaussian: `mu` and `sigma` nodes of equal shape.
#[derive(Debug, Clone, Copy)]
pub struct GaussNodes {
    pub mu: NodeId,
    pub sigma: NodeId,
}

#[derive(Debug, Clone, Copy)]
pub struct ElboNodes {
    pub elbo: NodeId,
    pub nll: NodeId,
    pub kl: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZMode {
    Prior,
    MeanZ,
}

/// Per-target predictive distribution, per z-sample and moment-matched.
#[derive(Debug, Clone)]
pub struct Prediction {
    /// One (mu, sigma) pair per z-sample, each flattened `n_t x d_y`.
    pub samples: Vec<(Vec<f64>, Vec<f64>)>,
    pub mixture_mu: Vec<f64>,
    pub mixture_sigma: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        let params = cfg.init_params(seed)?;
        Ok(Model { cfg, params })
    }

    pub fn from_parts(cfg: ModelConfig, params: ParamStore) -> Result<Self> {
        cfg.validate()?;
        Ok(Model { cfg, params })
    }

    /// Applies the LSTM transform per sequence: `seqs` is `n x L x d_x`,
    /// the result is `n x d_h`.
    pub fn transform_inputs(&self, g: &mut Graph, seqs: &TensorValue) -> Result<NodeId> {
        if !self.cfg.kind.uses_sequences() {
            return Err(Error::contract(format!(
                "transform_inputs: variant {} takes plain points",
                self.cfg.kind.as_str()
            )));
        }
        let dims = seqs.shape().dims().to_vec();
        if dims.len() != 3 || dims[1] != self.cfg.window_len || dims[2] != self.cfg.d_x {
            return Err(Error::shape(format!(
                "transform_inputs: expected [n, {}, {}], got {:?}",
                self.cfg.window_len, self.cfg.d_x, dims
            )));
        }
        let n = dims[0];
        let node = g.input(seqs.clone());
        let mut steps = Vec::with_capacity(dims[1]);
        for t in 0..dims[1] {
            let s = g.tape.slice(node, 1, t, t + 1)?;
            steps.push(g.tape.reshape(s, vec![n, self.cfg.d_x])?);
        }
        lstm_encode(g, &self.params, "lstm", &self.cfg.lstm_cfg(), &steps)
    }

    /// Embeds an input set into encoder space: leaves points as-is,
    /// runs sequences through the LSTM transform.
    pub fn embed_inputs(&self, g: &mut Graph, x: &InputSet) -> Result<NodeId> {
        match x {
            InputSet::Points(t) => {
                if self.cfg.kind.uses_sequences() {
                    return Err(Error::contract("anp-rnn requires sequence-shaped inputs"));
                }
                let dims = t.shape().dims();
                if dims.len() != 2 || dims[1] != self.cfg.d_x {
                    return Err(Error::shape(format!(
                        "inputs: expected [n, {}], got {:?}",
                        self.cfg.d_x, dims
                    )));
                }
                Ok(g.input(t.clone()))
            }
            InputSet::Sequences(t) => self.transform_inputs(g, t),
        }
    }

    fn self_attention_prefix(&self) -> Option<&'static str> {
        match self.cfg.attention {
            AttentionKind::MultiHead { .. } => Some("self_attn"),
            _ => None,
        }
    }

    /// Per-pair embedding, mean pooling, and the Gaussian head for
    /// q(z | .). Output is permutation invariant in the input pairs.
    pub fn encode_latent(&self, g: &mut Graph, x_emb: NodeId, y: NodeId) -> Result<GaussNodes> {
        let n = g.value(x_emb).shape().dims()[0];
        if n == 0 {
            return Err(Error::contract("encode_latent: empty input set"));
        }
        let pairs = g.tape.concat(&[x_emb, y], 1)?;
        let mut e = mlp_forward(g, &self.params, "lat_enc", &self.cfg.latent_encoder_cfg()?, pairs)?;
        if self.cfg.self_attention {
            e = self_attend(g, &self.params, &self.cfg.attention, self.self_attention_prefix(), e)?;
        }
        let pooled = g.tape.mean_axis(e, 0)?;
        let pooled = g.tape.reshape(pooled, vec![1, self.cfg.d_r])?;
        let head = mlp_forward(g, &self.params, "lat_head", &self.cfg.latent_head_cfg()?, pooled)?;
        let d_z = self.cfg.d_z;
        let mu = g.tape.slice(head, 1, 0, d_z)?;
        let pre = g.tape.slice(head, 1, d_z, 2 * d_z)?;
        // sigma bounded into (floor, 1) by a scaled sigmoid
        let sig = g.tape.sigmoid(pre)?;
        let scale = g.tape.constant_scalar(1.0 - self.cfg.sigma_floor);
        let floor = g.tape.constant_scalar(self.cfg.sigma_floor);
        let scaled = g.tape.mul(sig, scale)?;
        let sigma = g.tape.add(scaled, floor)?;
        Ok(GaussNodes { mu, sigma })
    }

    /// Cross-attended deterministic path: one representation row per
    /// target query (all rows identical under uniform aggregation).
    pub fn encode_deterministic(
        &self,
        g: &mut Graph,
        x_c_emb: NodeId,
        y_c: NodeId,
        x_t_emb: NodeId,
    ) -> Result<NodeId> {
        let n_c = g.value(x_c_emb).shape().dims()[0];
        if n_c == 0 {
            return Err(Error::contract("encode_deterministic: empty context"));
        }
        let pairs = g.tape.concat(&[x_c_emb, y_c], 1)?;
        let mut reps = mlp_forward(g, &self.params, "det_enc", &self.cfg.det_encoder_cfg()?, pairs)?;
        if self.cfg.self_attention {
            reps = self_attend(g, &self.params, &self.cfg.attention, self.self_attention_prefix(), reps)?;
        }
        let (queries, keys) = if self.cfg.uses_qk_projection() {
            let cfg = self.cfg.qk_proj_cfg()?;
            let q = mlp_forward(g, &self.params, "qk_proj", &cfg, x_t_emb)?;
            let k = mlp_forward(g, &self.params, "qk_proj", &cfg, x_c_emb)?;
            (q, k)
        } else {
            (x_t_emb, x_c_emb)
        };
        attend(g, &self.params, &self.cfg.attention, Some("cross_attn"), queries, keys, reps)
    }

    /// Reparameterized draw: z = mu + sigma * noise.
    pub fn sample_z(&self, g: &mut Graph, q: GaussNodes, noise: &[f64]) -> Result<NodeId> {
        if noise.len() != self.cfg.d_z {
            return Err(Error::shape(format!(
                "sample_z: noise dim {} != d_z {}",
                noise.len(),
                self.cfg.d_z
            )));
        }
        let eps = g.input(TensorValue::matrix(1, self.cfg.d_z, noise.to_vec())?);
        let scaled = g.tape.mul(q.sigma, eps)?;
        g.tape.add(q.mu, scaled)
    }

    /// Decodes per-target predictive Gaussians from [x_t | r*_t | z].
    pub fn decode(&self, g: &mut Graph, x_t_emb: NodeId, r_star: NodeId, z: NodeId) -> Result<GaussNodes> {
        let n_t = g.value(x_t_emb).shape().dims()[0];
        if g.value(r_star).shape().dims()[0] != n_t {
            return Err(Error::shape("decode: r* rows do not match target count"));
        }
        let z_rows = g.tape.broadcast(z, vec![n_t, self.cfg.d_z])?;
        let joined = g.tape.concat(&[x_t_emb, r_star, z_rows], 1)?;
        let out = mlp_forward(g, &self.params, "dec", &self.cfg.decoder_cfg()?, joined)?;
        let d_y = self.cfg.d_y;
        let mu = g.tape.slice(out, 1, 0, d_y)?;
        let pre = g.tape.slice(out, 1, d_y, 2 * d_y)?;
        let sp = g.tape.softplus(pre)?;
        let floor = g.tape.constant_scalar(self.cfg.sigma_floor);
        let sigma = g.tape.add(sp, floor)?;
        Ok(GaussNodes { mu, sigma })
    }

    /// Mean Gaussian negative log-likelihood over targets and dims.
    pub fn gaussian_nll_node(&self, g: &mut Graph, pred: GaussNodes, y: NodeId) -> Result<NodeId> {
        let diff = g.tape.sub(y, pred.mu)?;
        let sq = g.tape.square(diff)?;
        let var = g.tape.mul(pred.sigma, pred.sigma)?;
        let two = g.tape.constant_scalar(2.0);
        let var2 = g.tape.mul(var, two)?;
        let quad = g.tape.div(sq, var2)?;
        let log_sigma = g.tape.log(pred.sigma)?;
        let c = g.tape.constant_scalar(HALF_LOG_2PI);
        let a = g.tape.add(log_sigma, quad)?;
        let per_point = g.tape.add(a, c)?;
        g.tape.mean_all(per_point)
    }

    /// KL(q || p) for diagonal Gaussians, on the tape.
    pub fn kl_node(&self, g: &mut Graph, q: GaussNodes, p: GaussNodes) -> Result<NodeId> {
        let ratio = g.tape.div(p.sigma, q.sigma)?;
        let log_ratio = g.tape.log(ratio)?;
        let qs2 = g.tape.square(q.sigma)?;
        let dmu = g.tape.sub(q.mu, p.mu)?;
        let dmu2 = g.tape.square(dmu)?;
        let num = g.tape.add(qs2, dmu2)?;
        let ps2 = g.tape.square(p.sigma)?;
        let two = g.tape.constant_scalar(2.0);
        let den = g.tape.mul(ps2, two)?;
        let frac = g.tape.div(num, den)?;
        let half = g.tape.constant_scalar(0.5);
        let s = g.tape.add(log_ratio, frac)?;
        let per_dim = g.tape.sub(s, half)?;
        g.tape.sum_all(per_dim)
    }

    /// Single-sample ELBO for one realization. z is drawn from the
    /// target-conditioned posterior q(z|s_T) via the reparameterization
    /// noise supplied by the caller.
    pub fn elbo_nodes(&self, g: &mut Graph, batch: &ContextTargetBatch, z_noise: &[f64]) -> Result<ElboNodes> {
        let y_t_val = batch
            .y_t
            .as_ref()
            .ok_or_else(|| Error::contract("elbo: batch has no target outputs"))?
            .clone();
        let x_t_emb = self.embed_inputs(g, &batch.x_t)?;
        let x_c_emb = self.embed_inputs(g, &batch.x_c)?;
        let y_t = g.input(y_t_val);
        let y_c = g.input(batch.y_c.clone());
        let s_t = self.encode_latent(g, x_t_emb, y_t)?;
        let s_c = self.encode_latent(g, x_c_emb, y_c)?;
        let z = self.sample_z(g, s_t, z_noise)?;
        let r_star = self.encode_deterministic(g, x_c_emb, y_c, x_t_emb)?;
        let pred = self.decode(g, x_t_emb, r_star, z)?;
        let nll = self.gaussian_nll_node(g, pred, y_t)?;
        let kl = self.kl_node(g, s_t, s_c)?;
        let ll = g.tape.neg(nll)?;
        let elbo = g.tape.sub(ll, kl)?;
        Ok(ElboNodes { elbo, nll, kl })
    }

    /// Evaluates (elbo, nll_term, kl_term) with z-noise derived from `seed`.
    pub fn elbo(&self, batch: &ContextTargetBatch, seed: u64) -> Result<(f64, f64, f64)> {
        let noise = standard_normal_vec(self.cfg.d_z, seed);
        let mut g = Graph::new();
        let nodes = self.elbo_nodes(&mut g, batch, &noise)?;
        Ok((
            g.value(nodes.elbo).scalar_value()?,
            g.value(nodes.nll).scalar_value()?,
            g.value(nodes.kl).scalar_value()?,
        ))
    }

    /// Mean training loss (-elbo) over a batch of realizations, with
    /// gradients accumulated into the parameter store.
    pub fn batch_loss_backward(
        &mut self,
        batches: &[ContextTargetBatch],
        noises: &[Vec<f64>],
    ) -> Result<BatchStats> {
        if batches.is_empty() || batches.len() != noises.len() {
            return Err(Error::contract("batch_loss_backward: batch/noise count mismatch"));
        }
        let mut g = Graph::new();
        let mut elbo_sum = None;
        let mut nll_acc = 0.0;
        let mut kl_acc = 0.0;
        for (batch, noise) in batches.iter().zip(noises) {
            let nodes = self.elbo_nodes(&mut g, batch, noise)?;
            nll_acc += g.value(nodes.nll).scalar_value()?;
            kl_acc += g.value(nodes.kl).scalar_value()?;
            elbo_sum = Some(match elbo_sum {
                None => nodes.elbo,
                Some(acc) => g.tape.add(acc, nodes.elbo)?,
            });
        }
        let count = g.tape.constant_scalar(batches.len() as f64);
        let mean_elbo = g.tape.div(elbo_sum.expect("nonempty"), count)?;
        let loss = g.tape.neg(mean_elbo)?;
        let loss_val = g.value(loss).scalar_value()?;
        g.backward_into(loss, &mut self.params)?;
        let n = batches.len() as f64;
        Ok(BatchStats {
            loss: loss_val,
            elbo: -loss_val,
            nll: nll_acc / n,
            kl: kl_acc / n,
        })
    }

    /// Predictive distribution at the targets with z drawn from the
    /// context posterior q(z|s_C) (or fixed at its mean).
    pub fn predict_with_noises(
        &self,
        batch: &ContextTargetBatch,
        noises: &[Vec<f64>],
        mode: ZMode,
    ) -> Result<Prediction> {
        if noises.is_empty() {
            return Err(Error::contract("predict: need at least one z sample"));
        }
        let mut g = Graph::new();
        let x_t_emb = self.embed_inputs(&mut g, &batch.x_t)?;
        let x_c_emb = self.embed_inputs(&mut g, &batch.x_c)?;
        let y_c = g.input(batch.y_c.clone());
        let s_c = self.encode_latent(&mut g, x_c_emb, y_c)?;
        let r_star = self.encode_deterministic(&mut g, x_c_emb, y_c, x_t_emb)?;
        let mut samples = Vec::with_capacity(noises.len());
        for noise in noises {
            let z = match mode {
                ZMode::MeanZ => s_c.mu,
                ZMode::Prior => self.sample_z(&mut g, s_c, noise)?,
            };
            let pred = self.decode(&mut g, x_t_emb, r_star, z)?;
            samples.push((
                g.value(pred.mu).data().to_vec(),
                g.value(pred.sigma).data().to_vec(),
            ));
        }
        Ok(mixture_from_samples(samples))
    }

    pub fn predict(
        &self,
        batch: &ContextTargetBatch,
        n_z_samples: usize,
        mode: ZMode,
        seed: u64,
    ) -> Result<Prediction> {
        if n_z_samples == 0 {
            return Err(Error::contract("predict: n_z_samples must be >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noises: Vec<Vec<f64>> = (0..n_z_samples)
            .map(|_| (0..self.cfg.d_z).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        self.predict_with_noises(batch, &noises, mode)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BatchStats {
    pub loss: f64,
    pub elbo: f64,
    pub nll: f64,
    pub kl: f64,
}

/// Moment-matched Gaussian mixture across z-samples.
fn mixture_from_samples(samples: Vec<(Vec<f64>, Vec<f64>)>) -> Prediction {
    let n = samples[0].0.len();
    let s = samples.len() as f64;
    let mut mix_mu = vec![0.0; n];
    let mut second = vec![0.0; n];
    for (mu, sigma) in &samples {
        for i in 0..n {
            mix_mu[i] += mu[i] / s;
            second[i] += (sigma[i] * sigma[i] + mu[i] * mu[i]) / s;
        }
    }
    let mix_sigma: Vec<f64> = (0..n)
        .map(|i| (second[i] - mix_mu[i] * mix_mu[i]).max(0.0).sqrt())
        .collect();
    Prediction { samples, mixture_mu: mix_mu, mixture_sigma: mix_sigma }
}

pub fn standard_normal_vec(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}
