//! The training loop: batched ELBO descent with periodic evaluation and
//! checkpointing, fully determined by (config, seed).

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{save_checkpoint, standard_normal_vec, Model, ModelConfig};

use super::dataset::DatasetSource;
use super::eval::evaluate_nll;
use super::mix3;
use super::optimizer::{clip_scale, Adam, AdamConfig};

pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const LAST_GOOD_CHECKPOINT: &str = "last_good.ckpt";
pub const METRICS_FILE: &str = "metrics.csv";

pub fn checkpoint_name(iteration: u64) -> String {
    format!("ckpt_{iteration:06}.ckpt")
}

fn default_batch_size() -> usize {
    16
}
fn default_eval_cadence() -> u64 {
    20
}
fn default_eval_size() -> usize {
    16
}
fn default_eval_z_samples() -> usize {
    8
}
fn default_grad_clip() -> Option<f64> {
    Some(10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub optimizer: AdamConfig,
    pub iterations: u64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub seed: u64,
    pub eval_seed: u64,
    #[serde(default = "default_eval_cadence")]
    pub eval_cadence: u64,
    #[serde(default = "default_eval_size")]
    pub eval_size: usize,
    #[serde(default = "default_eval_z_samples")]
    pub eval_z_samples: usize,
    #[serde(default = "default_grad_clip")]
    pub grad_clip: Option<f64>,
    /// Iterations at which intermediate checkpoints are written.
    #[serde(default)]
    pub checkpoint_iters: Vec<u64>,
    pub dataset: DatasetSource,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::config("iterations must be >= 1"));
        }
        if self.batch_size == 0 || self.eval_size == 0 || self.eval_z_samples == 0 {
            return Err(Error::config("batch/eval sizes must be >= 1"));
        }
        if self.eval_cadence == 0 {
            return Err(Error::config("eval cadence must be >= 1"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::config(format!("grad clip {c} must be > 0")));
            }
        }
        if self.seed == self.eval_seed {
            return Err(Error::config("eval seed must differ from the training seed"));
        }
        Adam::new(self.optimizer)?;
        self.model.validate()?;
        self.dataset.validate_model(&self.model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: u64,
    pub nll: f64,
    pub elbo: f64,
    pub kl: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
}

impl MetricsLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,nll,elbo,kl,seconds\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e},{:.3}\n",
                r.iteration, r.nll, r.elbo, r.kl, r.seconds
            ));
        }
        s
    }

    /// The CSV with the wall-time column removed; this is the part of the
    /// log covered by the byte-identical-rerun contract.
    pub fn deterministic_csv(&self) -> String {
        let mut s = String::from("iteration,nll,elbo,kl\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e}\n",
                r.iteration, r.nll, r.elbo, r.kl
            ));
        }
        s
    }

    /// Strips the trailing seconds column from a metrics CSV string, for
    /// comparing logs across reruns.
    pub fn strip_seconds(csv: &str) -> String {
        csv.lines()
            .map(|l| match l.rsplit_once(',') {
                Some((head, _)) => format!("{head}\n"),
                None => format!("{l}\n"),
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub model: Model,
    pub metrics: MetricsLog,
}

fn write_ckpt(model: &Model, dir: &Path, name: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    save_checkpoint(model, &path)?;
    Ok(path)
}

/// Runs the full training loop. When `out_dir` is given, intermediate and
/// final checkpoints plus the metrics CSV are written there; on a
/// non-finite loss the last good parameters are saved before aborting.
pub fn train(cfg: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainResult> {
    cfg.validate()?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }
    let prepared = cfg.dataset.prepare()?;
    let eval_set = prepared.eval_set(&cfg.model, cfg.eval_seed, cfg.eval_size)?;
    let mut model = Model::new(cfg.model.clone(), cfg.seed)?;
    let mut opt = Adam::new(cfg.optimizer)?;
    let mut metrics = MetricsLog::default();
    let start = Instant::now();
    for iter in 1..=cfg.iterations {
        let batches = prepared.draw(&cfg.model, cfg.seed, iter, cfg.batch_size)?;
        let noises: Vec<Vec<f64>> = (0..batches.len())
            .map(|j| standard_normal_vec(cfg.model.d_z, mix3(cfg.seed, iter, j as u64)))
            .collect();
        model.params.zero_grads();
        let stats = model.batch_loss_backward(&batches, &noises)?;
        if !stats.loss.is_finite() {
            if let Some(dir) = out_dir {
                write_ckpt(&model, dir, LAST_GOOD_CHECKPOINT)?;
            }
            return Err(Error::numeric(format!(
                "non-finite loss at iteration {iter}; last good checkpoint retained"
            )));
        }
        let scale = match cfg.grad_clip {
            Some(max) => clip_scale(&model.params, max),
            None => 1.0,
        };
        opt.step(&mut model.params, scale);
        if iter % cfg.eval_cadence == 0 || iter == cfg.iterations {
            let nll = evaluate_nll(&model, &eval_set, cfg.eval_z_samples, cfg.eval_seed)?;
            metrics.rows.push(MetricsRow {
                iteration: iter,
                nll,
                elbo: stats.elbo,
                kl: stats.kl,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
        if cfg.checkpoint_iters.contains(&iter) {
            if let Some(dir) = out_dir {
                write_ckpt(&model, dir, &checkpoint_name(iter))?;
            }
        }
    }
    if let Some(dir) = out_dir {
        write_ckpt(&model, dir, FINAL_CHECKPOINT)?;
        let path = dir.join(METRICS_FILE);
        std::fs::write(&path, metrics.to_csv())
            .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(TrainResult { model, metrics })
}
