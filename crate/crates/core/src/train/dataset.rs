//! Dataset sources feeding the training loop: fresh synthetic batches
//! per iteration, or a fixed pool of trajectory episodes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::TensorValue;
use crate::data::synthetic::{draw_batch, SyntheticConfig};
use crate::data::trajectory::{
    apply_normalize, build_windows, fit_normalize, synth_traffic, NormStats, ScenarioConfig,
    TrajectoryWindow, WindowConfig, SYNTH_EGO_ID,
};
use crate::error::{Error, Result};
use crate::model::{ContextTargetBatch, InputSet, ModelConfig};

use super::mix2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajAxis {
    Lateral,
    Longitudinal,
}

impl TrajAxis {
    pub fn index(self) -> usize {
        match self {
            TrajAxis::Lateral => 0,
            TrajAxis::Longitudinal => 1,
        }
    }
}

/// Synthetic lane-change episode pool for one prediction axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryTaskConfig {
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub window: WindowConfig,
    pub n_scenarios: usize,
    pub scenario_seed: u64,
    pub axis: TrajAxis,
    /// Fraction of each episode's earliest windows used as context.
    #[serde(default = "default_ctx_fraction")]
    pub ctx_fraction: f64,
    #[serde(default = "default_normalize")]
    pub normalize: bool,
}

fn default_ctx_fraction() -> f64 {
    0.5
}

fn default_normalize() -> bool {
    true
}

impl TrajectoryTaskConfig {
    pub fn defaults(axis: TrajAxis, n_scenarios: usize, scenario_seed: u64) -> Self {
        TrajectoryTaskConfig {
            scenario: ScenarioConfig::default(),
            window: WindowConfig::default(),
            n_scenarios,
            scenario_seed,
            axis,
            ctx_fraction: 0.5,
            normalize: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_scenarios == 0 {
            return Err(Error::config("trajectory task needs at least one scenario"));
        }
        if !(self.ctx_fraction > 0.0 && self.ctx_fraction < 1.0) {
            return Err(Error::config(format!(
                "ctx_fraction {} must lie in (0, 1)",
                self.ctx_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSource {
    Synthetic {
        #[serde(default)]
        synthetic: SyntheticConfig,
    },
    Trajectory { trajectory: TrajectoryTaskConfig },
}

impl DatasetSource {
    /// Checks that the model's input/output dims fit this dataset.
    pub fn validate_model(&self, model: &ModelConfig) -> Result<()> {
        match self {
            DatasetSource::Synthetic { .. } => {
                if model.d_x != 1 || model.d_y != 1 {
                    return Err(Error::config(format!(
                        "synthetic task is 1D; model has d_x {} d_y {}",
                        model.d_x, model.d_y
                    )));
                }
            }
            DatasetSource::Trajectory { trajectory } => {
                let want = 2 * trajectory.window.neighbor_slots;
                if model.d_x != want || model.d_y != 1 {
                    return Err(Error::config(format!(
                        "trajectory task has {want} features per frame and 1 output; \
                         model has d_x {} d_y {}",
                        model.d_x, model.d_y
                    )));
                }
                if model.kind.uses_sequences() && model.window_len != trajectory.window.window_len {
                    return Err(Error::config(format!(
                        "model window_len {} != trajectory window_len {}",
                        model.window_len, trajectory.window.window_len
                    )));
                }
            }
        }
        Ok(())
    }

    /// One-time preparation (episode pool and normalization stats for the
    /// trajectory task; a no-op for the synthetic task).
    pub fn prepare(&self) -> Result<PreparedDataset> {
        match self {
            DatasetSource::Synthetic { synthetic } => {
                Ok(PreparedDataset::Synthetic { cfg: synthetic.clone() })
            }
            DatasetSource::Trajectory { trajectory } => {
                trajectory.validate()?;
                let mut episodes = build_episodes(trajectory, trajectory.scenario_seed, trajectory.n_scenarios)?;
                let stats = if trajectory.normalize {
                    let all: Vec<TrajectoryWindow> =
                        episodes.iter().flat_map(|e| e.iter().cloned()).collect();
                    let stats = fit_normalize(&all)?;
                    for e in &mut episodes {
                        apply_normalize(e, &stats)?;
                    }
                    Some(stats)
                } else {
                    None
                };
                Ok(PreparedDataset::Trajectory { cfg: trajectory.clone(), episodes, stats })
            }
        }
    }
}

/// Deterministic per-scenario window sets; scenario i uses rng stream i+1.
pub fn build_episodes(
    cfg: &TrajectoryTaskConfig,
    seed: u64,
    count: usize,
) -> Result<Vec<Vec<TrajectoryWindow>>> {
    let mut episodes = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        let records = synth_traffic(&mut rng, &cfg.scenario)?;
        let windows = build_windows(&records, &cfg.window, SYNTH_EGO_ID)?;
        if windows.is_empty() {
            return Err(Error::data(format!(
                "scenario {i}: too short for window length {}",
                cfg.window.window_len
            )));
        }
        episodes.push(windows);
    }
    Ok(episodes)
}

#[derive(Debug, Clone)]
pub enum PreparedDataset {
    Synthetic {
        cfg: SyntheticConfig,
    },
    Trajectory {
        cfg: TrajectoryTaskConfig,
        episodes: Vec<Vec<TrajectoryWindow>>,
        stats: Option<NormStats>,
    },
}

impl PreparedDataset {
    /// Batch for one training iteration, deterministic in (seed, iter).
    pub fn draw(
        &self,
        model: &ModelConfig,
        seed: u64,
        iter: u64,
        batch_size: usize,
    ) -> Result<Vec<ContextTargetBatch>> {
        if batch_size == 0 {
            return Err(Error::config("batch size must be >= 1"));
        }
        match self {
            PreparedDataset::Synthetic { cfg } => {
                let seq_window = model.kind.uses_sequences().then_some(model.window_len);
                let batch = draw_batch(cfg, mix2(seed, iter), batch_size)?;
                batch.items.iter().map(|it| it.to_batch(seq_window)).collect()
            }
            PreparedDataset::Trajectory { cfg, episodes, .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(mix2(seed, iter));
                (0..batch_size)
                    .map(|_| {
                        let idx = rng.gen_range(0..episodes.len());
                        episode_to_batch(&episodes[idx], model, cfg.axis, cfg.ctx_fraction)
                    })
                    .collect()
            }
        }
    }

    /// Held-out evaluation set, disjoint from training by seed choice.
    pub fn eval_set(
        &self,
        model: &ModelConfig,
        eval_seed: u64,
        count: usize,
    ) -> Result<Vec<ContextTargetBatch>> {
        match self {
            PreparedDataset::Synthetic { cfg } => {
                let seq_window = model.kind.uses_sequences().then_some(model.window_len);
                let batch = draw_batch(cfg, eval_seed, count)?;
                batch.items.iter().map(|it| it.to_batch(seq_window)).collect()
            }
            PreparedDataset::Trajectory { cfg, stats, .. } => {
                let mut episodes = build_episodes(cfg, eval_seed, count)?;
                if let Some(stats) = stats {
                    for e in &mut episodes {
                        apply_normalize(e, stats)?;
                    }
                }
                episodes
                    .iter()
                    .map(|e| episode_to_batch(e, model, cfg.axis, cfg.ctx_fraction))
                    .collect()
            }
        }
    }
}

/// Turns one episode's windows into a context/target batch. Contexts are
/// the earliest windows (prefix in time); targets are all windows.
pub fn episode_to_batch(
    windows: &[TrajectoryWindow],
    model: &ModelConfig,
    axis: TrajAxis,
    ctx_fraction: f64,
) -> Result<ContextTargetBatch> {
    let n = windows.len();
    if n < 2 {
        return Err(Error::data("episode needs at least 2 windows"));
    }
    let ctx = (((n as f64) * ctx_fraction).round() as usize).clamp(1, n - 1);
    let d = windows[0].feature_dim();
    let l = windows[0].window_len;
    let ys: Vec<f64> = windows.iter().map(|w| w.target[axis.index()]).collect();
    let inputs = |ws: &[TrajectoryWindow]| -> Result<InputSet> {
        if model.kind.uses_sequences() {
            let mut data = Vec::with_capacity(ws.len() * l * d);
            for w in ws {
                data.extend_from_slice(&w.features);
            }
            Ok(InputSet::Sequences(TensorValue::new(vec![ws.len(), l, d], data)?))
        } else {
            // points variant: the newest frame's features only
            let mut data = Vec::with_capacity(ws.len() * d);
            for w in ws {
                data.extend_from_slice(&w.features[(l - 1) * d..]);
            }
            Ok(InputSet::Points(TensorValue::matrix(ws.len(), d, data)?))
        }
    };
    ContextTargetBatch::new(
        inputs(&windows[..ctx])?,
        TensorValue::matrix(ctx, 1, ys[..ctx].to_vec())?,
        inputs(windows)?,
        Some(TensorValue::matrix(n, 1, ys)?),
    )
}
