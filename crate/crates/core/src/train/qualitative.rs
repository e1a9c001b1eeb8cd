//! Qualitative prediction dumps: per-checkpoint CSVs of the predictive
//! mean and sigma over a realization's full grid.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::synthetic::SplitRealization;
use crate::error::{Error, Result};
use crate::model::{load_checkpoint, ZMode};

use super::runner::checkpoint_name;

pub fn dump_name(iteration: u64) -> String {
    format!("qual_{iteration:06}.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitativeDump {
    /// (iteration, emitted CSV path) for every checkpoint found.
    pub written: Vec<(u64, PathBuf)>,
    /// Iterations whose checkpoint was missing.
    pub absent: Vec<u64>,
}

/// Loads the checkpoint at each listed iteration from `ckpt_dir` and
/// writes one CSV per iteration into `out_dir` with columns
/// (x, y_true, is_context, pred_mu, pred_sigma); the moment-matched
/// mixture over `n_z_samples` z draws is reported. Missing checkpoints
/// are listed as absent rather than treated as errors.
pub fn dump_qualitative(
    ckpt_dir: &Path,
    iterations: &[u64],
    split: &SplitRealization,
    n_z_samples: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<QualitativeDump> {
    if iterations.is_empty() || n_z_samples == 0 {
        return Err(Error::contract("dump_qualitative: empty iteration list or zero z samples"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let mut dump = QualitativeDump { written: vec![], absent: vec![] };
    for &iter in iterations {
        let ckpt = ckpt_dir.join(checkpoint_name(iter));
        if !ckpt.exists() {
            dump.absent.push(iter);
            continue;
        }
        let model = load_checkpoint(&ckpt)?;
        let seq_window = model.cfg.kind.uses_sequences().then_some(model.cfg.window_len);
        let batch = split.to_batch(seq_window)?;
        let pred = model.predict(&batch, n_z_samples, ZMode::Prior, seed)?;
        let r = &split.realization;
        let mut csv = String::from("x,y_true,is_context,pred_mu,pred_sigma\n");
        for (i, (&x, &y)) in r.xs.iter().zip(&r.ys).enumerate() {
            let is_ctx = split.context_idx.contains(&i) as u8;
            csv.push_str(&format!(
                "{x:.17e},{y:.17e},{is_ctx},{:.17e},{:.17e}\n",
                pred.mixture_mu[i], pred.mixture_sigma[i]
            ));
        }
        let path = out_dir.join(dump_name(iter));
        std::fs::write(&path, csv).map_err(|e| Error::io(path.display().to_string(), e))?;
        dump.written.push((iter, path));
    }
    Ok(dump)
}
