//! Evaluation: mean target NLL under the context posterior, with a
//! log-mean-exp average across z samples.

use crate::error::{Error, Result};
use crate::model::{ContextTargetBatch, Model, ZMode};

use super::mix3;

/// Per-target log-mean-exp over z of the Gaussian log-likelihood, then
/// averaged over targets; returned sign-flipped as NLL. `samples` holds
/// one (mu, sigma) pair per z draw, flattened n_t x d_y.
pub fn nll_from_samples(samples: &[(Vec<f64>, Vec<f64>)], y: &[f64], d_y: usize) -> Result<f64> {
    const HALF_LOG_2PI: f64 = 0.9189385332046727;
    if samples.is_empty() || d_y == 0 || y.is_empty() || y.len() % d_y != 0 {
        return Err(Error::contract("nll_from_samples: malformed inputs"));
    }
    let n_t = y.len() / d_y;
    let n_z = samples.len();
    let mut total = 0.0;
    for i in 0..n_t {
        // log p per z sample, summed over output dims
        let mut lps = Vec::with_capacity(n_z);
        for (mu, sigma) in samples {
            if mu.len() != y.len() || sigma.len() != y.len() {
                return Err(Error::shape("nll_from_samples: sample length mismatch"));
            }
            let mut lp = 0.0;
            for d in 0..d_y {
                let idx = i * d_y + d;
                let diff = y[idx] - mu[idx];
                let s = sigma[idx];
                if s <= 0.0 {
                    return Err(Error::domain("nll_from_samples: nonpositive sigma"));
                }
                lp += -HALF_LOG_2PI - s.ln() - diff * diff / (2.0 * s * s);
            }
            lps.push(lp);
        }
        let max = lps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lme = max + (lps.iter().map(|l| (l - max).exp()).sum::<f64>() / n_z as f64).ln();
        total += lme;
    }
    Ok(-total / n_t as f64)
}

/// Mean target NLL over an evaluation set, z drawn from q(z|s_C).
pub fn evaluate_nll(
    model: &Model,
    eval: &[ContextTargetBatch],
    n_z_samples: usize,
    seed: u64,
) -> Result<f64> {
    if eval.is_empty() || n_z_samples == 0 {
        return Err(Error::contract("evaluate_nll: empty eval set or zero z samples"));
    }
    let d_z = model.cfg.d_z;
    let mut acc = 0.0;
    for (j, batch) in eval.iter().enumerate() {
        let y = batch
            .y_t
            .as_ref()
            .ok_or_else(|| Error::contract("evaluate_nll: batch has no target outputs"))?;
        let noises: Vec<Vec<f64>> = (0..n_z_samples)
            .map(|s| crate::model::standard_normal_vec(d_z, mix3(seed, j as u64, s as u64)))
            .collect();
        let pred = model.predict_with_noises(batch, &noises, ZMode::Prior)?;
        acc += nll_from_samples(&pred.samples, y.data(), model.cfg.d_y)?;
    }
    Ok(acc / eval.len() as f64)
}
