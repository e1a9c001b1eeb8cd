//! Trains several variants against a shared evaluation set and reports
//! final NLLs, curves, and the ordering.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::runner::{train, MetricsRow, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub label: String,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantOutcome {
    pub label: String,
    /// Final evaluation NLL; None when the run aborted.
    pub final_nll: Option<f64>,
    pub error: Option<String>,
    pub curve: Vec<MetricsRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub outcomes: Vec<VariantOutcome>,
    /// Labels ordered by ascending final NLL, or "tie" when all final
    /// NLLs are bit-identical.
    pub verdict: String,
}

impl ComparisonReport {
    pub fn final_nll(&self, label: &str) -> Option<f64> {
        self.outcomes.iter().find(|o| o.label == label)?.final_nll
    }
}

fn verdict(outcomes: &[VariantOutcome]) -> String {
    let mut finished: Vec<(&str, f64)> = outcomes
        .iter()
        .filter_map(|o| o.final_nll.map(|n| (o.label.as_str(), n)))
        .collect();
    if finished.is_empty() {
        return "all failed".to_string();
    }
    if finished.len() > 1 && finished.iter().all(|(_, n)| *n == finished[0].1) {
        return "tie".to_string();
    }
    finished.sort_by(|a, b| a.1.total_cmp(&b.1));
    finished.iter().map(|(l, _)| *l).collect::<Vec<_>>().join(" < ")
}

/// Sanitized per-variant subdirectory name.
fn dir_name(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Trains every variant (in parallel) and assembles the report. A member
/// run failing does not abort the others. When `out_root` is given, each
/// variant's artifacts land in a subdirectory named after its label.
pub fn compare_variants(specs: &[VariantSpec], out_root: Option<&Path>) -> Result<ComparisonReport> {
    if specs.len() < 2 {
        return Err(Error::config("compare needs at least 2 variant configs"));
    }
    let mut labels: Vec<&str> = specs.iter().map(|s| s.label.as_str()).collect();
    labels.sort_unstable();
    if labels.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::config("variant labels must be unique"));
    }
    let first = &specs[0].config;
    for s in &specs[1..] {
        if s.config.dataset != first.dataset || s.config.eval_seed != first.eval_seed {
            return Err(Error::config(
                "all variants must share the dataset source and eval seed",
            ));
        }
    }
    if let Some(root) = out_root {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root.display().to_string(), e))?;
    }
    let outcomes: Vec<VariantOutcome> = specs
        .par_iter()
        .map(|spec| {
            let out_dir = out_root.map(|r| r.join(dir_name(&spec.label)));
            match train(&spec.config, out_dir.as_deref()) {
                Ok(result) => VariantOutcome {
                    label: spec.label.clone(),
                    final_nll: result.metrics.rows.last().map(|r| r.nll),
                    error: None,
                    curve: result.metrics.rows,
                },
                Err(e) => VariantOutcome {
                    label: spec.label.clone(),
                    final_nll: None,
                    error: Some(e.to_string()),
                    curve: vec![],
                },
            }
        })
        .collect();
    let verdict = verdict(&outcomes);
    Ok(ComparisonReport { outcomes, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::SyntheticConfig;
    use crate::model::{ModelConfig, VariantKind};
    use crate::nn::AttentionKind;
    use crate::train::dataset::DatasetSource;
    use crate::train::optimizer::AdamConfig;

    fn spec(label: &str, seed: u64) -> VariantSpec {
        let mut model = ModelConfig::defaults(VariantKind::Np, AttentionKind::Uniform);
        model.d_r = 8;
        model.d_z = 4;
        model.d_h = 8;
        model.enc_hidden = vec![8];
        model.latent_hidden = vec![8];
        model.dec_hidden = vec![8];
        VariantSpec {
            label: label.to_string(),
            config: TrainConfig {
                model,
                optimizer: AdamConfig::default(),
                iterations: 2,
                batch_size: 2,
                seed,
                eval_seed: 4040,
                eval_cadence: 1,
                eval_size: 2,
                eval_z_samples: 2,
                grad_clip: Some(10.0),
                checkpoint_iters: vec![],
                dataset: DatasetSource::Synthetic { synthetic: SyntheticConfig::default() },
            },
        }
    }

    #[test]
    fn duplicated_config_is_a_tie() {
        let report = compare_variants(&[spec("a", 3), spec("b", 3)], None).unwrap();
        assert_eq!(report.outcomes.len(), 2);
        assert_eq!(report.final_nll("a"), report.final_nll("b"));
        assert_eq!(report.verdict, "tie");
        assert_eq!(report.outcomes[0].curve.len(), 2);
    }

    #[test]
    fn failed_member_is_reported_not_fatal() {
        let mut bad = spec("bad", 5);
        bad.config.iterations = 0;
        let report = compare_variants(&[spec("ok", 3), bad], None).unwrap();
        let bad_out = report.outcomes.iter().find(|o| o.label == "bad").unwrap();
        assert!(bad_out.error.is_some() && bad_out.final_nll.is_none());
        assert!(report.final_nll("ok").is_some());
        assert_eq!(report.verdict, "ok");
    }

    #[test]
    fn mismatched_eval_seeds_are_rejected() {
        let mut b = spec("b", 4);
        b.config.eval_seed = 9;
        assert!(compare_variants(&[spec("a", 3), b], None).is_err());
        assert!(compare_variants(&[spec("a", 3)], None).is_err());
        assert!(compare_variants(&[spec("a", 3), spec("a", 4)], None).is_err());
    }
}
