//! Subcommand implementations shared by the binary and the tests.

use std::path::Path;

use serde::Serialize;

use crate::autodiff::TensorValue;
use crate::data::synthetic::{draw_batch, windowed_inputs, SyntheticConfig};
use crate::data::trajectory::{synth_traffic, write_csv, CsvSchema, ScenarioConfig};
use crate::error::{Error, Result};
use crate::model::{load_checkpoint, ContextTargetBatch, InputSet, Model, ModelConfig, VariantKind, ZMode};
use crate::nn::AttentionKind;
use crate::train::{
    compare_variants, evaluate_nll, train, AdamConfig, DatasetSource, MetricsLog, TrainConfig,
    VariantSpec,
};

use super::manifest::RunManifest;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

fn make_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path.display().to_string(), e))
}

/// A full default training config for one variant, dumped by
/// `train --print-defaults` and used as the documentation of record for
/// every available key.
pub fn default_train_config(variant: VariantKind) -> TrainConfig {
    let attention = match variant {
        VariantKind::Np => AttentionKind::Uniform,
        _ => AttentionKind::MultiHead { heads: 4 },
    };
    TrainConfig {
        model: ModelConfig::defaults(variant, attention),
        optimizer: AdamConfig::default(),
        iterations: 400,
        batch_size: 16,
        seed: 1,
        eval_seed: 1_000_001,
        eval_cadence: 20,
        eval_size: 16,
        eval_z_samples: 8,
        grad_clip: Some(10.0),
        checkpoint_iters: vec![80, 160, 240, 320, 400],
        dataset: DatasetSource::Synthetic { synthetic: SyntheticConfig::default() },
    }
}

pub fn load_train_config(path: &Path) -> Result<TrainConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    toml::from_str(&text)
        .map_err(|e| Error::config(format!("invalid config {}: {e}", path.display())))
}

pub fn cmd_gen_data(task: &str, seed: u64, count: usize, out: &Path) -> Result<()> {
    make_dir(out)?;
    let artifact = match task {
        "synthetic" => {
            let mut csv = String::from("realization,x,y\n");
            if count > 0 {
                let batch = draw_batch(&SyntheticConfig::default(), seed, count)?;
                for (i, item) in batch.items.iter().enumerate() {
                    let r = &item.realization;
                    for (x, y) in r.xs.iter().zip(&r.ys) {
                        csv.push_str(&format!("{i},{x:.17e},{y:.17e}\n"));
                    }
                }
            }
            write_file(&out.join("synthetic.csv"), &csv)?;
            "synthetic.csv"
        }
        "traffic" => {
            // scenarios are concatenated into one file; vehicle ids are
            // offset by 1000 per scenario so records stay unique
            let cfg = ScenarioConfig::default();
            let mut records = Vec::new();
            for i in 0..count {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64 + 1);
                let mut scenario = synth_traffic(&mut rng, &cfg)?;
                for r in &mut scenario {
                    r.vehicle_id += i as i64 * 1000;
                }
                records.extend(scenario);
            }
            write_csv(&out.join("traffic.csv"), &CsvSchema::default(), &records)?;
            "traffic.csv"
        }
        other => return Err(Error::config(format!("unknown task {other:?}"))),
    };
    let manifest = RunManifest::new(
        "gen-data",
        seed,
        serde_json::json!({ "task": task, "count": count }),
        vec![artifact.to_string()],
    );
    manifest.save(out)
}

pub fn cmd_train(
    config: Option<&Path>,
    manifest: Option<&Path>,
    seed_override: Option<u64>,
    iterations_override: Option<u64>,
    out: &Path,
) -> Result<()> {
    let mut cfg = match (config, manifest) {
        (Some(path), None) => load_train_config(path)?,
        (None, Some(path)) => RunManifest::load(path)?.config_as::<TrainConfig>()?,
        _ => return Err(Error::config("pass exactly one of --config or --manifest")),
    };
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    if let Some(iters) = iterations_override {
        cfg.iterations = iters;
    }
    let result = train(&cfg, Some(out))?;
    let mut artifacts = vec![
        crate::train::runner::METRICS_FILE.to_string(),
        crate::train::runner::FINAL_CHECKPOINT.to_string(),
    ];
    for &it in &cfg.checkpoint_iters {
        if it <= cfg.iterations {
            artifacts.push(crate::train::runner::checkpoint_name(it));
        }
    }
    let config_json = serde_json::to_value(&cfg)
        .map_err(|e| Error::format(format!("cannot encode config: {e}")))?;
    RunManifest::new("train", cfg.seed, config_json, artifacts).save(out)?;
    if let Some(row) = result.metrics.rows.last() {
        println!("trained {} iterations; final eval NLL {:.6}", cfg.iterations, row.nll);
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub checkpoint: String,
    pub eval_seed: u64,
    pub eval_size: usize,
    pub z_samples: usize,
    pub nll: f64,
    pub tool_version: String,
}

pub fn cmd_eval(
    checkpoint: &Path,
    config: &Path,
    eval_seed: u64,
    eval_size: usize,
    z_samples: usize,
    out: Option<&Path>,
) -> Result<f64> {
    let model = load_checkpoint(checkpoint)?;
    let train_cfg = load_train_config(config)?;
    train_cfg.dataset.validate_model(&model.cfg)?;
    let prepared = train_cfg.dataset.prepare()?;
    let eval_set = prepared.eval_set(&model.cfg, eval_seed, eval_size)?;
    let nll = evaluate_nll(&model, &eval_set, z_samples, eval_seed)?;
    println!("mean target NLL: {nll:.6}");
    if let Some(path) = out {
        let report = EvalReport {
            checkpoint: checkpoint.display().to_string(),
            eval_seed,
            eval_size,
            z_samples,
            nll,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        };
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| Error::format(format!("cannot encode report: {e}")))?;
        write_file(path, &json)?;
    }
    Ok(nll)
}

/// Reads a one- or two-column CSV (`x` or `x,y`) of 1-D coordinates.
fn read_xy(path: &Path, want_y: bool) -> Result<(Vec<f64>, Vec<f64>)> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| Error::data(format!("{}: empty file", path.display())))?
        .1;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let expected: &[&str] = if want_y { &["x", "y"] } else { &["x"] };
    if cols != expected {
        return Err(Error::data(format!(
            "{}: expected header {:?}, got {header:?}",
            path.display(),
            expected.join(",")
        )));
    }
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != expected.len() {
            return Err(Error::data(format!(
                "{} line {}: expected {} fields, got {}",
                path.display(),
                i + 1,
                expected.len(),
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| {
                Error::data(format!("{} line {}: bad number {s:?}", path.display(), i + 1))
            })
        };
        xs.push(parse(fields[0])?);
        if want_y {
            ys.push(parse(fields[1])?);
        }
    }
    if xs.is_empty() {
        return Err(Error::data(format!("{}: no data rows", path.display())));
    }
    Ok((xs, ys))
}

fn inputs_from_xs(model: &Model, xs: &[f64]) -> Result<InputSet> {
    if model.cfg.kind.uses_sequences() {
        let all: Vec<usize> = (0..xs.len()).collect();
        Ok(InputSet::Sequences(windowed_inputs(xs, &all, model.cfg.window_len)?))
    } else {
        Ok(InputSet::Points(TensorValue::matrix(xs.len(), 1, xs.to_vec())?))
    }
}

pub fn cmd_predict(
    checkpoint: &Path,
    context: &Path,
    targets: &Path,
    z_samples: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let model = load_checkpoint(checkpoint)?;
    if model.cfg.d_x != 1 || model.cfg.d_y != 1 {
        return Err(Error::config("predict supports 1-D checkpoints only"));
    }
    let (ctx_x, ctx_y) = read_xy(context, true)?;
    let (tgt_x, _) = read_xy(targets, false)?;
    let batch = ContextTargetBatch::new(
        inputs_from_xs(&model, &ctx_x)?,
        TensorValue::matrix(ctx_x.len(), 1, ctx_y)?,
        inputs_from_xs(&model, &tgt_x)?,
        None,
    )?;
    let mean_z = model.predict(&batch, 1, ZMode::MeanZ, seed)?;
    let prior = model.predict(&batch, z_samples, ZMode::Prior, seed)?;
    let mut csv = String::from("x,pred_mu_meanz,pred_sigma_meanz,pred_mu_prior,pred_sigma_prior\n");
    for (i, x) in tgt_x.iter().enumerate() {
        csv.push_str(&format!(
            "{x:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
            mean_z.mixture_mu[i], mean_z.mixture_sigma[i], prior.mixture_mu[i],
            prior.mixture_sigma[i]
        ));
    }
    write_file(out, &csv)
}

pub fn cmd_compare(configs_dir: &Path, out: &Path) -> Result<()> {
    let entries = std::fs::read_dir(configs_dir)
        .map_err(|e| Error::io(configs_dir.display().to_string(), e))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    if paths.len() < 2 {
        return Err(Error::config(format!(
            "{}: need at least 2 .toml configs, found {}",
            configs_dir.display(),
            paths.len()
        )));
    }
    let specs: Vec<VariantSpec> = paths
        .iter()
        .map(|p| {
            let label = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(VariantSpec { label, config: load_train_config(p)? })
        })
        .collect::<Result<_>>()?;
    make_dir(out)?;
    let report = compare_variants(&specs, Some(&out.join("runs")))?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::format(format!("cannot encode report: {e}")))?;
    write_file(&out.join("comparison.json"), &json)?;
    let curves = out.join("curves");
    make_dir(&curves)?;
    for o in &report.outcomes {
        let log = MetricsLog { rows: o.curve.clone() };
        write_file(&curves.join(format!("{}.csv", o.label)), &log.to_csv())?;
    }
    let config_json = serde_json::to_value(&specs)
        .map_err(|e| Error::format(format!("cannot encode configs: {e}")))?;
    let seed = specs[0].config.eval_seed;
    let mut artifacts = vec!["comparison.json".to_string()];
    artifacts.extend(report.outcomes.iter().map(|o| format!("curves/{}.csv", o.label)));
    RunManifest::new("compare", seed, config_json, artifacts).save(out)?;
    println!("verdict: {}", report.verdict);
    Ok(())
}
