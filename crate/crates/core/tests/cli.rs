//! End-to-end tests of the CLI command layer.

use std::path::Path;

use ranp::cli::{
    cmd_compare, cmd_eval, cmd_gen_data, cmd_predict, cmd_train, default_train_config,
    RunManifest, MANIFEST_FILE,
};
use ranp::model::{load_checkpoint, VariantKind, ZMode};
use ranp::train::runner::{FINAL_CHECKPOINT, METRICS_FILE};
use ranp::train::{MetricsLog, TrainConfig};

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn tiny_config(variant: VariantKind, seed: u64, iterations: u64) -> TrainConfig {
    let mut cfg = default_train_config(variant);
    cfg.model.d_r = 8;
    cfg.model.d_z = 4;
    cfg.model.d_h = 8;
    cfg.model.enc_hidden = vec![8];
    cfg.model.latent_hidden = vec![8];
    cfg.model.dec_hidden = vec![8];
    if let ranp::nn::AttentionKind::MultiHead { heads } = &mut cfg.model.attention {
        *heads = 2;
    }
    cfg.iterations = iterations;
    cfg.batch_size = 2;
    cfg.seed = seed;
    cfg.eval_size = 2;
    cfg.eval_z_samples = 2;
    cfg.checkpoint_iters = vec![];
    cfg
}

fn write_config(dir: &Path, name: &str, cfg: &TrainConfig) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, toml::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

#[test]
fn gen_data_synthetic_is_deterministic_and_on_spec() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cmd_gen_data("synthetic", 5, 3, a.path()).unwrap();
    cmd_gen_data("synthetic", 5, 3, b.path()).unwrap();
    let csv = read(&a.path().join("synthetic.csv"));
    assert_eq!(csv, read(&b.path().join("synthetic.csv")));
    assert!(a.path().join(MANIFEST_FILE).exists());
    // 3 realizations x 50 grid points, spacing 0.1, within [-4, 4]
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 150);
    let xs: Vec<f64> = rows
        .iter()
        .filter(|r| r[0] == "0")
        .map(|r| r[1].parse().unwrap())
        .collect();
    assert_eq!(xs.len(), 50);
    for w in xs.windows(2) {
        assert!((w[1] - w[0] - 0.1).abs() < 1e-12);
    }
    assert!(xs.iter().all(|&x| (-4.0..=4.0).contains(&x)));
}

#[test]
fn gen_data_count_zero_gives_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    cmd_gen_data("synthetic", 1, 0, dir.path()).unwrap();
    assert_eq!(read(&dir.path().join("synthetic.csv")), "realization,x,y\n");
    assert!(dir.path().join(MANIFEST_FILE).exists());
    let dir2 = tempfile::tempdir().unwrap();
    cmd_gen_data("traffic", 1, 0, dir2.path()).unwrap();
    assert_eq!(read(&dir2.path().join("traffic.csv")).lines().count(), 1);
}

#[test]
fn gen_data_traffic_is_deterministic_and_loadable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cmd_gen_data("traffic", 9, 2, a.path()).unwrap();
    cmd_gen_data("traffic", 9, 2, b.path()).unwrap();
    let csv_a = read(&a.path().join("traffic.csv"));
    assert_eq!(csv_a, read(&b.path().join("traffic.csv")));
    let records = ranp::data::trajectory::load_csv(
        &a.path().join("traffic.csv"),
        &ranp::data::trajectory::CsvSchema::default(),
    )
    .unwrap();
    assert!(!records.is_empty());
    // vehicle-id offsets keep the concatenated scenarios duplicate-free
    let mut keys: Vec<(i64, i64)> = records.iter().map(|r| (r.vehicle_id, r.frame)).collect();
    keys.sort_unstable();
    keys.dedup();
    assert_eq!(keys.len(), records.len());
}

#[test]
fn gen_data_unknown_task_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_gen_data("nonsense", 1, 1, dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn train_writes_metrics_and_reruns_identically_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), "np.toml", &tiny_config(VariantKind::Np, 3, 1));
    let run_a = dir.path().join("a");
    cmd_train(Some(&cfg_path), None, None, None, &run_a).unwrap();
    // --iterations 1 -> one-row metrics CSV
    let metrics_a = read(&run_a.join(METRICS_FILE));
    assert_eq!(metrics_a.lines().count(), 2);

    // rerun from the manifest alone: metrics (modulo wall time) and
    // checkpoint bytes must match
    let run_b = dir.path().join("b");
    cmd_train(None, Some(&run_a.join(MANIFEST_FILE)), None, None, &run_b).unwrap();
    let metrics_b = read(&run_b.join(METRICS_FILE));
    assert_eq!(MetricsLog::strip_seconds(&metrics_a), MetricsLog::strip_seconds(&metrics_b));
    let ckpt_a = std::fs::read(run_a.join(FINAL_CHECKPOINT)).unwrap();
    let ckpt_b = std::fs::read(run_b.join(FINAL_CHECKPOINT)).unwrap();
    assert_eq!(ckpt_a, ckpt_b);
}

#[test]
fn train_missing_config_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no_such.toml");
    let err = cmd_train(Some(&missing), None, None, None, &dir.path().join("out")).unwrap_err();
    assert!(err.to_string().contains("no_such.toml"), "{err}");
    assert!(err.exit_code() != 0);
}

#[test]
fn train_invalid_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "iterations = \"many\"\n").unwrap();
    let err = cmd_train(Some(&bad), None, None, None, &dir.path().join("out")).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("iterations"), "{err}");
}

#[test]
fn eval_is_deterministic_and_reports_the_sample_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(VariantKind::Np, 4, 1);
    let cfg_path = write_config(dir.path(), "np.toml", &cfg);
    let run = dir.path().join("run");
    cmd_train(Some(&cfg_path), None, None, None, &run).unwrap();
    let ckpt = run.join(FINAL_CHECKPOINT);
    let r1 = dir.path().join("r1.json");
    let r2 = dir.path().join("r2.json");
    let nll = cmd_eval(&ckpt, &cfg_path, 909, 2, 16, Some(&r1)).unwrap();
    cmd_eval(&ckpt, &cfg_path, 909, 2, 16, Some(&r2)).unwrap();
    assert!(nll.is_finite());
    assert_eq!(read(&r1), read(&r2));
    let report: serde_json::Value = serde_json::from_str(&read(&r1)).unwrap();
    assert_eq!(report["z_samples"], 16);
}

#[test]
fn predict_matches_the_library_and_flags_bad_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(VariantKind::AnpRnn, 6, 1);
    let cfg_path = write_config(dir.path(), "rnn.toml", &cfg);
    let run = dir.path().join("run");
    cmd_train(Some(&cfg_path), None, None, None, &run).unwrap();
    let ckpt = run.join(FINAL_CHECKPOINT);

    let ctx = dir.path().join("ctx.csv");
    std::fs::write(&ctx, "x,y\n-1.0,0.5\n0.0,0.0\n1.0,-0.5\n").unwrap();
    let tgt = dir.path().join("tgt.csv");
    std::fs::write(&tgt, "x\n-1.0\n0.0\n1.0\n").unwrap();
    let out = dir.path().join("pred.csv");
    cmd_predict(&ckpt, &ctx, &tgt, 4, 11, &out).unwrap();
    let csv = read(&out);
    // targets = contexts -> one output row per context row
    assert_eq!(csv.lines().count() - 1, 3);

    // emitted prior-mixture values equal a fresh library predict()
    let model = load_checkpoint(&ckpt).unwrap();
    let all: Vec<usize> = (0..3).collect();
    let xs = [-1.0, 0.0, 1.0];
    let seqs = ranp::data::synthetic::windowed_inputs(&xs, &all, model.cfg.window_len).unwrap();
    let batch = ranp::model::ContextTargetBatch::new(
        ranp::model::InputSet::Sequences(seqs.clone()),
        ranp::autodiff::TensorValue::matrix(3, 1, vec![0.5, 0.0, -0.5]).unwrap(),
        ranp::model::InputSet::Sequences(seqs),
        None,
    )
    .unwrap();
    let fresh = model.predict(&batch, 4, ZMode::Prior, 11).unwrap();
    for (i, line) in csv.lines().skip(1).enumerate() {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!((cols[3] - fresh.mixture_mu[i]).abs() < 1e-12);
        assert!((cols[4] - fresh.mixture_sigma[i]).abs() < 1e-12);
    }

    // malformed row -> error naming the line number
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x,y\n0.0,1.0\noops,2.0\n").unwrap();
    let err = cmd_predict(&ckpt, &bad, &tgt, 2, 1, &out).unwrap_err();
    assert!(err.to_string().contains("line 3"), "{err}");
    // empty context -> usage/data error
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "x,y\n").unwrap();
    assert!(cmd_predict(&ckpt, &empty, &tgt, 2, 1, &out).is_err());
}

#[test]
fn compare_ties_on_identical_configs_and_needs_two() {
    let dir = tempfile::tempdir().unwrap();
    let configs = dir.path().join("configs");
    std::fs::create_dir_all(&configs).unwrap();
    let cfg = tiny_config(VariantKind::Np, 8, 2);
    write_config(&configs, "a.toml", &cfg);
    write_config(&configs, "b.toml", &cfg);
    let out = dir.path().join("out");
    cmd_compare(&configs, &out).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&read(&out.join("comparison.json"))).unwrap();
    assert_eq!(report["verdict"], "tie");
    assert_eq!(report["outcomes"].as_array().unwrap().len(), 2);
    // curve CSV rows = iterations / cadence (2 iterations, cadence 20 ->
    // only the final iteration logs)
    let curve = read(&out.join("curves").join("a.csv"));
    assert_eq!(curve.lines().count() - 1, 1);
    assert!(out.join("runs").join("a").join(FINAL_CHECKPOINT).exists());

    let lonely = dir.path().join("one");
    std::fs::create_dir_all(&lonely).unwrap();
    write_config(&lonely, "a.toml", &cfg);
    let err = cmd_compare(&lonely, &out).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn manifest_records_tool_version_and_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(VariantKind::Np, 2, 1);
    let cfg_path = write_config(dir.path(), "np.toml", &cfg);
    let run = dir.path().join("run");
    cmd_train(Some(&cfg_path), None, Some(99), None, &run).unwrap();
    let m = RunManifest::load(&run.join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.command, "train");
    assert_eq!(m.seed, 99);
    assert_eq!(m.tool_version, env!("CARGO_PKG_VERSION"));
    let resolved: TrainConfig = m.config_as().unwrap();
    assert_eq!(resolved.seed, 99);
    assert!(m.artifacts.iter().any(|a| a == METRICS_FILE));
}
