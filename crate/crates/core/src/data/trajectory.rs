//! Trajectory-prediction pipeline: CSV ingestion, neighbor windowing,
//! normalization, a synthetic traffic generator, and horizon metrics.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const HALF_LOG_2PI: f64 = 0.9189385332046727;

fn csv_io_error(path: &Path, e: csv::Error) -> Error {
    Error::io(
        path.display().to_string(),
        std::io::Error::new(std::io::ErrorKind::Other, e),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub vehicle_id: i64,
    pub frame: i64,
    /// Lateral position, meters.
    pub lateral: f64,
    /// Longitudinal position, meters.
    pub longitudinal: f64,
}

/// Column-name mapping for input CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub vehicle_id: String,
    pub frame: String,
    pub lateral: String,
    pub longitudinal: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            vehicle_id: "vehicle_id".into(),
            frame: "frame".into(),
            lateral: "local_x".into(),
            longitudinal: "local_y".into(),
        }
    }
}

/// One model example: `features` is L rows (oldest first) of K neighbor
/// offsets, `target` is the ego offset at the newest frame. All offsets
/// are relative to the ego position at the window's first frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryWindow {
    /// Flattened L x (2K) row-major feature block.
    pub features: Vec<f64>,
    pub window_len: usize,
    pub neighbor_slots: usize,
    /// (lateral, longitudinal) ego offset at the prediction frame.
    pub target: [f64; 2],
    pub frame: i64,
}

impl TrajectoryWindow {
    pub fn feature_dim(&self) -> usize {
        2 * self.neighbor_slots
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window_len: usize,
    pub neighbor_slots: usize,
    /// Offset used for absent neighbors, meters.
    pub sentinel: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { window_len: 10, neighbor_slots: 6, sentinel: 100.0 }
    }
}

/// Per-feature and per-target-axis z-score statistics fitted on a
/// training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub target_mean: [f64; 2],
    pub target_std: [f64; 2],
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Vec<TrajectoryRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_io_error(path, e))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Ok(Vec::new());
    }
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::format(format!("{}: missing column '{name}'", path.display())))
    };
    let (ci, cf, cla, clo) = (
        col(&schema.vehicle_id)?,
        col(&schema.frame)?,
        col(&schema.lateral)?,
        col(&schema.longitudinal)?,
    );
    let mut records = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        let field = |idx: usize| -> Result<&str> {
            row.get(idx)
                .ok_or_else(|| Error::data(format!("{}: short row at record {line}", path.display())))
        };
        let parse_f = |idx: usize, name: &str| -> Result<f64> {
            let v: f64 = field(idx)?
                .trim()
                .parse()
                .map_err(|_| Error::data(format!("record {line}: bad {name} value")))?;
            if !v.is_finite() {
                return Err(Error::data(format!("record {line}: non-finite {name}")));
            }
            Ok(v)
        };
        let parse_i = |idx: usize, name: &str| -> Result<i64> {
            field(idx)?
                .trim()
                .parse()
                .map_err(|_| Error::data(format!("record {line}: bad {name} value")))
        };
        records.push(TrajectoryRecord {
            vehicle_id: parse_i(ci, "vehicle_id")?,
            frame: parse_i(cf, "frame")?,
            lateral: parse_f(cla, "lateral")?,
            longitudinal: parse_f(clo, "longitudinal")?,
        });
    }
    canonicalize(&mut records)?;
    Ok(records)
}

pub fn write_csv(path: &Path, schema: &CsvSchema, records: &[TrajectoryRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io_error(path, e))?;
    w.write_record([&schema.vehicle_id, &schema.frame, &schema.lateral, &schema.longitudinal])
        .map_err(|e| csv_io_error(path, e))?;
    for r in records {
        w.write_record([
            r.vehicle_id.to_string(),
            r.frame.to_string(),
            r.lateral.to_string(),
            r.longitudinal.to_string(),
        ])
        .map_err(|e| csv_io_error(path, e))?;
    }
    w.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Sorts by (vehicle, frame) and rejects duplicate (vehicle, frame) pairs.
fn canonicalize(records: &mut [TrajectoryRecord]) -> Result<()> {
    records.sort_by_key(|r| (r.vehicle_id, r.frame));
    for pair in records.windows(2) {
        if pair[0].vehicle_id == pair[1].vehicle_id && pair[0].frame == pair[1].frame {
            return Err(Error::data(format!(
                "duplicate (vehicle {}, frame {}) record",
                pair[0].vehicle_id, pair[0].frame
            )));
        }
    }
    Ok(())
}

/// Builds length-L windows of neighbor offsets around `ego_id`.
pub fn build_windows(
    records: &[TrajectoryRecord],
    cfg: &WindowConfig,
    ego_id: i64,
) -> Result<Vec<TrajectoryWindow>> {
    if cfg.window_len == 0 || cfg.neighbor_slots == 0 {
        return Err(Error::config("window_len and neighbor_slots must be >= 1"));
    }
    let mut sorted = records.to_vec();
    canonicalize(&mut sorted)?;
    // per-frame position index: frame -> vehicle -> position
    let mut by_frame: BTreeMap<i64, BTreeMap<i64, [f64; 2]>> = BTreeMap::new();
    let mut ego_frames: Vec<i64> = Vec::new();
    for r in &sorted {
        by_frame
            .entry(r.frame)
            .or_default()
            .insert(r.vehicle_id, [r.lateral, r.longitudinal]);
        if r.vehicle_id == ego_id {
            ego_frames.push(r.frame);
        }
    }
    if ego_frames.is_empty() {
        return Err(Error::data(format!("ego vehicle {ego_id} not present")));
    }
    let l = cfg.window_len as i64;
    let mut windows = Vec::new();
    for &frame in &ego_frames {
        let start = frame - l + 1;
        let contiguous = (start..=frame).all(|f| {
            by_frame.get(&f).map_or(false, |m| m.contains_key(&ego_id))
        });
        if !contiguous {
            continue;
        }
        let origin = by_frame[&start][&ego_id];
        let ego_now = by_frame[&frame][&ego_id];
        // neighbor slots: K nearest to the ego at the prediction frame
        let mut neighbors: Vec<(f64, i64)> = by_frame[&frame]
            .iter()
            .filter(|(&id, _)| id != ego_id)
            .map(|(&id, p)| {
                let d = ((p[0] - ego_now[0]).powi(2) + (p[1] - ego_now[1]).powi(2)).sqrt();
                (d, id)
            })
            .collect();
        neighbors.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        neighbors.truncate(cfg.neighbor_slots);
        let slot_ids: Vec<Option<i64>> = (0..cfg.neighbor_slots)
            .map(|s| neighbors.get(s).map(|&(_, id)| id))
            .collect();
        let mut features = Vec::with_capacity(cfg.window_len * 2 * cfg.neighbor_slots);
        for f in start..=frame {
            let positions = &by_frame[&f];
            for slot in &slot_ids {
                match slot.and_then(|id| positions.get(&id)) {
                    Some(p) => {
                        features.push(p[0] - origin[0]);
                        features.push(p[1] - origin[1]);
                    }
                    None => {
                        features.push(cfg.sentinel);
                        features.push(cfg.sentinel);
                    }
                }
            }
        }
        windows.push(TrajectoryWindow {
            features,
            window_len: cfg.window_len,
            neighbor_slots: cfg.neighbor_slots,
            target: [ego_now[0] - origin[0], ego_now[1] - origin[1]],
            frame,
        });
    }
    Ok(windows)
}

pub fn fit_normalize(windows: &[TrajectoryWindow]) -> Result<NormStats> {
    let first = windows
        .first()
        .ok_or_else(|| Error::contract("fit_normalize: empty training set"))?;
    let d = first.features.len();
    let n = windows.len() as f64;
    let mut mean = vec![0.0; d];
    for w in windows {
        if w.features.len() != d {
            return Err(Error::shape("fit_normalize: inconsistent feature lengths"));
        }
        for (m, v) in mean.iter_mut().zip(&w.features) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; d];
    for w in windows {
        for ((s, v), m) in var.iter_mut().zip(&w.features).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var.into_iter().map(|v| (v / n).sqrt().max(1e-6)).collect();
    let mut target_mean = [0.0; 2];
    for w in windows {
        for (m, v) in target_mean.iter_mut().zip(&w.target) {
            *m += v;
        }
    }
    for m in &mut target_mean {
        *m /= n;
    }
    let mut target_var = [0.0; 2];
    for w in windows {
        for ((s, v), m) in target_var.iter_mut().zip(&w.target).zip(&target_mean) {
            *s += (v - m) * (v - m);
        }
    }
    let target_std = target_var.map(|v| (v / n).sqrt().max(1e-6));
    Ok(NormStats { mean, std, target_mean, target_std })
}

pub fn apply_normalize(windows: &mut [TrajectoryWindow], stats: &NormStats) -> Result<()> {
    for w in windows {
        if w.features.len() != stats.mean.len() {
            return Err(Error::shape("apply_normalize: feature length mismatch"));
        }
        for ((v, m), s) in w.features.iter_mut().zip(&stats.mean).zip(&stats.std) {
            *v = (*v - m) / s;
        }
        for ((v, m), s) in w.target.iter_mut().zip(&stats.target_mean).zip(&stats.target_std) {
            *v = (*v - m) / s;
        }
    }
    Ok(())
}

pub fn invert_normalize(windows: &mut [TrajectoryWindow], stats: &NormStats) -> Result<()> {
    for w in windows {
        if w.features.len() != stats.mean.len() {
            return Err(Error::shape("invert_normalize: feature length mismatch"));
        }
        for ((v, m), s) in w.features.iter_mut().zip(&stats.mean).zip(&stats.std) {
            *v = *v * s + m;
        }
        for ((v, m), s) in w.target.iter_mut().zip(&stats.target_mean).zip(&stats.target_std) {
            *v = *v * s + m;
        }
    }
    Ok(())
}

/// Synthetic lane-change scenario parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub lane_width: f64,
    pub speed: f64,
    pub duration_s: f64,
    pub frame_rate: f64,
    /// Midpoint of the logistic lateral profile, seconds.
    pub change_time_s: f64,
    /// Logistic steepness, 1/seconds.
    pub change_rate: f64,
    pub lat_noise: f64,
    pub lon_noise: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            lane_width: 3.7,
            speed: 15.0,
            duration_s: 8.0,
            frame_rate: 10.0,
            change_time_s: 4.0,
            change_rate: 2.0,
            lat_noise: 0.05,
            lon_noise: 0.1,
        }
    }
}

pub const SYNTH_EGO_ID: i64 = 0;

/// Generates one lane-change scene: ego id 0 follows a logistic lateral
/// profile; 2-4 neighbors drive straight in one of the two lanes at
/// randomized gaps and speed factors.
pub fn synth_traffic(rng: &mut ChaCha8Rng, cfg: &ScenarioConfig) -> Result<Vec<TrajectoryRecord>> {
    if cfg.lane_width <= 0.0 || cfg.speed <= 0.0 || cfg.duration_s <= 0.0 || cfg.frame_rate <= 0.0 {
        return Err(Error::config(format!("invalid scenario config {cfg:?}")));
    }
    let frames = (cfg.duration_s * cfg.frame_rate).round() as i64;
    let dt = 1.0 / cfg.frame_rate;
    let n_neighbors = rng.gen_range(2..=4usize);
    let mut records = Vec::new();
    // ego
    let mut lon = 0.0;
    for f in 0..frames {
        let t = f as f64 * dt;
        let logistic = cfg.lane_width / (1.0 + (-cfg.change_rate * (t - cfg.change_time_s)).exp());
        let lat_eps: f64 = if cfg.lat_noise > 0.0 {
            let e: f64 = StandardNormal.sample(rng);
            cfg.lat_noise * e
        } else {
            0.0
        };
        let lon_eps: f64 = if cfg.lon_noise > 0.0 {
            let e: f64 = StandardNormal.sample(rng);
            cfg.lon_noise * e
        } else {
            0.0
        };
        records.push(TrajectoryRecord {
            vehicle_id: SYNTH_EGO_ID,
            frame: f,
            lateral: logistic + lat_eps,
            longitudinal: lon,
        });
        lon += (cfg.speed + lon_eps) * dt;
    }
    // neighbors: straight drivers in lane 0 or 1
    for id in 1..=(n_neighbors as i64) {
        let lane = rng.gen_range(0..2) as f64;
        let gap: f64 = rng.gen_range(-40.0..40.0);
        let speed_factor: f64 = rng.gen_range(0.85..1.15);
        for f in 0..frames {
            let t = f as f64 * dt;
            records.push(TrajectoryRecord {
                vehicle_id: id,
                frame: f,
                lateral: lane * cfg.lane_width,
                longitudinal: gap + cfg.speed * speed_factor * t,
            });
        }
    }
    canonicalize(&mut records)?;
    Ok(records)
}

/// One evaluated trajectory: per-frame predictive Gaussians for frames
/// after the context cutoff, aligned with the truth. Index 0 is the
/// first predicted frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPrediction {
    pub mu: Vec<[f64; 2]>,
    pub sigma: Vec<[f64; 2]>,
    pub truth: Vec<[f64; 2]>,
}

impl TrajectoryPrediction {
    fn validate(&self) -> Result<()> {
        if self.mu.len() != self.sigma.len() || self.mu.len() != self.truth.len() {
            return Err(Error::shape("prediction arrays must have equal lengths"));
        }
        if self.sigma.iter().any(|s| s[0] <= 0.0 || s[1] <= 0.0) {
            return Err(Error::domain("predictive sigma must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonRow {
    pub horizon_s: f64,
    pub mean_abs_err: f64,
    pub mean_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisReport {
    /// One row per horizon in {1, 2, 3, 4} s; None when the horizon lies
    /// beyond every predicted trajectory.
    pub rows: Vec<Option<HorizonRow>>,
    pub mse: f64,
    pub nll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonReport {
    pub lateral: AxisReport,
    pub longitudinal: AxisReport,
}

pub const HORIZONS_S: [f64; 4] = [1.0, 2.0, 3.0, 4.0];

/// Horizon-table metrics over a set of predicted trajectories. All
/// quantities are in the units of the inputs (meters, unnormalized).
pub fn horizon_metrics(
    predictions: &[TrajectoryPrediction],
    frame_rate: f64,
) -> Result<HorizonReport> {
    if frame_rate <= 0.0 {
        return Err(Error::config(format!("frame rate {frame_rate} must be positive")));
    }
    if predictions.is_empty() {
        return Err(Error::contract("horizon_metrics: no predictions"));
    }
    for p in predictions {
        p.validate()?;
    }
    let axis_report = |axis: usize| -> AxisReport {
        let mut rows = Vec::with_capacity(HORIZONS_S.len());
        for &h in &HORIZONS_S {
            let offset = (h * frame_rate).round() as usize;
            if offset == 0 {
                rows.push(None);
                continue;
            }
            let idx = offset - 1;
            let mut err = 0.0;
            let mut sig = 0.0;
            let mut count = 0usize;
            for p in predictions {
                if idx < p.mu.len() {
                    err += (p.mu[idx][axis] - p.truth[idx][axis]).abs();
                    sig += p.sigma[idx][axis];
                    count += 1;
                }
            }
            rows.push(if count == 0 {
                None
            } else {
                Some(HorizonRow {
                    horizon_s: h,
                    mean_abs_err: err / count as f64,
                    mean_sigma: sig / count as f64,
                })
            });
        }
        let mut se = 0.0;
        let mut nll = 0.0;
        let mut count = 0usize;
        for p in predictions {
            for i in 0..p.mu.len() {
                let d = p.mu[i][axis] - p.truth[i][axis];
                let s = p.sigma[i][axis];
                se += d * d;
                nll += HALF_LOG_2PI + s.ln() + d * d / (2.0 * s * s);
                count += 1;
            }
        }
        let n = count.max(1) as f64;
        AxisReport { rows, mse: se / n, nll: nll / n }
    };
    Ok(HorizonReport { lateral: axis_report(0), longitudinal: axis_report(1) })
}

impl HorizonReport {
    /// Aligned-column text: one block per axis, horizon columns, then
    /// MSE and NLL.
    pub fn render(&self, label: &str) -> String {
        let mut out = String::new();
        for (name, axis) in [("lateral", &self.lateral), ("longitudinal", &self.longitudinal)] {
            out.push_str(&format!("{name} ({label})\n"));
            out.push_str("  horizon      1s       2s       3s       4s\n");
            let fmt_row = |f: &dyn Fn(&HorizonRow) -> f64| {
                let mut line = String::new();
                for r in &axis.rows {
                    match r {
                        Some(r) => line.push_str(&format!(" {:8.3}", f(r))),
                        None => line.push_str("        -"),
                    }
                }
                line
            };
            out.push_str(&format!("  mu      {}\n", fmt_row(&|r| r.mean_abs_err)));
            out.push_str(&format!("  sigma   {}\n", fmt_row(&|r| r.mean_sigma)));
            out.push_str(&format!("  MSE  {:.4}\n  NLL  {:.4}\n", axis.mse, axis.nll));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use tempfile::tempdir;

    fn ego_only(frames: i64) -> Vec<TrajectoryRecord> {
        (0..frames)
            .map(|f| TrajectoryRecord { vehicle_id: 7, frame: f, lateral: 1.0, longitudinal: 2.0 })
            .collect()
    }

    #[test]
    fn empty_csv_loads_as_empty() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("empty.csv");
        std::fs::write(&p, "").unwrap();
        assert!(load_csv(&p, &CsvSchema::default()).unwrap().is_empty());
    }

    #[test]
    fn missing_column_names_the_column() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "vehicle_id,frame,local_x\n1,0,0.0\n").unwrap();
        let err = load_csv(&p, &CsvSchema::default()).unwrap_err();
        assert!(err.to_string().contains("local_y"), "{err}");
    }

    #[test]
    fn duplicate_vehicle_frame_pair_is_rejected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("dup.csv");
        std::fs::write(
            &p,
            "vehicle_id,frame,local_x,local_y\n3,5,0.0,0.0\n3,5,1.0,1.0\n",
        )
        .unwrap();
        let err = load_csv(&p, &CsvSchema::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('3') && msg.contains('5'), "{msg}");
    }

    #[test]
    fn csv_roundtrip_is_value_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let records = synth_traffic(&mut rng, &ScenarioConfig::default()).unwrap();
        let dir = tempdir().unwrap();
        let p = dir.path().join("scene.csv");
        let schema = CsvSchema::default();
        write_csv(&p, &schema, &records).unwrap();
        let loaded = load_csv(&p, &schema).unwrap();
        assert_eq!(records, loaded);
    }

    #[test]
    fn degenerate_scene_pads_all_sentinels() {
        let cfg = WindowConfig { window_len: 3, neighbor_slots: 2, sentinel: 100.0 };
        let windows = build_windows(&ego_only(5), &cfg, 7).unwrap();
        assert_eq!(windows.len(), 3);
        for w in &windows {
            assert_eq!(w.features, vec![100.0; 3 * 4]);
            assert_eq!(w.target, [0.0, 0.0]);
        }
    }

    #[test]
    fn constant_offset_neighbor_relativizes_cleanly() {
        let mut records = Vec::new();
        for f in 0..4 {
            records.push(TrajectoryRecord {
                vehicle_id: 1,
                frame: f,
                lateral: 0.0,
                longitudinal: f as f64,
            });
            records.push(TrajectoryRecord {
                vehicle_id: 2,
                frame: f,
                lateral: 5.0,
                longitudinal: f as f64,
            });
        }
        let cfg = WindowConfig { window_len: 2, neighbor_slots: 1, sentinel: 100.0 };
        let windows = build_windows(&records, &cfg, 1).unwrap();
        assert_eq!(windows.len(), 3);
        for w in &windows {
            // neighbor offset relative to ego origin: lateral 5, longitudinal
            // advances with the frame inside the window
            assert_eq!(w.features[0], 5.0);
            assert_eq!(w.features[2], 5.0);
            assert_eq!(w.target[1], 1.0);
        }
    }

    #[test]
    fn window_count_matches_frame_count() {
        let cfg = WindowConfig { window_len: 4, neighbor_slots: 1, sentinel: 100.0 };
        assert_eq!(build_windows(&ego_only(4), &cfg, 7).unwrap().len(), 1);
        assert_eq!(build_windows(&ego_only(10), &cfg, 7).unwrap().len(), 7);
        assert!(build_windows(&ego_only(3), &cfg, 7).unwrap().is_empty());
        assert!(build_windows(&ego_only(3), &cfg, 99).is_err());
    }

    #[test]
    fn record_order_does_not_change_windows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let records = synth_traffic(&mut rng, &ScenarioConfig::default()).unwrap();
        let cfg = WindowConfig::default();
        let base = build_windows(&records, &cfg, SYNTH_EGO_ID).unwrap();
        let mut shuffled = records.clone();
        shuffled.reverse();
        let mid = shuffled.len() / 2;
        shuffled.swap(0, mid);
        let same = build_windows(&shuffled, &cfg, SYNTH_EGO_ID).unwrap();
        assert_eq!(base, same);
    }

    #[test]
    fn scene_translation_leaves_windows_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let records = synth_traffic(&mut rng, &ScenarioConfig::default()).unwrap();
        let cfg = WindowConfig::default();
        let base = build_windows(&records, &cfg, SYNTH_EGO_ID).unwrap();
        let moved: Vec<TrajectoryRecord> = records
            .iter()
            .map(|r| TrajectoryRecord {
                lateral: r.lateral + 13.5,
                longitudinal: r.longitudinal - 7.25,
                ..*r
            })
            .collect();
        let shifted = build_windows(&moved, &cfg, SYNTH_EGO_ID).unwrap();
        assert_eq!(base.len(), shifted.len());
        for (a, b) in base.iter().zip(&shifted) {
            for (x, y) in a.features.iter().zip(&b.features) {
                assert!((x - y).abs() < 1e-9);
            }
            assert!((a.target[0] - b.target[0]).abs() < 1e-9);
            assert!((a.target[1] - b.target[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn axis_swap_swaps_the_reports() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let records = synth_traffic(&mut rng, &ScenarioConfig::default()).unwrap();
        let swapped: Vec<TrajectoryRecord> = records
            .iter()
            .map(|r| TrajectoryRecord { lateral: r.longitudinal, longitudinal: r.lateral, ..*r })
            .collect();
        let cfg = WindowConfig::default();
        let a = build_windows(&records, &cfg, SYNTH_EGO_ID).unwrap();
        let b = build_windows(&swapped, &cfg, SYNTH_EGO_ID).unwrap();
        // build naive predictions (mu = truth + 0.3 on axis 0 only)
        let to_preds = |ws: &[TrajectoryWindow], flip: bool| {
            vec![TrajectoryPrediction {
                mu: ws
                    .iter()
                    .map(|w| {
                        let mut m = w.target;
                        if flip {
                            m[1] += 0.3;
                        } else {
                            m[0] += 0.3;
                        }
                        m
                    })
                    .collect(),
                sigma: ws.iter().map(|_| [0.5, 0.8]).collect(),
                truth: ws.iter().map(|w| w.target).collect(),
            }]
        };
        let ra = horizon_metrics(&to_preds(&a, false), 10.0).unwrap();
        let mut preds_b = to_preds(&b, true);
        for p in &mut preds_b {
            for s in &mut p.sigma {
                s.swap(0, 1);
            }
        }
        let rb = horizon_metrics(&preds_b, 10.0).unwrap();
        assert_eq!(ra.lateral, rb.longitudinal);
        assert_eq!(ra.longitudinal, rb.lateral);
    }

    #[test]
    fn normalization_is_zero_mean_unit_std_and_invertible() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let records = synth_traffic(&mut rng, &ScenarioConfig::default()).unwrap();
        let mut windows = build_windows(&records, &WindowConfig::default(), SYNTH_EGO_ID).unwrap();
        let originals = windows.clone();
        let stats = fit_normalize(&windows).unwrap();
        apply_normalize(&mut windows, &stats).unwrap();
        let d = windows[0].features.len();
        let n = windows.len() as f64;
        for j in 0..d {
            let mean: f64 = windows.iter().map(|w| w.features[j]).sum::<f64>() / n;
            let var: f64 = windows.iter().map(|w| (w.features[j] - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9, "feature {j} mean {mean}");
            assert!(var < 1.0 + 1e-9, "feature {j} var {var}");
            // constant features (sentinel slots) are clamped to zero
            assert!((var - 1.0).abs() < 1e-9 || var < 1e-9, "feature {j} var {var}");
        }
        for a in 0..2 {
            let mean: f64 = windows.iter().map(|w| w.target[a]).sum::<f64>() / n;
            let var: f64 = windows.iter().map(|w| (w.target[a] - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9, "target {a} mean {mean}");
            assert!((var - 1.0).abs() < 1e-9, "target {a} var {var}");
        }
        invert_normalize(&mut windows, &stats).unwrap();
        for (a, b) in windows.iter().zip(&originals) {
            for (x, y) in a.features.iter().zip(&b.features) {
                assert!((x - y).abs() < 1e-9);
            }
            for (x, y) in a.target.iter().zip(&b.target) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_feature_clamps_std_and_normalizes_to_zero() {
        let mut windows: Vec<TrajectoryWindow> = (0..5)
            .map(|i| TrajectoryWindow {
                features: vec![4.2, i as f64],
                window_len: 1,
                neighbor_slots: 1,
                target: [0.0, 0.0],
                frame: i,
            })
            .collect();
        let stats = fit_normalize(&windows).unwrap();
        assert_eq!(stats.std[0], 1e-6);
        apply_normalize(&mut windows, &stats).unwrap();
        for w in &windows {
            assert_eq!(w.features[0], 0.0);
        }
    }

    #[test]
    fn zero_noise_ego_follows_the_logistic_exactly() {
        let cfg = ScenarioConfig { lat_noise: 0.0, lon_noise: 0.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let records = synth_traffic(&mut rng, &cfg).unwrap();
        for r in records.iter().filter(|r| r.vehicle_id == SYNTH_EGO_ID) {
            let t = r.frame as f64 * (1.0 / cfg.frame_rate);
            let expect = cfg.lane_width / (1.0 + (-cfg.change_rate * (t - cfg.change_time_s)).exp());
            assert_eq!(r.lateral, expect);
        }
    }

    #[test]
    fn ego_crosses_about_one_lane_width() {
        let cfg = ScenarioConfig::default();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let records = synth_traffic(&mut rng, &cfg).unwrap();
            let ego: Vec<&TrajectoryRecord> =
                records.iter().filter(|r| r.vehicle_id == SYNTH_EGO_ID).collect();
            let shift = ego.last().unwrap().lateral - ego.first().unwrap().lateral;
            assert!((shift - cfg.lane_width).abs() < 0.5, "seed {seed}: shift {shift}");
        }
    }

    #[test]
    fn synth_traffic_is_deterministic_per_seed() {
        let cfg = ScenarioConfig::default();
        let a = synth_traffic(&mut ChaCha8Rng::seed_from_u64(9), &cfg).unwrap();
        let b = synth_traffic(&mut ChaCha8Rng::seed_from_u64(9), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn perfect_predictions_score_zero_error_and_known_nll() {
        let truth: Vec<[f64; 2]> = (0..35).map(|i| [i as f64 * 0.1, i as f64 * 0.2]).collect();
        let preds = vec![TrajectoryPrediction {
            mu: truth.clone(),
            sigma: vec![[1.0, 1.0]; truth.len()],
            truth: truth.clone(),
        }];
        let report = horizon_metrics(&preds, 10.0).unwrap();
        for axis in [&report.lateral, &report.longitudinal] {
            assert_eq!(axis.mse, 0.0);
            assert!((axis.nll - 0.91894).abs() < 1e-4);
            for row in axis.rows.iter().flatten() {
                assert_eq!(row.mean_abs_err, 0.0);
                assert_eq!(row.mean_sigma, 1.0);
            }
            // 35 frames at 10 Hz: the 4 s horizon does not exist but 3 s does
            assert!(axis.rows[2].is_some());
            assert!(axis.rows[3].is_none());
        }
    }

    #[test]
    fn constant_offset_predictions_have_constant_horizon_error() {
        let truth: Vec<[f64; 2]> = (0..40).map(|i| [i as f64 * 0.1, -(i as f64) * 0.3]).collect();
        let preds = vec![TrajectoryPrediction {
            mu: truth.iter().map(|t| [t[0] + 0.5, t[1] + 0.5]).collect(),
            sigma: vec![[0.7, 0.7]; truth.len()],
            truth: truth.clone(),
        }];
        let report = horizon_metrics(&preds, 10.0).unwrap();
        for axis in [&report.lateral, &report.longitudinal] {
            for row in axis.rows.iter().flatten() {
                assert!((row.mean_abs_err - 0.5).abs() < 1e-12);
                assert!((row.mean_sigma - 0.7).abs() < 1e-12);
            }
            assert!((axis.mse - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn prediction_order_does_not_change_the_report() {
        let make = |shift: f64| TrajectoryPrediction {
            mu: (0..40).map(|i| [i as f64 * 0.1 + shift, i as f64 * 0.2]).collect(),
            sigma: vec![[0.5, 0.6]; 40],
            truth: (0..40).map(|i| [i as f64 * 0.1, i as f64 * 0.2]).collect(),
        };
        let a = vec![make(0.1), make(0.4), make(-0.2)];
        let b = vec![make(0.4), make(-0.2), make(0.1)];
        let ra = horizon_metrics(&a, 10.0).unwrap();
        let rb = horizon_metrics(&b, 10.0).unwrap();
        assert!((ra.lateral.mse - rb.lateral.mse).abs() < 1e-12);
        assert!((ra.lateral.nll - rb.lateral.nll).abs() < 1e-12);
        for (x, y) in ra.lateral.rows.iter().zip(&rb.lateral.rows) {
            let (x, y) = (x.unwrap(), y.unwrap());
            assert!((x.mean_abs_err - y.mean_abs_err).abs() < 1e-12);
        }
    }

    #[test]
    fn report_renders_horizon_table() {
        // the published ANP-LSTM lateral row, rendered through our layout
        let rows = vec![
            Some(HorizonRow { horizon_s: 1.0, mean_abs_err: 0.020, mean_sigma: 0.235 }),
            Some(HorizonRow { horizon_s: 2.0, mean_abs_err: 0.109, mean_sigma: 0.276 }),
            Some(HorizonRow { horizon_s: 3.0, mean_abs_err: 0.130, mean_sigma: 0.307 }),
            Some(HorizonRow { horizon_s: 4.0, mean_abs_err: 0.203, mean_sigma: 0.332 }),
        ];
        let axis = AxisReport { rows, mse: 0.1673, nll: -0.0229 };
        let report = HorizonReport { lateral: axis.clone(), longitudinal: axis };
        let text = report.render("anp-lstm");
        for needle in [
            "0.020", "0.109", "0.130", "0.203", "0.235", "0.276", "0.307", "0.332",
            "MSE  0.1673", "NLL  -0.0229", "lateral (anp-lstm)", "horizon",
        ] {
            assert!(text.contains(needle), "missing {needle:?} in:\n{text}");
        }
    }
}
