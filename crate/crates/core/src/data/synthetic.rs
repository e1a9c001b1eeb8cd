//! Synthetic 1D stochastic process: squared-exponential GP draws plus
//! a sine component, on a fixed 50-point grid with 0.1 spacing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::TensorValue;
use crate::error::{Error, Result};
use crate::model::{ContextTargetBatch, InputSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpKernelParams {
    pub lengthscale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineParams {
    pub amplitude: f64,
    pub omega: f64,
    pub phase: f64,
}

/// Uniform sampling ranges for per-realization hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperRanges {
    pub lengthscale: (f64, f64),
    pub signal_var: (f64, f64),
    pub noise_var: f64,
    pub amplitude: (f64, f64),
    pub omega: (f64, f64),
}

impl Default for HyperRanges {
    fn default() -> Self {
        HyperRanges {
            lengthscale: (0.5, 2.0),
            signal_var: (0.5, 2.0),
            noise_var: 0.02,
            amplitude: (0.5, 1.5),
            omega: (0.5, 2.0),
        }
    }
}

impl HyperRanges {
    fn validate(&self) -> Result<()> {
        let pairs = [
            ("lengthscale", self.lengthscale, true),
            ("signal_var", self.signal_var, false),
            ("amplitude", self.amplitude, false),
            ("omega", self.omega, true),
        ];
        for (name, (lo, hi), strictly_positive) in pairs {
            if !(lo <= hi) {
                return Err(Error::config(format!("{name} range: lo {lo} > hi {hi}")));
            }
            if lo < 0.0 || (strictly_positive && lo <= 0.0) {
                return Err(Error::config(format!("{name} range: lo {lo} out of domain")));
            }
        }
        if self.noise_var < 0.0 {
            return Err(Error::config(format!("noise_var {} must be >= 0", self.noise_var)));
        }
        Ok(())
    }
}

/// Sequence protocol: n points, fixed increment, fixed domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub n: usize,
    pub dx: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Default for SequenceSpec {
    fn default() -> Self {
        SequenceSpec { n: 50, dx: 0.1, lo: -4.0, hi: 4.0 }
    }
}

impl SequenceSpec {
    fn validate(&self) -> Result<()> {
        if self.n < 2 || self.dx <= 0.0 || self.lo >= self.hi {
            return Err(Error::config(format!("invalid sequence spec {self:?}")));
        }
        if self.lo + self.dx * (self.n - 1) as f64 > self.hi {
            return Err(Error::config(format!(
                "sequence spec: {} points at spacing {} do not fit in [{}, {}]",
                self.n, self.dx, self.lo, self.hi
            )));
        }
        Ok(())
    }

    /// Highest admissible grid origin so the last point stays in domain.
    fn x0_max(&self) -> f64 {
        self.hi - self.dx * (self.n - 1) as f64
    }
}

/// One ordered (X, Y) draw from the process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitPolicy {
    Prefix(usize),
    RandomSubset(usize),
}

/// A realization with its chosen context indices; targets are all points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRealization {
    pub realization: Realization,
    pub context_idx: Vec<usize>,
}

/// A batch of split realizations (the unit the training loop consumes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationBatch {
    pub items: Vec<SplitRealization>,
}

pub fn sample_kernel_hyperparams(
    rng: &mut ChaCha8Rng,
    ranges: &HyperRanges,
) -> Result<(GpKernelParams, SineParams)> {
    ranges.validate()?;
    let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
        if lo == hi {
            lo
        } else {
            rng.gen_range(lo..hi)
        }
    };
    let kernel = GpKernelParams {
        lengthscale: draw(rng, ranges.lengthscale),
        signal_var: draw(rng, ranges.signal_var),
        noise_var: ranges.noise_var,
    };
    let sine = SineParams {
        amplitude: draw(rng, ranges.amplitude),
        omega: draw(rng, ranges.omega),
        phase: rng.gen_range(0.0..std::f64::consts::TAU),
    };
    Ok((kernel, sine))
}

/// Lower-triangular Cholesky factor of a dense symmetric matrix, or None
/// if a pivot is not positive.
fn cholesky(n: usize, a: &[f64]) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Draws ys ~ N(0, K) for the squared-exponential kernel over `xs`.
pub fn gp_sample(kernel: &GpKernelParams, xs: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let n = xs.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if xs[i] == xs[j] {
                return Err(Error::contract(format!("gp_sample: duplicate x value {}", xs[i])));
            }
        }
    }
    if kernel.signal_var == 0.0 && kernel.noise_var == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut base = vec![0.0; n * n];
    let inv2l2 = 1.0 / (2.0 * kernel.lengthscale * kernel.lengthscale);
    for i in 0..n {
        for j in 0..n {
            let d = xs[i] - xs[j];
            base[i * n + j] = kernel.signal_var * (-d * d * inv2l2).exp();
        }
    }
    let noise: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let mut jitter = 1e-8 * kernel.signal_var;
    for _attempt in 0..4 {
        let mut k = base.clone();
        for i in 0..n {
            k[i * n + i] += kernel.noise_var + jitter;
        }
        if let Some(l) = cholesky(n, &k) {
            let ys = (0..n)
                .map(|i| (0..=i).map(|j| l[i * n + j] * noise[j]).sum())
                .collect();
            return Ok(ys);
        }
        jitter = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 };
    }
    Err(Error::numeric(format!(
        "gp_sample: Cholesky failed after jitter escalation (lengthscale {}, n {n})",
        kernel.lengthscale
    )))
}

/// One realization: random grid origin, GP draw plus sine component.
pub fn make_realization(
    rng: &mut ChaCha8Rng,
    ranges: &HyperRanges,
    spec: &SequenceSpec,
) -> Result<Realization> {
    spec.validate()?;
    let (kernel, sine) = sample_kernel_hyperparams(rng, ranges)?;
    let x0_max = spec.x0_max();
    let x0 = if x0_max > spec.lo { rng.gen_range(spec.lo..x0_max) } else { spec.lo };
    let xs: Vec<f64> = (0..spec.n).map(|k| x0 + spec.dx * k as f64).collect();
    let gp = gp_sample(&kernel, &xs, rng)?;
    let ys = xs
        .iter()
        .zip(&gp)
        .map(|(&x, &g)| g + sine.amplitude * (sine.omega * x + sine.phase).sin())
        .collect();
    Ok(Realization { xs, ys })
}

/// Splits a realization into contexts and targets. Targets are always
/// all n points in order; contexts are a subset per the policy.
pub fn split_context_target(
    realization: &Realization,
    rng: &mut ChaCha8Rng,
    policy: SplitPolicy,
) -> Result<SplitRealization> {
    let n = realization.xs.len();
    let m = match policy {
        SplitPolicy::Prefix(m) | SplitPolicy::RandomSubset(m) => m,
    };
    if m == 0 || m >= n {
        return Err(Error::config(format!("context size {m} must be in 1..{n}")));
    }
    let context_idx = match policy {
        SplitPolicy::Prefix(m) => (0..m).collect(),
        SplitPolicy::RandomSubset(m) => {
            let mut picked: Vec<usize> = (0..n).collect();
            for i in 0..m {
                let j = rng.gen_range(i..n);
                picked.swap(i, j);
            }
            let mut idx = picked[..m].to_vec();
            idx.sort_unstable();
            idx
        }
    };
    Ok(SplitRealization { realization: realization.clone(), context_idx })
}

/// Length-L window of preceding grid values for each index, padded by
/// repeating the first value before the sequence start.
pub fn windowed_inputs(xs: &[f64], indices: &[usize], window_len: usize) -> Result<TensorValue> {
    if window_len == 0 {
        return Err(Error::config("window_len must be >= 1"));
    }
    let mut data = Vec::with_capacity(indices.len() * window_len);
    for &i in indices {
        if i >= xs.len() {
            return Err(Error::contract(format!("window index {i} out of range")));
        }
        for off in (0..window_len).rev() {
            let j = i.saturating_sub(off);
            data.push(xs[j]);
        }
    }
    TensorValue::new(vec![indices.len(), window_len, 1], data)
}

impl SplitRealization {
    /// Model-ready batch. `seq_window = Some(L)` emits per-point windows
    /// for the recurrent variant; `None` emits plain points.
    pub fn to_batch(&self, seq_window: Option<usize>) -> Result<ContextTargetBatch> {
        let r = &self.realization;
        let n = r.xs.len();
        let all: Vec<usize> = (0..n).collect();
        let ctx_y: Vec<f64> = self.context_idx.iter().map(|&i| r.ys[i]).collect();
        let (x_c, x_t) = match seq_window {
            Some(w) => (
                InputSet::Sequences(windowed_inputs(&r.xs, &self.context_idx, w)?),
                InputSet::Sequences(windowed_inputs(&r.xs, &all, w)?),
            ),
            None => {
                let ctx_x: Vec<f64> = self.context_idx.iter().map(|&i| r.xs[i]).collect();
                (
                    InputSet::Points(TensorValue::matrix(self.context_idx.len(), 1, ctx_x)?),
                    InputSet::Points(TensorValue::matrix(n, 1, r.xs.clone())?),
                )
            }
        };
        ContextTargetBatch::new(
            x_c,
            TensorValue::matrix(self.context_idx.len(), 1, ctx_y)?,
            x_t,
            Some(TensorValue::matrix(n, 1, r.ys.clone())?),
        )
    }
}

/// Synthetic-task sampling configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub ranges: HyperRanges,
    pub spec: SequenceSpec,
    /// Training context sizes are drawn uniformly from this inclusive range.
    pub ctx_min: usize,
    pub ctx_max: usize,
    pub random_context: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            ranges: HyperRanges::default(),
            spec: SequenceSpec::default(),
            ctx_min: 5,
            ctx_max: 45,
            random_context: false,
        }
    }
}

/// Deterministic batch draw: element i uses stream i+1 of the seed.
pub fn draw_batch(cfg: &SyntheticConfig, seed: u64, batch_size: usize) -> Result<RealizationBatch> {
    if cfg.ctx_min == 0 || cfg.ctx_min > cfg.ctx_max || cfg.ctx_max >= cfg.spec.n {
        return Err(Error::config(format!(
            "context range [{}, {}] invalid for n = {}",
            cfg.ctx_min, cfg.ctx_max, cfg.spec.n
        )));
    }
    let mut items = Vec::with_capacity(batch_size);
    for i in 0..batch_size {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        let realization = make_realization(&mut rng, &cfg.ranges, &cfg.spec)?;
        let m = if cfg.ctx_min == cfg.ctx_max {
            cfg.ctx_min
        } else {
            rng.gen_range(cfg.ctx_min..=cfg.ctx_max)
        };
        let policy = if cfg.random_context {
            SplitPolicy::RandomSubset(m)
        } else {
            SplitPolicy::Prefix(m)
        };
        items.push(split_context_target(&realization, &mut rng, policy)?);
    }
    Ok(RealizationBatch { items })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn degenerate_range_is_constant_and_seeds_are_deterministic() {
        let ranges = HyperRanges {
            lengthscale: (1.3, 1.3),
            signal_var: (0.7, 0.7),
            noise_var: 0.02,
            amplitude: (1.0, 1.0),
            omega: (2.0, 2.0),
        };
        let (k, s) = sample_kernel_hyperparams(&mut rng(0), &ranges).unwrap();
        assert_eq!((k.lengthscale, k.signal_var, s.amplitude, s.omega), (1.3, 0.7, 1.0, 2.0));

        let a = sample_kernel_hyperparams(&mut rng(9), &HyperRanges::default()).unwrap();
        let b = sample_kernel_hyperparams(&mut rng(9), &HyperRanges::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn draws_stay_inside_ranges() {
        let ranges = HyperRanges::default();
        let mut r = rng(1);
        for _ in 0..10_000 {
            let (k, s) = sample_kernel_hyperparams(&mut r, &ranges).unwrap();
            assert!(k.lengthscale >= 0.5 && k.lengthscale < 2.0);
            assert!(k.signal_var >= 0.5 && k.signal_var < 2.0);
            assert!(s.amplitude >= 0.5 && s.amplitude < 1.5);
            assert!(s.omega >= 0.5 && s.omega < 2.0);
            assert!(s.phase >= 0.0 && s.phase < std::f64::consts::TAU);
        }
    }

    #[test]
    fn invalid_range_is_a_config_error() {
        let mut ranges = HyperRanges::default();
        ranges.lengthscale = (2.0, 0.5);
        assert!(sample_kernel_hyperparams(&mut rng(0), &ranges).is_err());
    }

    #[test]
    fn zero_signal_gp_is_pure_noise() {
        let kernel = GpKernelParams { lengthscale: 1.0, signal_var: 0.0, noise_var: 0.02 };
        let xs: Vec<f64> = (0..5).map(|i| i as f64 * 0.1).collect();
        let mut r = rng(2);
        let n_draws = 10_000;
        let mut acc = 0.0;
        for _ in 0..n_draws {
            let ys = gp_sample(&kernel, &xs, &mut r).unwrap();
            acc += ys.iter().map(|y| y * y).sum::<f64>() / xs.len() as f64;
        }
        let var = acc / n_draws as f64;
        assert!((var - 0.02).abs() < 0.05 * 0.02, "variance {var}");
    }

    #[test]
    fn gp_marginal_variance_matches_kernel_diagonal() {
        let kernel = GpKernelParams { lengthscale: 1.0, signal_var: 1.5, noise_var: 0.02 };
        let xs = [0.0, 0.7, 1.9];
        let mut r = rng(3);
        let n_draws = 10_000;
        let mut acc = [0.0; 3];
        for _ in 0..n_draws {
            let ys = gp_sample(&kernel, &xs, &mut r).unwrap();
            for (a, y) in acc.iter_mut().zip(&ys) {
                *a += y * y;
            }
        }
        for a in acc {
            let var = a / n_draws as f64;
            let expect = 1.5 + 0.02;
            assert!((var - expect).abs() < 0.05 * expect, "variance {var} vs {expect}");
        }
    }

    #[test]
    fn gp_correlation_matches_kernel_formula() {
        // corr(y(x), y(x+1)) for lengthscale 1 should be ~exp(-0.5) = 0.6065
        let kernel = GpKernelParams { lengthscale: 1.0, signal_var: 1.0, noise_var: 0.0 };
        let xs = [0.0, 1.0];
        let mut r = rng(4);
        let n_draws = 10_000;
        let (mut v0, mut v1, mut cov) = (0.0, 0.0, 0.0);
        for _ in 0..n_draws {
            let ys = gp_sample(&kernel, &xs, &mut r).unwrap();
            v0 += ys[0] * ys[0];
            v1 += ys[1] * ys[1];
            cov += ys[0] * ys[1];
        }
        let corr = cov / (v0.sqrt() * v1.sqrt());
        let expect = (-0.5f64).exp();
        assert!((corr - expect).abs() < 0.05 * expect, "corr {corr} vs {expect}");
    }

    #[test]
    fn gp_sample_rejects_duplicate_points() {
        let kernel = GpKernelParams { lengthscale: 1.0, signal_var: 1.0, noise_var: 0.0 };
        assert!(gp_sample(&kernel, &[0.3, 0.3], &mut rng(0)).is_err());
    }

    #[test]
    fn realization_grid_obeys_the_protocol() {
        let spec = SequenceSpec::default();
        let mut r = rng(5);
        for _ in 0..200 {
            let real = make_realization(&mut r, &HyperRanges::default(), &spec).unwrap();
            assert_eq!(real.xs.len(), 50);
            assert!(real.xs[0] >= -4.0 && real.xs[0] <= -0.9 + 1e-12);
            for k in 0..50 {
                let x = real.xs[k];
                assert!(x >= -4.0 && x <= 4.0);
                assert!((x - (real.xs[0] + 0.1 * k as f64)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_limit_is_the_pure_sine() {
        let ranges = HyperRanges {
            lengthscale: (1.0, 1.0),
            signal_var: (0.0, 0.0),
            noise_var: 0.0,
            amplitude: (1.2, 1.2),
            omega: (0.9, 0.9),
        };
        let mut r = rng(6);
        let real = make_realization(&mut r, &ranges, &SequenceSpec::default()).unwrap();
        for (x, y) in real.xs.iter().zip(&real.ys) {
            // y = 1.2 sin(0.9 x + phase) for a single consistent phase
            let s = y / 1.2;
            assert!(s.abs() <= 1.0 + 1e-12, "non-sine value {y} at {x}");
        }
        // cross-check against an explicit reconstruction
        let phase = (real.ys[0] / 1.2).asin();
        let candidates = [phase, std::f64::consts::PI - phase];
        let ok = candidates.iter().any(|&p| {
            real.xs.iter().zip(&real.ys).all(|(&x, &y)| {
                let shift = p - 0.9 * real.xs[0];
                (y - 1.2 * (0.9 * x + shift).sin()).abs() < 1e-9
            })
        });
        assert!(ok, "ys are not a single sine wave");
    }

    #[test]
    fn zero_amplitude_reduces_to_pure_gp() {
        let mut ranges = HyperRanges::default();
        ranges.amplitude = (0.0, 0.0);
        // replay: regenerate kernel + x0 + gp noise with the same stream and
        // confirm the sine added nothing
        let mut r1 = rng(7);
        let real = make_realization(&mut r1, &ranges, &SequenceSpec::default()).unwrap();
        let mut r2 = rng(7);
        let (kernel, _sine) = sample_kernel_hyperparams(&mut r2, &ranges).unwrap();
        let spec = SequenceSpec::default();
        let _x0: f64 = r2.gen_range(spec.lo..spec.x0_max());
        let gp = gp_sample(&kernel, &real.xs, &mut r2).unwrap();
        for (a, b) in real.ys.iter().zip(&gp) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn prefix_split_takes_the_first_m_points() {
        let real = Realization {
            xs: (0..50).map(|i| i as f64 * 0.1).collect(),
            ys: vec![0.0; 50],
        };
        let s = split_context_target(&real, &mut rng(0), SplitPolicy::Prefix(10)).unwrap();
        assert_eq!(s.context_idx, (0..10).collect::<Vec<_>>());
        let s = split_context_target(&real, &mut rng(0), SplitPolicy::Prefix(49)).unwrap();
        assert_eq!(s.context_idx.len(), 49);
        assert!(split_context_target(&real, &mut rng(0), SplitPolicy::Prefix(50)).is_err());
        assert!(split_context_target(&real, &mut rng(0), SplitPolicy::Prefix(0)).is_err());
    }

    #[test]
    fn random_subsets_are_sorted_distinct_and_in_range() {
        let real = Realization {
            xs: (0..50).map(|i| i as f64 * 0.1).collect(),
            ys: vec![0.0; 50],
        };
        let mut r = rng(8);
        for t in 0..1000 {
            let m = 1 + t % 49;
            let s = split_context_target(&real, &mut r, SplitPolicy::RandomSubset(m)).unwrap();
            assert_eq!(s.context_idx.len(), m);
            for w in s.context_idx.windows(2) {
                assert!(w[0] < w[1]);
            }
            assert!(*s.context_idx.last().unwrap() < 50);
        }
    }

    #[test]
    fn windows_pad_by_repetition_at_the_start() {
        let xs = [10.0, 11.0, 12.0, 13.0];
        let t = windowed_inputs(&xs, &[0, 1, 3], 3).unwrap();
        assert_eq!(t.shape().dims(), &[3, 3, 1]);
        assert_eq!(t.data(), &[10.0, 10.0, 10.0, 10.0, 10.0, 11.0, 11.0, 12.0, 13.0]);
    }

    #[test]
    fn batches_are_bit_identical_across_calls_and_convert_cleanly() {
        let cfg = SyntheticConfig::default();
        let a = draw_batch(&cfg, 42, 4).unwrap();
        let b = draw_batch(&cfg, 42, 4).unwrap();
        assert_eq!(a, b);
        let c = draw_batch(&cfg, 43, 4).unwrap();
        assert_ne!(a, c);

        for item in &a.items {
            let points = item.to_batch(None).unwrap();
            assert_eq!(points.x_t.tensor().shape().dims(), &[50, 1]);
            let seqs = item.to_batch(Some(5)).unwrap();
            assert_eq!(seqs.x_t.tensor().shape().dims(), &[50, 5, 1]);
            assert_eq!(
                seqs.x_c.tensor().shape().dims(),
                &[item.context_idx.len(), 5, 1]
            );
        }
    }
}
