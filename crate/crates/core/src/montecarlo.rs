//! Deterministic Monte-Carlo engine.
//!
//! Every trial owns a ChaCha8 stream whose key and nonce are a fixed function of
//! `(master_seed, stream_id, counter)`:
//!
//! * key bytes 0..8   = `master_seed` (little endian)
//! * key bytes 8..16  = `counter` (little endian)
//! * key bytes 16..32 = the ASCII tag `covert-mimo/v1\0\0`
//! * ChaCha stream (nonce) = `stream_id`, word position 0
//!
//! Distinct triples therefore map to distinct (key, nonce) pairs. Trial `i` of
//! an experiment uses `counter = i`, so results do not depend on how trials are
//! spread across workers: the engine collects per-trial outputs in index order
//! and all reductions run sequentially over that ordered vector.
//!
//! Complex Gaussians use a fixed polar transform of two uniforms; see
//! [`complex_normal`].

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Stream = ChaCha8Rng;

const KEY_TAG: &[u8; 16] = b"covert-mimo/v1\0\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamSpec {
    pub master_seed: u64,
    pub stream_id: u64,
    pub counter: u64,
}

pub fn derive_stream(spec: StreamSpec) -> Stream {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&spec.master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&spec.counter.to_le_bytes());
    key[16..].copy_from_slice(KEY_TAG);
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(spec.stream_id);
    rng
}

/// Uniform on `(0, 1]` from the top 53 bits of one 64-bit output.
pub fn uniform_open0<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform on `[0, 1)` from the top 53 bits of one 64-bit output.
pub fn uniform_closed0<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Circularly-symmetric CN(0, 1) draw.
///
/// Consumes exactly two 64-bit outputs: `u1` in `(0, 1]` then `u2` in `[0, 1)`,
/// and returns `sqrt(-ln u1) * (cos 2 pi u2 + i sin 2 pi u2)`. The squared
/// modulus is Exp(1) and the phase is uniform, which is the CN(0, 1) law.
pub fn complex_normal<R: RngCore + ?Sized>(rng: &mut R) -> Complex64 {
    let u1 = uniform_open0(rng);
    let u2 = uniform_closed0(rng);
    let r = (-u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    Complex64::new(r * c, r * s)
}

/// Standard real normal, the real part of [`complex_normal`] scaled by sqrt 2.
pub fn real_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    complex_normal(rng).re * std::f64::consts::SQRT_2
}

/// Gamma(shape, 1) variate.
pub fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    use rand_distr::Distribution;
    rand_distr::Gamma::new(shape, 1.0).expect("positive gamma shape").sample(rng)
}

/// Fans trials out over a fixed number of workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Engine {
    pub seed: u64,
    pub workers: usize,
}

impl Engine {
    pub fn new(seed: u64, workers: usize) -> Self {
        Self { seed, workers: workers.max(1) }
    }

    pub fn stream(&self, stream_id: u64, counter: u64) -> Stream {
        derive_stream(StreamSpec { master_seed: self.seed, stream_id, counter })
    }

    /// Runs `f` once per trial index and returns outputs in index order.
    pub fn map<T, F>(&self, stream_id: u64, trials: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&mut Stream, usize) -> T + Sync + Send,
    {
        let run = |i: usize| {
            let mut rng = self.stream(stream_id, i as u64);
            f(&mut rng, i)
        };
        if self.workers == 1 {
            return (0..trials).map(run).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .expect("thread pool");
        pool.install(|| (0..trials).into_par_iter().map(run).collect())
    }

    /// Like [`Engine::map`] but stops at the lowest-index error.
    pub fn try_map<T, F>(&self, stream_id: u64, trials: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&mut Stream, usize) -> Result<T> + Sync + Send,
    {
        self.map(stream_id, trials, f).into_iter().collect()
    }
}

/// Left-continuous empirical quantile: the `ceil(p N)`-th order statistic.
pub fn quantile(samples: &[f64], p: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("quantile of an empty sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&sorted, p)
}

pub fn quantile_sorted(sorted: &[f64], p: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::InvalidInput("quantile of an empty sample".into()));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidInput(format!("quantile level {p} outside (0, 1]")));
    }
    Ok(sorted[order_index(sorted.len(), p)])
}

/// Zero-based index of the `ceil(p N)`-th order statistic. Products `p N`
/// within 1e-9 of an integer are snapped to it so that e.g. `0.3 * 10` picks
/// the third value rather than the fourth.
pub fn order_index(n: usize, p: f64) -> usize {
    let x = p * n as f64;
    let r = x.round();
    let k = if (x - r).abs() <= 1e-9 * x.max(1.0) { r } else { x.ceil() };
    (k.max(1.0) as usize).min(n) - 1
}

/// Quantile with a distribution-free 95% half-width from the binomial
/// order-statistic bracket.
pub fn quantile_estimate(samples: &[f64], p: f64, seed: u64) -> Result<BoundEstimate> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let value = quantile_sorted(&sorted, p)?;
    let n = sorted.len() as f64;
    let spread = 1.96 * (n * p * (1.0 - p)).sqrt();
    let lo = order_index(sorted.len(), ((n * p - spread) / n).max(1.0 / n));
    let hi = order_index(sorted.len(), ((n * p + spread) / n).min(1.0));
    Ok(BoundEstimate {
        value,
        ci_half_width: (sorted[hi] - sorted[lo]) / 2.0,
        trials: sorted.len(),
        seed,
    })
}

/// Right-continuous empirical CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("empirical CDF of an empty sample".into()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        Ok(Self { sorted })
    }

    pub fn from_sorted(sorted: Vec<f64>) -> Result<Self> {
        if sorted.is_empty() {
            return Err(Error::InvalidInput("empirical CDF of an empty sample".into()));
        }
        Ok(Self { sorted })
    }

    /// Fraction of samples `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// `(value, F(value))` at each distinct jump.
    pub fn steps(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &v) in self.sorted.iter().enumerate() {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 = (i + 1) as f64 / n,
                _ => out.push((v, (i + 1) as f64 / n)),
            }
        }
        out
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        quantile_sorted(&self.sorted, p)
    }

    /// Largest gap to a reference CDF (Kolmogorov-Smirnov statistic).
    pub fn ks_distance<F: Fn(f64) -> f64>(&self, cdf: F) -> f64 {
        let n = self.sorted.len() as f64;
        self.sorted
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    let ea = Ecdf::new(a)?;
    let eb = Ecdf::new(b)?;
    let mut d: f64 = 0.0;
    for &x in ea.sorted().iter().chain(eb.sorted()) {
        d = d.max((ea.eval(x) - eb.eval(x)).abs());
    }
    Ok(d)
}

/// Asymptotic Kolmogorov tail `P(sqrt(N_eff) D > t)`.
pub fn kolmogorov_pvalue(statistic: f64, n_eff: f64) -> f64 {
    let t = statistic * n_eff.sqrt();
    if t < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = 2.0 * (-1f64).powi(k + 1) * (-2.0 * kf * kf * t * t).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// A point estimate with its Monte-Carlo provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundEstimate {
    pub value: f64,
    /// 95% normal-approximation half-width.
    pub ci_half_width: f64,
    pub trials: usize,
    pub seed: u64,
}

impl BoundEstimate {
    pub fn exact(value: f64, seed: u64) -> Self {
        Self { value, ci_half_width: 0.0, trials: 1, seed }
    }

    /// One standard error, the half-width divided by 1.96.
    pub fn std_error(&self) -> f64 {
        self.ci_half_width / 1.96
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Streaming mean and variance (Welford), mergeable across batches.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanAccumulator {
    count: usize,
    mean: f64,
    m2: f64,
}

impl MeanAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / n;
        self.m2 += other.m2 + d * d * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn estimate(&self, seed: u64) -> Result<BoundEstimate> {
        if self.count < 2 {
            return Err(Error::InsufficientTrials { trials: self.count, what: "a confidence interval".into() });
        }
        Ok(BoundEstimate {
            value: self.mean,
            ci_half_width: 1.96 * (self.variance() / self.count as f64).sqrt(),
            trials: self.count,
            seed,
        })
    }
}

impl Extend<f64> for MeanAccumulator {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.push(x);
        }
    }
}

/// Sample mean with a `1.96 s / sqrt(N)` half-width. The seed field is 0;
/// callers attach theirs with [`BoundEstimate::with_seed`].
pub fn mean_ci(samples: &[f64]) -> Result<BoundEstimate> {
    let mut acc = MeanAccumulator::new();
    acc.extend(samples.iter().copied());
    acc.estimate(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_order_statistic() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(quantile(&v, 0.3).unwrap(), 3.0);
        assert_eq!(quantile(&v, 0.31).unwrap(), 4.0);
        assert_eq!(quantile(&v, 1.0).unwrap(), 10.0);
        assert_eq!(quantile(&v, 1e-9).unwrap(), 1.0);
        assert_eq!(quantile(&[2.5; 7], 0.42).unwrap(), 2.5);
        assert!(quantile(&[], 0.5).is_err());
        assert!(quantile(&v, 0.0).is_err());
    }

    #[test]
    fn one_minus_tiny_tail_is_second_largest() {
        let v: Vec<f64> = (0..1_000_000).map(f64::from).collect();
        assert_eq!(quantile_sorted(&v, 1.0 - 1e-6).unwrap(), 999_998.0);
    }

    #[test]
    fn uniform_median() {
        let e = Engine::new(9, 1);
        let mut rng = e.stream(0, 0);
        let v: Vec<f64> = (0..100_000).map(|_| uniform_closed0(&mut rng)).collect();
        assert!((quantile(&v, 0.5).unwrap() - 0.5).abs() < 0.01);
    }

    #[test]
    fn ecdf_inverse_pair() {
        let e = Ecdf::new(&[3.0]).unwrap();
        assert_eq!(e.eval(2.999), 0.0);
        assert_eq!(e.eval(3.0), 1.0);
        let samples = [0.4, -1.0, 2.0, 0.4, 7.5];
        let e = Ecdf::new(&samples).unwrap();
        for &x in &samples {
            assert_eq!(e.quantile(e.eval(x)).unwrap(), x);
        }
        assert!(Ecdf::new(&[]).is_err());
    }

    #[test]
    fn ecdf_ks_normal() {
        let e = Engine::new(3, 1);
        let mut rng = e.stream(1, 0);
        let n = 100_000;
        let v: Vec<f64> = (0..n).map(|_| real_normal(&mut rng)).collect();
        let ecdf = Ecdf::new(&v).unwrap();
        let d = ecdf.ks_distance(|x| 0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2));
        assert!(d <= 1.36 / (n as f64).sqrt() * 2.0, "ks distance {d}");
    }

    #[test]
    fn mean_ci_cases() {
        let c = mean_ci(&[4.0; 10]).unwrap();
        assert_eq!((c.value, c.ci_half_width), (4.0, 0.0));
        let e = Engine::new(17, 1);
        let mut rng = e.stream(2, 0);
        let b: Vec<f64> = (0..10_000).map(|_| f64::from(u8::from(rng.next_u64() & 1 == 1))).collect();
        assert!((mean_ci(&b).unwrap().value - 0.5).abs() < 0.02);
        assert!(mean_ci(&[1.0]).is_err());
    }

    #[test]
    fn accumulator_merge_matches_concatenation() {
        let a = [1.0, 2.5, -3.0, 4.25];
        let b = [10.0, 0.5, 0.75];
        let mut left = MeanAccumulator::new();
        left.extend(a);
        let mut right = MeanAccumulator::new();
        right.extend(b);
        left.merge(&right);
        let mut all = MeanAccumulator::new();
        all.extend(a.iter().chain(&b).copied());
        assert_eq!(left.count(), all.count());
        assert!((left.mean() - all.mean()).abs() < 1e-12);
        assert!((left.variance() - all.variance()).abs() < 1e-12);
    }

    #[test]
    fn streams_reproducible_and_independent() {
        let spec = StreamSpec { master_seed: 5, stream_id: 1, counter: 9 };
        let (mut a, mut b) = (derive_stream(spec), derive_stream(spec));
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut x = derive_stream(StreamSpec { stream_id: 1, ..spec });
        let mut y = derive_stream(StreamSpec { stream_id: 2, ..spec });
        let n = 10_000;
        let xs: Vec<f64> = (0..n).map(|_| uniform_closed0(&mut x)).collect();
        let ys: Vec<f64> = (0..n).map(|_| uniform_closed0(&mut y)).collect();
        let mx = xs.iter().sum::<f64>() / n as f64;
        let my = ys.iter().sum::<f64>() / n as f64;
        let cov: f64 = xs.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = xs.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = ys.iter().map(|b| (b - my).powi(2)).sum();
        assert!((cov / (vx * vy).sqrt()).abs() < 0.03);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let f = |rng: &mut Stream, i: usize| complex_normal(rng).norm_sqr() + i as f64;
        let one = Engine::new(77, 1).map(4, 2_000, f);
        let eight = Engine::new(77, 8).map(4, 2_000, f);
        assert_eq!(one, eight);
    }

    #[test]
    fn try_map_reports_lowest_index_error() {
        let r: Result<Vec<usize>> = Engine::new(1, 4).try_map(0, 100, |_, i| {
            if i % 30 == 29 {
                Err(Error::Degenerate(format!("{i}")))
            } else {
                Ok(i)
            }
        });
        assert_eq!(r, Err(Error::Degenerate("29".into())));
    }

    #[test]
    fn kolmogorov_tail_values() {
        // classic critical value: P(K > 1.628) = 0.01
        assert!((kolmogorov_pvalue(1.628, 1.0) - 0.01).abs() < 1e-3);
        assert!((kolmogorov_pvalue(1.358, 1.0) - 0.05).abs() < 1e-3);
    }
}
