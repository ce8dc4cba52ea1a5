//! Reproducible Monte Carlo engine.
//!
//! Every estimate is split into fixed-size batches. Batch `b` draws from the
//! counter-based ChaCha stream `b` of the caller's seed, so the sample values
//! are a pure function of `(seed, batch, position)` and never depend on how
//! many workers executed the batches. Partial results are merged in batch
//! order with a fixed pairwise tree.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "DIMRED_WORKERS";

/// Samples per batch (one random stream per batch).
pub const BATCH_SIZE: u64 = 8192;

/// A counter-based random stream: ChaCha8 keyed by the seed, with the
/// stream index selecting an independent 2^64-block sequence.
#[derive(Clone, Debug)]
pub struct RandomStream {
    rng: ChaCha8Rng,
    seed: u64,
    stream_index: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_index);
        Self {
            rng,
            seed,
            stream_index,
        }
    }

    /// Positions the stream at an absolute 32-bit word offset.
    pub fn at_word(seed: u64, stream_index: u64, word: u128) -> Self {
        let mut s = Self::new(seed, stream_index);
        s.rng.set_word_pos(word);
        s
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform on `[lo, hi)`.
    #[inline]
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform integer in `0..n`.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// SplitMix64 finalizer, used to derive child seeds for sub-jobs.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Result of a Monte Carlo estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub seed: u64,
    pub n_workers: usize,
}

impl MCEstimate {
    /// A value known without sampling error.
    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            std_error: 0.0,
            n_samples: 0,
            seed: 0,
            n_workers: 0,
        }
    }

    /// Multiplies the estimate (and its error) by a constant measure weight.
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            mean: self.mean * factor,
            std_error: self.std_error * factor.abs(),
            ..self
        }
    }

    /// Sum of independent estimates; errors add in quadrature.
    pub fn sum_independent<'a>(parts: impl IntoIterator<Item = &'a MCEstimate>, seed: u64) -> Self {
        let mut mean = Neumaier::default();
        let mut var = Neumaier::default();
        let mut n_samples = 0;
        let mut n_workers = 0;
        for p in parts {
            mean.add(p.mean);
            var.add(p.std_error * p.std_error);
            n_samples += p.n_samples;
            n_workers = n_workers.max(p.n_workers);
        }
        Self {
            mean: mean.total(),
            std_error: var.total().sqrt(),
            n_samples,
            seed,
            n_workers,
        }
    }

    /// |self - other| in units of the combined standard error.
    pub fn z_score(&self, other: &MCEstimate) -> f64 {
        z_score(self.mean, self.std_error, other.mean, other.std_error)
    }

    /// True when `value` lies within `k` standard errors of the mean.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error
    }
}

/// A number that is either known exactly or estimated by Monte Carlo.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Value {
    Exact { value: f64 },
    Mc(MCEstimate),
}

impl Value {
    pub fn exact(value: f64) -> Self {
        Value::Exact { value }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Value::Exact { value } => *value,
            Value::Mc(e) => e.mean,
        }
    }

    pub fn std_error(&self) -> f64 {
        match self {
            Value::Exact { .. } => 0.0,
            Value::Mc(e) => e.std_error,
        }
    }

    pub fn scaled(self, factor: f64) -> Self {
        match self {
            Value::Exact { value } => Value::exact(value * factor),
            Value::Mc(e) => Value::Mc(e.scaled(factor)),
        }
    }

    pub fn z_score(&self, other: &Value) -> f64 {
        z_score(self.mean(), self.std_error(), other.mean(), other.std_error())
    }
}

impl From<MCEstimate> for Value {
    fn from(e: MCEstimate) -> Self {
        Value::Mc(e)
    }
}

/// Relative rounding floor used when both sides are (nearly) exact.
pub const ROUNDING_FLOOR: f64 = 64.0 * f64::EPSILON;

/// z-score for two independent measurements. Differences within a few ulps
/// of the larger magnitude count as zero; larger differences between exact
/// values give infinity.
pub fn z_score(a: f64, sa: f64, b: f64, sb: f64) -> f64 {
    let diff = (a - b).abs();
    if diff <= ROUNDING_FLOOR * a.abs().max(b.abs()) {
        return 0.0;
    }
    let sigma = (sa * sa + sb * sb).sqrt();
    if sigma == 0.0 {
        f64::INFINITY
    } else {
        diff / sigma
    }
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Per-batch moments (Welford) plus an indicator tally.
#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
    ones: u64,
    indicator: bool,
}

impl Moments {
    fn new() -> Self {
        Self {
            indicator: true,
            ..Default::default()
        }
    }

    #[inline]
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
        if x == 1.0 {
            self.ones += 1;
        } else if x != 0.0 {
            self.indicator = false;
        }
    }

    fn merge(a: Moments, b: Moments) -> Moments {
        if a.n == 0 {
            return b;
        }
        if b.n == 0 {
            return a;
        }
        let n = a.n + b.n;
        let delta = b.mean - a.mean;
        let fb = b.n as f64 / n as f64;
        Moments {
            n,
            mean: a.mean + delta * fb,
            m2: a.m2 + b.m2 + delta * delta * a.n as f64 * fb,
            ones: a.ones + b.ones,
            indicator: a.indicator && b.indicator,
        }
    }
}

fn merge_pairwise(parts: &[Moments]) -> Moments {
    match parts.len() {
        0 => Moments::new(),
        1 => parts[0],
        len => {
            let (l, r) = parts.split_at(len / 2);
            Moments::merge(merge_pairwise(l), merge_pairwise(r))
        }
    }
}

/// Worker count from `DIMRED_WORKERS`, falling back to the available parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

fn pool(workers: usize) -> Arc<rayon::ThreadPool> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<rayon::ThreadPool>>>> = OnceLock::new();
    let mut pools = POOLS
        .get_or_init(Default::default)
        .lock()
        .expect("thread pool registry poisoned");
    pools
        .entry(workers)
        .or_insert_with(|| {
            Arc::new(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .expect("failed to build thread pool"),
            )
        })
        .clone()
}

/// Estimates the mean of `integrand` over points drawn by `sampler`.
pub fn estimate<P, S, F>(sampler: S, integrand: F, n_samples: u64, seed: u64) -> Result<MCEstimate>
where
    S: Fn(&mut RandomStream) -> P + Sync,
    F: Fn(&P) -> f64 + Sync,
{
    estimate_with(
        || (),
        |_, rng| {
            let p = sampler(rng);
            integrand(&p)
        },
        n_samples,
        seed,
    )
}

/// Like [`estimate`], but the evaluator receives per-batch scratch state
/// created by `init`, so hot loops can reuse buffers.
pub fn estimate_with<St, I, F>(init: I, eval: F, n_samples: u64, seed: u64) -> Result<MCEstimate>
where
    I: Fn() -> St + Sync,
    F: Fn(&mut St, &mut RandomStream) -> f64 + Sync,
{
    estimate_with_workers(init, eval, n_samples, seed, worker_count())
}

/// [`estimate_with`] on an explicit number of workers.
pub fn estimate_with_workers<St, I, F>(
    init: I,
    eval: F,
    n_samples: u64,
    seed: u64,
    workers: usize,
) -> Result<MCEstimate>
where
    I: Fn() -> St + Sync,
    F: Fn(&mut St, &mut RandomStream) -> f64 + Sync,
{
    try_estimate_with_workers(init, |s, r| Ok(eval(s, r)), n_samples, seed, workers)
}

/// Fallible evaluator variant; the first error aborts the estimate.
pub fn try_estimate_with<St, I, F>(init: I, eval: F, n_samples: u64, seed: u64) -> Result<MCEstimate>
where
    I: Fn() -> St + Sync,
    F: Fn(&mut St, &mut RandomStream) -> Result<f64> + Sync,
{
    try_estimate_with_workers(init, eval, n_samples, seed, worker_count())
}

pub fn try_estimate_with_workers<St, I, F>(
    init: I,
    eval: F,
    n_samples: u64,
    seed: u64,
    workers: usize,
) -> Result<MCEstimate>
where
    I: Fn() -> St + Sync,
    F: Fn(&mut St, &mut RandomStream) -> Result<f64> + Sync,
{
    if n_samples < 2 {
        return Err(crate::error::out_of_range("n_samples", n_samples as usize, ">= 2"));
    }
    let workers = workers.max(1);
    let n_batches = n_samples.div_ceil(BATCH_SIZE);

    let run_batch = |b: u64| -> Result<Moments> {
        let mut rng = RandomStream::new(seed, b);
        let mut state = init();
        let mut m = Moments::new();
        let len = BATCH_SIZE.min(n_samples - b * BATCH_SIZE);
        for i in 0..len {
            let x = eval(&mut state, &mut rng)?;
            if !x.is_finite() {
                return Err(Error::NonFinite {
                    value: x,
                    stream: b,
                    sample: b * BATCH_SIZE + i,
                });
            }
            m.push(x);
        }
        Ok(m)
    };

    let parts: Vec<Moments> = if workers == 1 {
        (0..n_batches).map(run_batch).collect::<Result<_>>()?
    } else {
        pool(workers).install(|| {
            (0..n_batches)
                .into_par_iter()
                .map(run_batch)
                .collect::<Result<Vec<_>>>()
        })?
    };

    let m = merge_pairwise(&parts);
    let n = m.n as f64;
    let (mean, var) = if m.indicator {
        let p = m.ones as f64 / n;
        (p, p * (1.0 - p) * n / (n - 1.0))
    } else {
        (m.mean, (m.m2 / (n - 1.0)).max(0.0))
    };
    Ok(MCEstimate {
        mean,
        std_error: (var / n).sqrt(),
        n_samples,
        seed,
        n_workers: workers,
    })
}

/// Writes a uniformly distributed unit vector into `out` (normalized Gaussian).
#[inline]
pub fn fill_unit_sphere(out: &mut [f64], rng: &mut RandomStream) {
    if out.len() == 1 {
        out[0] = if rng.next_u32() & 1 == 0 { 1.0 } else { -1.0 };
        return;
    }
    loop {
        let mut norm2 = 0.0;
        for x in out.iter_mut() {
            *x = rng.normal();
            norm2 += *x * *x;
        }
        if norm2 > 1e-300 {
            let inv = 1.0 / norm2.sqrt();
            out.iter_mut().for_each(|x| *x *= inv);
            return;
        }
    }
}

/// A uniform point on the unit sphere in R^d.
pub fn sample_unit_sphere(d: usize, rng: &mut RandomStream) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(crate::error::out_of_range("d", 0, ">= 1"));
    }
    let mut v = vec![0.0; d];
    fill_unit_sphere(&mut v, rng);
    Ok(v)
}

/// Surface measure of the unit sphere in R^d, `2 π^{d/2} / Γ(d/2)`.
pub fn sphere_area(d: usize) -> Result<f64> {
    if d == 0 {
        return Err(crate::error::out_of_range("d", 0, ">= 1"));
    }
    let h = d as f64 / 2.0;
    Ok(2.0 * std::f64::consts::PI.powf(h) / libm::tgamma(h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(1).unwrap() - 2.0).abs() < 1e-14);
        assert!((sphere_area(2).unwrap() - 2.0 * PI).abs() < 1e-13);
        assert!((sphere_area(3).unwrap() - 4.0 * PI).abs() < 1e-13);
        assert!((sphere_area(4).unwrap() - 2.0 * PI * PI).abs() < 1e-12);
        assert!(sphere_area(0).is_err());
    }

    #[test]
    fn constant_integrand_has_zero_error() {
        let e = estimate(|_| (), |_| 1.0, 1000, 7).unwrap();
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.std_error, 0.0);
        assert_eq!(e.n_samples, 1000);
    }

    #[test]
    fn rejects_tiny_sample_counts() {
        assert!(estimate(|_| (), |_| 1.0, 1, 7).is_err());
    }

    #[test]
    fn non_finite_reports_stream() {
        let err = estimate_with(
            || 0u64,
            |count, _| {
                *count += 1;
                if *count == 5 {
                    f64::NAN
                } else {
                    1.0
                }
            },
            3 * BATCH_SIZE,
            1,
        )
        .unwrap_err();
        match err {
            Error::NonFinite { stream, sample, .. } => {
                assert_eq!(stream, 0);
                assert_eq!(sample, 4);
            }
            e => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn d1_sphere_is_plus_minus_one() {
        let mut rng = RandomStream::new(3, 0);
        let mut plus = 0;
        let n = 20000;
        for _ in 0..n {
            let v = sample_unit_sphere(1, &mut rng).unwrap();
            assert!(v[0] == 1.0 || v[0] == -1.0);
            if v[0] > 0.0 {
                plus += 1;
            }
        }
        let p = plus as f64 / n as f64;
        assert!((p - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt());
        assert!(sample_unit_sphere(0, &mut rng).is_err());
    }

    #[test]
    fn binomial_error_matches_formula() {
        let e = estimate(|rng| rng.uniform(), |&u| (u < 0.1) as u8 as f64, 100_000, 11).unwrap();
        let p = e.mean;
        let expect = (p * (1.0 - p) / (100_000.0 - 1.0)).sqrt();
        assert!((e.std_error - expect).abs() < 1e-15);
    }

    #[test]
    fn streams_are_reproducible() {
        let a: Vec<u64> = {
            let mut r = RandomStream::new(42, 5);
            (0..8).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = RandomStream::new(42, 5);
            (0..8).map(|_| r.next_u64()).collect()
        };
        let c: Vec<u64> = {
            let mut r = RandomStream::new(42, 6);
            (0..8).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
        let mut w = RandomStream::at_word(42, 5, 2);
        assert_eq!(w.next_u64(), a[1]);
    }

    #[test]
    fn neumaier_recovers_small_terms() {
        let mut s = Neumaier::default();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.total(), 1000.0);
    }
}
