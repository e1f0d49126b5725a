//! Batched Monte Carlo runs with reproducible streams and an ordered
//! pairwise reduction of multivariate moments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable overriding the master seed.
pub const SEED_ENV: &str = "HSLAB_SEED";

/// Number of largest absolute values retained per output for tail checks.
const TAIL_KEEP: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    pub n_paths: u64,
    pub batch_size: u64,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Minimum effective sample fraction for importance weights.
    pub ess_floor: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            n_paths: 100_000,
            batch_size: 4096,
            seed: 0x5EED_2024,
            workers: None,
            ess_floor: 0.05,
        }
    }
}

impl McConfig {
    pub fn with_paths(mut self, n: u64) -> Self {
        self.n_paths = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Applies the seed override from the environment, if set.
    pub fn seed_from_env(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v} is not a 64-bit seed")))?;
        }
        Ok(self)
    }

    /// Stream for batch `index`: `(master seed, batch index)`.
    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

/// Running means and co-moments of `k` per-path outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: Vec<f64>,
    /// Row-major `k × k` sums of centered cross products.
    comoment: Vec<f64>,
    /// Largest absolute values per output, descending.
    tails: Vec<Vec<f64>>,
}

impl Moments {
    pub fn new(k: usize) -> Self {
        Moments {
            n: 0,
            mean: vec![0.0; k],
            comoment: vec![0.0; k * k],
            tails: vec![Vec::new(); k],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn push(&mut self, xs: &[f64]) {
        let k = self.dim();
        self.n += 1;
        let n = self.n as f64;
        let delta: Vec<f64> = xs.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        for i in 0..k {
            self.mean[i] += delta[i] / n;
        }
        for i in 0..k {
            let di = xs[i] - self.mean[i];
            for j in 0..k {
                self.comoment[i * k + j] += delta[j] * di;
            }
        }
        for (i, &x) in xs.iter().enumerate() {
            insert_tail(&mut self.tails[i], x.abs());
        }
    }

    /// Exact pairwise combination of two moment sets.
    pub fn merge(&self, other: &Moments) -> Moments {
        if self.n == 0 {
            return other.clone();
        }
        if other.n == 0 {
            return self.clone();
        }
        let k = self.dim();
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        let mean = (0..k).map(|i| self.mean[i] + delta[i] * nb / n).collect();
        let mut comoment = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                comoment[i * k + j] =
                    self.comoment[i * k + j] + other.comoment[i * k + j] + delta[i] * delta[j] * na * nb / n;
            }
        }
        let tails = (0..k)
            .map(|i| {
                let mut t: Vec<f64> = self.tails[i].iter().chain(&other.tails[i]).cloned().collect();
                t.sort_by(|a, b| b.partial_cmp(a).unwrap());
                t.truncate(TAIL_KEEP);
                t
            })
            .collect();
        Moments { n: self.n + other.n, mean, comoment, tails }
    }

    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.comoment[i * self.dim() + j] / (self.n - 1) as f64
    }

    /// Estimate of `Σ c_i E[X_i]` with the paired standard error.
    pub fn combination(&self, coeffs: &[f64]) -> (f64, f64) {
        let k = self.dim();
        let mean = (0..k).map(|i| coeffs[i] * self.mean[i]).sum();
        let mut var = 0.0;
        for i in 0..k {
            for j in 0..k {
                var += coeffs[i] * coeffs[j] * self.covariance(i, j);
            }
        }
        (mean, (var.max(0.0) / self.n.max(1) as f64).sqrt())
    }

    /// Hill estimate of the tail index of `|X_i|` (large for light tails).
    pub fn tail_index(&self, i: usize) -> f64 {
        let t = &self.tails[i];
        let k = (self.n as usize / 200).clamp(10, TAIL_KEEP - 1);
        if t.len() <= k || t[k] <= 0.0 {
            return f64::INFINITY;
        }
        let gamma: f64 = t[..k].iter().map(|x| (x / t[k]).ln()).sum::<f64>() / k as f64;
        if gamma <= 0.0 {
            f64::INFINITY
        } else {
            1.0 / gamma
        }
    }
}

fn insert_tail(t: &mut Vec<f64>, v: f64) {
    if t.len() == TAIL_KEEP && v <= *t.last().unwrap() {
        return;
    }
    let pos = t.partition_point(|&x| x >= v);
    t.insert(pos, v);
    t.truncate(TAIL_KEEP);
}

/// Ordered pairwise reduction; the tree shape depends only on the number of
/// batches, so results do not depend on scheduling.
fn tree_merge(mut parts: Vec<Moments>, k: usize) -> Moments {
    if parts.is_empty() {
        return Moments::new(k);
    }
    while parts.len() > 1 {
        parts = parts
            .chunks(2)
            .map(|c| if c.len() == 2 { c[0].merge(&c[1]) } else { c[0].clone() })
            .collect();
    }
    parts.pop().unwrap()
}

/// Runs `cfg.n_paths` samples in batches. `batch` receives the batch RNG,
/// the number of paths and a sink for per-path output vectors of length `k`.
pub fn run_batches<F>(cfg: &McConfig, k: usize, batch: F) -> Result<Moments>
where
    F: Fn(&mut ChaCha8Rng, u64, &mut Moments) -> Result<()> + Sync,
{
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let n_batches = cfg.n_paths.div_ceil(cfg.batch_size);
    let work = |b: u64| -> Result<Moments> {
        let mut rng = cfg.stream(b);
        let count = cfg.batch_size.min(cfg.n_paths - b * cfg.batch_size);
        let mut m = Moments::new(k);
        batch(&mut rng, count, &mut m)?;
        Ok(m)
    };
    let collect = || (0..n_batches).into_par_iter().map(work).collect::<Result<Vec<_>>>();
    let parts = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(collect)?,
        None => collect()?,
    };
    Ok(tree_merge(parts, k))
}
