//! Streaming mean / standard error for complex samples with an
//! order-fixed merge, so parallel reductions stay deterministic.

use rayon::prelude::*;
use serde::Serialize;

use crate::rng::RngStream;
use crate::{Result, C64};

/// Samples per RNG block; block `b` draws from stream `stream_base + b`.
pub const BLOCK: usize = 1024;

#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    n: u64,
    mean: C64,
    m2: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, z: C64) {
        self.n += 1;
        let delta = z - self.mean;
        self.mean += delta / self.n as f64;
        let delta2 = z - self.mean;
        self.m2 += delta.re * delta2.re + delta.im * delta2.im;
    }

    pub fn merge(&mut self, other: &Accumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let wa = self.n as f64;
        let wb = other.n as f64;
        self.mean += delta * (wb / n as f64);
        self.m2 += other.m2 + delta.norm_sqr() * wa * wb / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn estimate(&self) -> McEstimate {
        let stderr = if self.n > 1 {
            (self.m2.max(0.0) / ((self.n - 1) as f64 * self.n as f64)).sqrt()
        } else {
            0.0
        };
        McEstimate { mean: self.mean, stderr, n: self.n }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: C64,
    pub stderr: f64,
    pub n: u64,
}

impl McEstimate {
    pub fn scaled(self, c: f64) -> Self {
        Self { mean: self.mean * c, stderr: self.stderr * c.abs(), n: self.n }
    }
}

/// |a − b| / stderr, with 0 when both the difference and the error vanish.
pub fn z_score(diff: C64, stderr: f64) -> f64 {
    let d = diff.norm();
    if stderr > 0.0 {
        d / stderr
    } else if d <= 1e-12 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Runs `per_sample` `n` times in blocks of [`BLOCK`], in parallel, and merges
/// the block accumulators in block order.
pub fn run_blocks_n<const N: usize, F>(n: usize, seed: u64, stream_base: u64, per_sample: F) -> Result<[Accumulator; N]>
where
    F: Fn(&mut RngStream) -> Result<[C64; N]> + Sync,
{
    let blocks = n.div_ceil(BLOCK);
    let parts: Vec<Result<[Accumulator; N]>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = RngStream::new(seed, stream_base + b as u64);
            let mut acc = [Accumulator::new(); N];
            for _ in 0..BLOCK.min(n - b * BLOCK) {
                let v = per_sample(&mut rng)?;
                acc.iter_mut().zip(v).for_each(|(a, z)| a.push(z));
            }
            Ok(acc)
        })
        .collect();
    let mut total = [Accumulator::new(); N];
    for p in parts {
        total.iter_mut().zip(p?.iter()).for_each(|(t, a)| t.merge(a));
    }
    Ok(total)
}

pub fn run_blocks<F>(n: usize, seed: u64, stream_base: u64, per_sample: F) -> Result<Accumulator>
where
    F: Fn(&mut RngStream) -> Result<C64> + Sync,
{
    Ok(run_blocks_n(n, seed, stream_base, |rng| per_sample(rng).map(|z| [z]))?[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_matches_single_pass() {
        let xs: Vec<C64> = (0..101).map(|i| C64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let mut whole = Accumulator::new();
        xs.iter().for_each(|&z| whole.push(z));
        let mut a = Accumulator::new();
        let mut b = Accumulator::new();
        xs[..37].iter().for_each(|&z| a.push(z));
        xs[37..].iter().for_each(|&z| b.push(z));
        a.merge(&b);
        let (e1, e2) = (whole.estimate(), a.estimate());
        assert!((e1.mean - e2.mean).norm() < 1e-14);
        assert!((e1.stderr - e2.stderr).abs() < 1e-14);
    }

    #[test]
    fn stderr_of_constant_is_zero() {
        let mut a = Accumulator::new();
        (0..10).for_each(|_| a.push(C64::new(0.5, 0.0)));
        assert_eq!(a.estimate().stderr, 0.0);
        assert_eq!(z_score(C64::new(0.0, 0.0), 0.0), 0.0);
    }
}
