//! Seeded random streams. A stream is addressed by `(master_seed, stream_index)`;
//! the index selects an independent ChaCha20 stream under the same key.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

#[derive(Debug)]
pub struct RngStream {
    master_seed: u64,
    stream_index: u64,
    rng: ChaCha20Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_index);
        Self { master_seed, stream_index, rng }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Fresh copy positioned at the start of the same stream.
    pub fn restart(&self) -> Self {
        Self::new(self.master_seed, self.stream_index)
    }

    /// Uniform draw on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn normal_vec(&mut self, d: usize) -> Vec<f64> {
        (0..d).map(|_| self.normal()).collect()
    }

    /// Index drawn from a discrete distribution given by its cumulative sums.
    pub fn categorical(&mut self, cumulative: &[f64]) -> usize {
        let total = *cumulative.last().expect("non-empty distribution");
        let u = self.uniform() * total;
        cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
    }
}

/// Mixes a check index and a block index into one stream number so that
/// independent checks inside one run never share randomness.
pub fn stream_id(check: u64, block: u64) -> u64 {
    (check << 32) | (block & 0xffff_ffff)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_stream_same_sequence() {
        let mut a = RngStream::new(42, 3);
        let mut b = RngStream::new(42, 3);
        for _ in 0..100 {
            assert_eq!(a.normal().to_bits(), b.normal().to_bits());
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = RngStream::new(42, 0);
        let mut b = RngStream::new(42, 1);
        let xa: Vec<f64> = (0..8).map(|_| a.uniform()).collect();
        let xb: Vec<f64> = (0..8).map(|_| b.uniform()).collect();
        assert_ne!(xa, xb);
    }

    #[test]
    fn streams_are_uncorrelated() {
        let n = 20_000;
        let mut a = RngStream::new(7, 0);
        let mut b = RngStream::new(7, 1);
        let c: f64 = (0..n).map(|_| a.normal() * b.normal()).sum::<f64>() / n as f64;
        assert!(c.abs() < 4.0 / (n as f64).sqrt(), "correlation {c}");
    }

    #[test]
    fn categorical_respects_weights() {
        let mut r = RngStream::new(1, 0);
        let cum = [0.25, 1.0];
        let n = 40_000;
        let hits = (0..n).filter(|_| r.categorical(&cum) == 0).count() as f64 / n as f64;
        assert!((hits - 0.25).abs() < 3.0 * (0.25f64 * 0.75 / n as f64).sqrt());
    }
}
