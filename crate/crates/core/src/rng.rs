//! Splittable random streams.
//!
//! A stream is a ChaCha8 generator keyed by the master seed, with the replica
//! index selecting the ChaCha stream word. Streams sharing a key but differing
//! in stream index produce non-overlapping keystreams, so replica `i` draws the
//! same numbers no matter which worker thread runs it.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

/// Identifier written to every output so a run can be reproduced exactly.
pub const ALGORITHM_ID: &str = "chacha8-seed_from_u64-stream/rand_distr-0.5-ziggurat";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamKey {
    pub master_seed: u64,
    pub stream_index: u64,
}

#[derive(Clone, Debug)]
pub struct RandomStream {
    key: StreamKey,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_index);
        Self {
            key: StreamKey {
                master_seed,
                stream_index,
            },
            rng,
        }
    }

    pub fn key(&self) -> StreamKey {
        self.key
    }

    pub fn algorithm_id(&self) -> &'static str {
        ALGORITHM_ID
    }

    /// A child stream derived from this one; used when one replica needs
    /// several independent sub-streams.
    pub fn split(&self, salt: u64) -> Self {
        let seed = self.key.master_seed.rotate_left(17) ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        Self::new(seed, self.key.stream_index)
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform in the open interval (0, 1).
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u = self.rng.random::<f64>();
            if u > 0.0 {
                return u;
            }
        }
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Exponential with rate 1.
    #[inline]
    pub fn exp1(&mut self) -> f64 {
        Exp1.sample(&mut self.rng)
    }

    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p >= 1.0 {
            true
        } else if p <= 0.0 {
            false
        } else {
            self.uniform() < p
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_keys_give_identical_draws() {
        let mut a = RandomStream::new(7, 3);
        let mut b = RandomStream::new(7, 3);
        for _ in 0..100 {
            assert_eq!(a.normal().to_bits(), b.normal().to_bits());
        }
    }

    #[test]
    fn distinct_indices_differ() {
        let mut a = RandomStream::new(7, 3);
        let mut b = RandomStream::new(7, 4);
        let same = (0..64).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let n = 20_000;
        let mut a = RandomStream::new(11, 0);
        let mut b = RandomStream::new(11, 1);
        let mut sxy = 0.0;
        for _ in 0..n {
            sxy += a.normal() * b.normal();
        }
        let corr = sxy / n as f64;
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr = {corr}");
    }
}
