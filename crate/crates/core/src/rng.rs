//! Seeded random source.
//!
//! Draw sequences are stable for a given seed within a release: the
//! generator is ChaCha8 seeded through `seed_from_u64`, and every primitive
//! below consumes it in a fixed way.

use num_bigint::BigUint;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct RandomSource {
    rng: ChaCha8Rng,
    seed: u64,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        RandomSource {
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
        }
    }

    /// Independent stream `stream` of a master seed, for worker fan-out.
    pub fn derive(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RandomSource { rng, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, bound)`.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "empty range");
        self.rng.random_range(0..bound)
    }

    /// Uniform big integer in `[0, bound)`, by rejection on the bit length.
    pub fn below_big(&mut self, bound: &BigUint) -> BigUint {
        assert!(bound.bits() > 0, "empty range");
        let bits = bound.bits();
        let words = bits.div_ceil(32) as usize;
        let excess = (words as u64 * 32 - bits) as u32;
        loop {
            let mut digits: Vec<u32> = (0..words).map(|_| self.rng.next_u32()).collect();
            if let Some(top) = digits.last_mut() {
                *top >>= excess;
            }
            let v = BigUint::new(digits);
            if &v < bound {
                return v;
            }
        }
    }

    /// Gamma(shape, 1) variate (Marsaglia–Tsang, constant expected time for
    /// `shape >= 1`).
    pub fn gamma(&mut self, shape: f64) -> Result<f64> {
        let law = Gamma::new(shape, 1.0).map_err(|e| Error::Domain(format!("gamma shape {shape}: {e}")))?;
        Ok(law.sample(&mut self.rng))
    }

    /// Uniform random permutation of `0..n` (Fisher–Yates).
    pub fn permutation(&mut self, n: usize) -> Vec<u32> {
        let mut p: Vec<u32> = (0..n as u32).collect();
        for i in (1..n).rev() {
            let j = self.below(i as u64 + 1) as usize;
            p.swap(i, j);
        }
        p
    }

    /// Uniform `k`-subset of `0..n` as a membership mask.
    pub fn subset(&mut self, n: usize, k: usize) -> Vec<bool> {
        // selection sampling: each position is taken with probability
        // (still needed) / (still available)
        let mut mask = Vec::with_capacity(n);
        let mut need = k;
        for i in 0..n {
            let left = (n - i) as u64;
            let take = need > 0 && self.below(left) < need as u64;
            if take {
                need -= 1;
            }
            mask.push(take);
        }
        mask
    }
}

impl RngCore for RandomSource {
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
