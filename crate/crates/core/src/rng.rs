//! Counter-based, splittable random numbers.
//!
//! Each stochastic site (initialization, Gumbel noise, crops, flips, batch
//! composition) draws from its own `(seed, stream_id)` pair, so sequences do
//! not depend on the order in which sites are visited.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::math;

/// Stream tags for the stochastic sites of the library.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const GUMBEL: u64 = 2;
    pub const AUGMENT: u64 = 3;
    pub const BATCH: u64 = 4;
    pub const SYNTHETIC: u64 = 5;
    pub const SHUFFLE: u64 = 6;
    pub const PROBE: u64 = 7;
    pub const PAIRS: u64 = 8;
}

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Rng { seed, stream_id, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of 32-bit words consumed so far.
    pub fn draw_index(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Reposition the generator at a previously observed draw index.
    pub fn set_draw_index(&mut self, pos: u128) {
        self.inner.set_word_pos(pos);
    }

    /// Child generator for `(tag, index)`, independent of how much of `self`
    /// has been consumed.
    pub fn derive(&self, tag: u64, index: u64) -> Rng {
        let s = splitmix(splitmix(self.stream_id ^ splitmix(tag)) ^ index);
        Rng::new(self.seed, s)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` (n > 0), rejection sampled.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        math::sqrt(-2.0 * math::ln(u1)) * math::cos(core::f64::consts::TAU * u2)
    }

    /// Standard Gumbel draw `-ln(-ln U)`.
    pub fn gumbel(&mut self) -> f64 {
        -math::ln(-math::ln(self.uniform()))
    }

    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            xs.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn same_seed_and_stream_repeat() {
        let a: Vec<u64> = (0..16)
            .map({
                let mut r = Rng::new(7, 3);
                move |_| r.next_u64()
            })
            .collect();
        let b: Vec<u64> = (0..16)
            .map({
                let mut r = Rng::new(7, 3);
                move |_| r.next_u64()
            })
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn streams_differ() {
        let mut a = Rng::new(7, 3);
        let mut b = Rng::new(7, 4);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn derive_ignores_parent_consumption() {
        let mut a = Rng::new(1, 2);
        let c1 = a.derive(5, 9);
        a.next_u64();
        let c2 = a.derive(5, 9);
        assert_eq!(c1.clone().next_u64(), c2.clone().next_u64());
        assert_ne!(a.derive(5, 10).next_u64(), c1.clone().next_u64());
    }

    #[test]
    fn draw_index_restores_position() {
        let mut a = Rng::new(11, 0);
        a.next_u64();
        let pos = a.draw_index();
        let x = a.next_u64();
        let mut b = Rng::new(11, 0);
        b.set_draw_index(pos);
        assert_eq!(b.next_u64(), x);
    }

    #[test]
    fn uniform_open_interval_and_mean() {
        let mut r = Rng::new(3, 1);
        let n = 20_000;
        let mut s = 0.0;
        for _ in 0..n {
            let u = r.uniform();
            assert!(u > 0.0 && u < 1.0);
            s += u;
        }
        assert!((s / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn normal_moments() {
        let mut r = Rng::new(5, 1);
        let n = 40_000;
        let xs: Vec<f64> = (0..n).map(|_| r.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02);
        assert!((var - 1.0).abs() < 0.03);
    }
}
