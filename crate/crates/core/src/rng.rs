//! Counter-based random numbers.
//!
//! Philox2x64-10 maps a 128-bit counter and a 64-bit key to 128 random bits.
//! The key is the user seed and the counter is `(block, stream)`, so any
//! sketch entry can be regenerated from `(seed, stream, index)` alone. That
//! makes every sketch independent of evaluation order and thread schedule.

use rand_core::{impls, RngCore};

const PHILOX_M: u64 = 0xD2B7_4407_B1CE_6E93;
const PHILOX_W: u64 = 0x9E37_79B9_7F4A_7C15;
const ROUNDS: usize = 10;

/// One Philox2x64-10 evaluation.
#[inline]
pub fn philox2x64(ctr: [u64; 2], key: u64) -> [u64; 2] {
    let [mut x0, mut x1] = ctr;
    let mut k = key;
    for r in 0..ROUNDS {
        if r > 0 {
            k = k.wrapping_add(PHILOX_W);
        }
        let prod = (PHILOX_M as u128) * (x0 as u128);
        let hi = (prod >> 64) as u64;
        let lo = prod as u64;
        x0 = hi ^ k ^ x1;
        x1 = lo;
    }
    [x0, x1]
}

/// Stream identifiers are namespaced by a 16-bit tag in the high bits.
#[inline]
pub const fn stream_id(tag: u16, index: u64) -> u64 {
    ((tag as u64) << 48) | (index & 0x0000_FFFF_FFFF_FFFF)
}

/// The `index`-th 64-bit word of `(seed, stream)`, without generating the ones before it.
#[inline]
pub fn word_at(seed: u64, stream: u64, index: u64) -> u64 {
    philox2x64([index >> 1, stream], seed)[(index & 1) as usize]
}

/// Uniform draw on `[0, 1)` with 53 bits of precision.
#[inline]
pub fn unit_f64(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
pub fn uniform_at(seed: u64, stream: u64, index: u64) -> f64 {
    unit_f64(word_at(seed, stream, index))
}

/// Splitmix64 finalizer. A bijection on `u64`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one Monte Carlo trial.
///
/// `(family, m, trial)` are packed into disjoint bit fields (16, 24 and 24
/// bits) before mixing, so for a fixed master seed distinct cells never share
/// a seed as long as the fields fit.
pub fn child_seed(master: u64, family: usize, m: usize, trial: usize) -> u64 {
    debug_assert!(family < 1 << 16 && m < 1 << 24 && trial < 1 << 24);
    let packed = ((family as u64) << 48) | ((m as u64 & 0xFF_FFFF) << 24) | (trial as u64 & 0xFF_FFFF);
    mix64(master ^ mix64(packed))
}

/// Sequential generator over one `(seed, stream)` pair.
#[derive(Clone, Debug)]
pub struct Philox {
    key: u64,
    stream: u64,
    block: u64,
    buf: [u64; 2],
    used: usize,
}

impl Philox {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self {
            key: seed,
            stream,
            block: 0,
            buf: [0; 2],
            used: 2,
        }
    }

    /// Uniform integer in `0..bound` by Lemire's multiply-and-reject method.
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        let mut prod = (self.next_u64() as u128) * (bound as u128);
        if (prod as u64) < bound {
            let threshold = bound.wrapping_neg() % bound;
            while (prod as u64) < threshold {
                prod = (self.next_u64() as u128) * (bound as u128);
            }
        }
        (prod >> 64) as u64
    }

    pub fn uniform(&mut self) -> f64 {
        unit_f64(self.next_u64())
    }
}

impl RngCore for Philox {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        if self.used == 2 {
            self.buf = philox2x64([self.block, self.stream], self.key);
            self.block = self.block.wrapping_add(1);
            self.used = 0;
        }
        let w = self.buf[self.used];
        self.used += 1;
        w
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        impls::fill_bytes_via_next(self, dest)
    }
}

#[cfg(test)]
mod tests {
    use super::{child_seed, mix64, philox2x64, stream_id, word_at, Philox};
    use proptest::prelude::*;
    use rand_core::RngCore;

    #[test]
    fn known_answers() {
        assert_eq!(
            philox2x64([0, 0], 0),
            [0xca00a0459843d731, 0x66c24222c9a845b5]
        );
        assert_eq!(
            philox2x64([u64::MAX, u64::MAX], u64::MAX),
            [0x65b021d60cd8310f, 0x4d02f3222f86df20]
        );
        assert_eq!(
            philox2x64([0x243f6a8885a308d3, 0x13198a2e03707344], 0xa4093822299f31d0),
            [0x0a5e742c2997341c, 0xb0f883d38000de5d]
        );
    }

    #[test]
    fn sequential_matches_random_access() {
        let mut g = Philox::new(42, stream_id(3, 17));
        for i in 0..101 {
            assert_eq!(g.next_u64(), word_at(42, stream_id(3, 17), i));
        }
    }

    #[test]
    fn below_is_in_range_and_roughly_uniform() {
        let mut g = Philox::new(1, 0);
        let mut counts = [0usize; 7];
        for _ in 0..70_000 {
            counts[g.below(7) as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() < 5.0 * 100.0, "{counts:?}");
        }
    }

    #[test]
    fn uniform_moments() {
        let mut g = Philox::new(9, 0);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| g.uniform()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 4.0 * (1.0f64 / 12.0 / n as f64).sqrt());
        assert!((var - 1.0 / 12.0).abs() < 1e-3);
        assert!(xs.iter().all(|&x| (0.0..1.0).contains(&x)));
    }

    #[test]
    fn child_seeds_distinct_over_grid() {
        let mut seen = std::collections::HashSet::new();
        for f in 0..4 {
            for m in [200, 400, 800, 1600] {
                for t in 0..500 {
                    assert!(seen.insert(child_seed(7, f, m, t)));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn mix64_is_injective_on_pairs(a: u64, b: u64) {
            prop_assume!(a != b);
            prop_assert_ne!(mix64(a), mix64(b));
        }

        #[test]
        fn streams_differ(seed: u64, s1: u64, s2: u64) {
            prop_assume!(s1 != s2);
            prop_assert_ne!(philox2x64([0, s1], seed), philox2x64([0, s2], seed));
        }
    }
}
