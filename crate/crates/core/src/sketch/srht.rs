use nalgebra::DMatrix;

use super::fwht::fwht_rows;
use super::{TAG_SRHT_SELECT, TAG_SRHT_SIGN};
use crate::rng::{stream_id, uniform_at, word_at};

/// Sign of `D_ii`; 64 signs are packed in each random word.
#[inline]
pub(crate) fn sign(seed: u64, i: usize) -> f64 {
    let w = word_at(seed, stream_id(TAG_SRHT_SIGN, 0), (i >> 6) as u64);
    if (w >> (i & 63)) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Whether padded row `i` survives the Bernoulli(`rate`) row selection.
#[inline]
pub(crate) fn selected(seed: u64, i: usize, rate: f64) -> bool {
    uniform_at(seed, stream_id(TAG_SRHT_SELECT, 0), i as u64) < rate
}

/// `sqrt(n'/m) B H D` applied to `a` zero-padded to `n' = 2^ceil(log2 n)` rows.
pub(crate) fn apply(a: &DMatrix<f64>, m: usize, seed: u64) -> DMatrix<f64> {
    let (n, q) = a.shape();
    let np = n.next_power_of_two();
    let mut buf = vec![0.0; np * q];
    for i in 0..n {
        let s = sign(seed, i);
        let row = &mut buf[i * q..(i + 1) * q];
        for (c, r) in row.iter_mut().enumerate() {
            *r = s * a[(i, c)];
        }
    }
    fwht_rows(&mut buf, np, q);

    let rate = m as f64 / np as f64;
    let scale = (np as f64 / m as f64).sqrt();
    let kept: Vec<usize> = (0..np).filter(|&i| selected(seed, i, rate)).collect();
    DMatrix::from_fn(kept.len(), q, |r, c| scale * buf[kept[r] * q + c])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_oracle(a: &DMatrix<f64>, m: usize, seed: u64) -> DMatrix<f64> {
        let (n, q) = a.shape();
        let np = n.next_power_of_two();
        let mut padded = DMatrix::zeros(np, q);
        padded.rows_mut(0, n).copy_from(a);
        let h = DMatrix::from_fn(np, np, |i, j| {
            let s = if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            s / (np as f64).sqrt()
        });
        let d = DMatrix::from_fn(np, np, |i, j| if i == j { sign(seed, i) } else { 0.0 });
        let rate = m as f64 / np as f64;
        let kept: Vec<usize> = (0..np).filter(|&i| selected(seed, i, rate)).collect();
        let b = DMatrix::from_fn(kept.len(), np, |r, c| (kept[r] == c) as u8 as f64);
        b * h * d * padded * (np as f64 / m as f64).sqrt()
    }

    #[test]
    fn matches_dense_construction() {
        for (n, m) in [(5, 3), (8, 4), (20, 9), (33, 16), (64, 30)] {
            let a = DMatrix::from_fn(n, 3, |i, j| ((i * 31 + j * 17) % 23) as f64 - 11.0);
            for seed in 0..4 {
                let fast = apply(&a, m, seed);
                let slow = dense_oracle(&a, m, seed);
                assert_eq!(fast.shape(), slow.shape());
                assert!((fast - slow).amax() < 1e-10);
            }
        }
    }

    #[test]
    fn m_eff_mean_matches_binomial() {
        // n' = 2048, m = 800: mean of Binomial(2048, 800/2048) is 800
        let a = DMatrix::from_element(2048, 1, 1.0);
        let seeds = 5000u64;
        let rate = 800.0 / 2048.0;
        let total: usize = (0..seeds)
            .map(|s| (0..2048).filter(|&i| selected(s, i, rate)).count())
            .sum();
        let mean = total as f64 / seeds as f64;
        let se = (800.0 * (1.0 - rate)).sqrt() / (seeds as f64).sqrt();
        assert!((mean - 800.0).abs() <= 3.0 * se, "mean m_eff {mean}");
        assert_eq!(apply(&a, 800, 3).nrows(), (0..2048).filter(|&i| selected(3, i, rate)).count());
    }
}
