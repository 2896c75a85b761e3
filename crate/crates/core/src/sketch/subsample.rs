use nalgebra::DMatrix;

use super::TAG_SUBSAMPLE;
use crate::rng::{stream_id, uniform_at};

/// Keep each row with probability `m/n`, scaled by `sqrt(n/m)`.
pub(crate) fn apply(a: &DMatrix<f64>, m: usize, seed: u64) -> DMatrix<f64> {
    let (n, q) = a.shape();
    let rate = m as f64 / n as f64;
    let scale = (n as f64 / m as f64).sqrt();
    let stream = stream_id(TAG_SUBSAMPLE, 0);
    let kept: Vec<usize> = (0..n)
        .filter(|&i| uniform_at(seed, stream, i as u64) < rate)
        .collect();
    DMatrix::from_fn(kept.len(), q, |r, c| scale * a[(kept[r], c)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_scaled_copies() {
        let a = DMatrix::from_fn(50, 2, |i, j| (i * 2 + j) as f64);
        let out = apply(&a, 49, 11);
        let scale = (50.0f64 / 49.0).sqrt();
        assert!(out.nrows() > 40);
        for r in 0..out.nrows() {
            let orig = out[(r, 0)] / scale;
            let i = (orig / 2.0).round() as usize;
            assert!((out[(r, 1)] - scale * a[(i, 1)]).abs() < 1e-12);
        }
    }
}
