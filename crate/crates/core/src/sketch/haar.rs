use nalgebra::{DMatrix, SVD};
use rand_distr::{Distribution, StandardNormal};

use super::TAG_HAAR;
use crate::rng::{stream_id, Philox};

/// Relative singular value floor for the Gaussian draw.
const SV_FLOOR: f64 = 1e-12;

fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    // column j from its own stream
    let mut g = DMatrix::<f64>::zeros(rows, cols);
    for (j, mut col) in g.column_iter_mut().enumerate() {
        let mut rng = Philox::new(seed, stream_id(TAG_HAAR, j as u64));
        col.iter_mut().for_each(|x| *x = StandardNormal.sample(&mut rng));
    }
    g
}

/// `S_0 = (G G^T)^{-1/2} G` for `G` an `m x n` standard Gaussian, via `G = P diag(s) Q^T`.
/// `S_0` has orthonormal rows and is uniformly distributed.
pub fn haar_explicit_operator(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
    // draw G^T (n x m) so each row of G is one contiguous stream
    let gt = gaussian(n, m, seed);
    let svd = SVD::new(gt, true, true);
    let u = svd.u.expect("requested U"); // n x m, right factor of G
    let vt = svd.v_t.expect("requested V^T"); // m x m, left factor of G transposed
    let s = &svd.singular_values;
    let floor = SV_FLOOR * s.max();
    let mut s0 = DMatrix::<f64>::zeros(m, n);
    for k in 0..s.len() {
        if s[k] > floor {
            // G = V diag(s) U^T, so the k-th rank-one term of S_0 is v_k u_k^T
            s0.ger(1.0, &vt.row(k).transpose(), &u.column(k), 1.0);
        }
    }
    s0
}

pub(crate) fn apply_explicit(a: &DMatrix<f64>, m: usize, seed: u64) -> DMatrix<f64> {
    let n = a.nrows();
    let s0 = haar_explicit_operator(m, n, seed);
    (s0 * a) * (n as f64 / m as f64).sqrt()
}

/// Uniform `n x r` orthonormal frame: Q factor of a Gaussian matrix with
/// the signs of `diag(R)` made positive.
fn haar_frame(n: usize, r: usize, seed: u64) -> DMatrix<f64> {
    let qr = gaussian(n, r, seed).qr();
    let rr = qr.r();
    let mut q = qr.q();
    for j in 0..r {
        if rr[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `S a` drawn from its exact law without forming `S`: with `a = Q R`,
/// `S_0 Q` is distributed as the top `m` rows of a Haar `n x r` frame.
pub(crate) fn apply_reduced(a: &DMatrix<f64>, m: usize, seed: u64) -> DMatrix<f64> {
    let (n, q) = a.shape();
    let qr = a.clone().qr();
    let r = qr.r();
    let w = haar_frame(n, q, seed);
    (w.rows(0, m) * r) * (n as f64 / m as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn explicit_rows_orthonormal() {
        let s0 = haar_explicit_operator(12, 40, 3);
        let gram = &s0 * s0.transpose();
        assert!((gram - DMatrix::<f64>::identity(12, 12)).amax() < 1e-10);
        // S S^T S = (n/m) S for the scaled operator
        let s = &s0 * (40.0f64 / 12.0).sqrt();
        let lhs = &s * s.transpose() * &s;
        assert!((lhs - &s * (40.0 / 12.0)).amax() < 1e-10);
    }

    #[test]
    fn frame_orthonormal() {
        let w = haar_frame(50, 4, 8);
        assert!((w.tr_mul(&w) - DMatrix::<f64>::identity(4, 4)).amax() < 1e-12);
    }

    #[test]
    fn reduced_preserves_column_inner_products_in_mean() {
        // E[a^T S^T S b] = a^T b for both realizations
        let n = 64;
        let a = DMatrix::from_fn(n, 2, |i, j| ((i * (j + 3)) % 7) as f64 - 3.0);
        let exact = a.tr_mul(&a);
        let trials = 3000;
        let mut acc_r = DMatrix::<f64>::zeros(2, 2);
        for seed in 0..trials {
            let sr = apply_reduced(&a, 16, seed);
            acc_r += sr.tr_mul(&sr);
        }
        acc_r /= trials as f64;
        assert!((acc_r - &exact).amax() < 0.05 * exact.amax());
    }
}
