use nalgebra::DMatrix;

use super::TAG_SSE;
use crate::rng::{stream_id, Philox};
use rand_core::RngCore;

/// 32-bit draws from a Philox stream, two per 64-bit word.
struct Lanes {
    g: Philox,
    word: u64,
    left: u32,
}

impl Lanes {
    fn new(g: Philox) -> Self {
        Lanes { g, word: 0, left: 0 }
    }

    #[inline]
    fn next(&mut self) -> u32 {
        if self.left == 0 {
            self.word = self.g.next_u64();
            self.left = 2;
        }
        self.left -= 1;
        let x = self.word as u32;
        self.word >>= 32;
        x
    }

    /// Uniform integer in `0..bound` (Lemire, 32-bit). The division is only
    /// needed on the rare draws that might be rejected.
    #[inline]
    fn below(&mut self, bound: u32) -> u32 {
        let mut prod = self.next() as u64 * bound as u64;
        if (prod as u32) < bound {
            let threshold = bound.wrapping_neg() % bound;
            while (prod as u32) < threshold {
                prod = self.next() as u64 * bound as u64;
            }
        }
        (prod >> 32) as u32
    }
}

/// Draw `zeta` distinct rows of `0..m` (Floyd's algorithm) into `out`.
fn distinct_rows(g: &mut Lanes, m: usize, zeta: usize, out: &mut Vec<usize>, mark: &mut [bool]) {
    out.clear();
    let use_mark = zeta > 32;
    for j in (m - zeta)..m {
        let t = g.below(j as u32 + 1) as usize;
        let taken = if use_mark { mark[t] } else { out.contains(&t) };
        let pick = if taken { j } else { t };
        if use_mark {
            mark[pick] = true;
        }
        out.push(pick);
    }
    if use_mark {
        for &r in out.iter() {
            mark[r] = false;
        }
    }
}

/// Sparse sign embedding applied by row scatter. Returns the sketched
/// matrix and the number of nonzero multiply-adds.
pub(crate) fn apply(a: &DMatrix<f64>, m: usize, zeta: usize, seed: u64) -> (DMatrix<f64>, u64) {
    assert!(m <= u32::MAX as usize, "sketch size exceeds 32 bits");
    let (n, q) = a.shape();
    let val = 1.0 / (zeta as f64).sqrt();
    let mut acc = vec![0.0; m * q];
    let mut row = vec![0.0; q];
    let mut rows = Vec::with_capacity(zeta);
    let mut mark = vec![false; if zeta > 32 { m } else { 0 }];
    let mut ops = 0u64;
    for j in 0..n {
        let mut nnz = 0u64;
        for (c, r) in row.iter_mut().enumerate() {
            *r = a[(j, c)];
            nnz += (*r != 0.0) as u64;
        }
        // the column of S is drawn even for zero rows so that S does not depend on X
        let mut g = Lanes::new(Philox::new(seed, stream_id(TAG_SSE, j as u64)));
        distinct_rows(&mut g, m, zeta, &mut rows, &mut mark);
        let mut signs = 0u32;
        for (k, &t) in rows.iter().enumerate() {
            if k % 32 == 0 {
                signs = g.next();
            }
            if nnz == 0 {
                continue;
            }
            let s = if (signs >> (k % 32)) & 1 == 0 { val } else { -val };
            let dst = &mut acc[t * q..(t + 1) * q];
            for (d, &x) in dst.iter_mut().zip(&row) {
                *d += s * x;
            }
        }
        ops += zeta as u64 * nnz;
    }
    (DMatrix::from_row_slice(m, q, &acc), ops)
}

/// Scatter multiply-adds an SSE application to `a` costs: `zeta * nnz(a)`.
pub fn sse_scatter_ops(a: &DMatrix<f64>, zeta: usize) -> u64 {
    zeta as u64 * a.iter().filter(|v| **v != 0.0).count() as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn operator(n: usize, m: usize, zeta: usize, seed: u64) -> DMatrix<f64> {
        apply(&DMatrix::identity(n, n), m, zeta, seed).0
    }

    #[test]
    fn columns_have_unit_norm_and_zeta_nonzeros() {
        for zeta in [1, 2, 5, 40] {
            let s = operator(60, 45, zeta, 9);
            let sts = s.tr_mul(&s);
            for i in 0..60 {
                assert!((sts[(i, i)] - 1.0).abs() < 1e-14);
                let nz = s.column(i).iter().filter(|v| **v != 0.0).count();
                assert_eq!(nz, zeta);
                assert!(s
                    .column(i)
                    .iter()
                    .all(|v| *v == 0.0 || (v.abs() - 1.0 / (zeta as f64).sqrt()).abs() < 1e-15));
            }
        }
    }

    #[test]
    fn row_positions_roughly_uniform() {
        let m = 10;
        let mut counts = vec![0usize; m];
        for seed in 0..200 {
            let s = operator(50, m, 3, seed);
            for r in 0..m {
                counts[r] += s.row(r).iter().filter(|v| **v != 0.0).count();
            }
        }
        // expected 200 * 50 * 3 / 10 = 3000 per row
        for c in counts {
            assert!((c as f64 - 3000.0).abs() < 250.0, "{c}");
        }
    }

    #[test]
    fn scatter_ops_scale_with_sparsity() {
        let mut a = DMatrix::from_fn(100, 4, |i, j| ((i + j) % 3) as f64);
        a[(0, 0)] = 0.0;
        let (_, ops1) = apply(&a, 30, 2, 1);
        let (_, ops2) = apply(&a, 30, 4, 1);
        assert_eq!(ops1, sse_scatter_ops(&a, 2));
        assert_eq!(ops2, 2 * ops1);
    }
}
