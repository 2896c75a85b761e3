use crate::error::{Error, Result};

/// Orthonormal Walsh–Hadamard transform `H_l v` of a length-`2^l` vector.
///
/// The transform is symmetric and orthogonal, hence an involution.
pub fn fwht(v: &[f64]) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    fwht_in_place(&mut out)?;
    Ok(out)
}

pub fn fwht_in_place(v: &mut [f64]) -> Result<()> {
    let len = v.len();
    if !len.is_power_of_two() {
        return Err(Error::LengthNotPowerOfTwo { len });
    }
    fwht_rows(v, len, 1);
    Ok(())
}

/// Transform the `rows x width` row-major buffer along its rows: row `i` of the
/// output is `sum_j H[i, j] * row_j`. `rows` must be a power of two.
///
/// Butterflies are unnormalized and a single `2^{-l/2}` scale is applied at the end.
pub(crate) fn fwht_rows(buf: &mut [f64], rows: usize, width: usize) {
    debug_assert!(rows.is_power_of_two());
    debug_assert_eq!(buf.len(), rows * width);
    let mut h = 1;
    while h < rows {
        for block in buf.chunks_exact_mut(2 * h * width) {
            let (lo, hi) = block.split_at_mut(h * width);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let x = *a;
                let y = *b;
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
    if rows > 1 {
        let scale = 1.0 / (rows as f64).sqrt();
        buf.iter_mut().for_each(|x| *x *= scale);
    }
}
