use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal, StudentT};

use super::{IidDist, TAG_IID};
use crate::rng::{stream_id, Philox};
use rand_core::RngCore;

/// Uniform on the open interval `(0, 1)`, safe for inverse CDFs.
#[inline]
fn open_unit(g: &mut Philox) -> f64 {
    ((g.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Fill `out` with standardized draws from `dist`.
pub(crate) fn fill(dist: &IidDist, g: &mut Philox, out: &mut [f64]) {
    match dist {
        IidDist::Gaussian => out.iter_mut().for_each(|x| *x = StandardNormal.sample(g)),
        IidDist::StudentT { df } => {
            let t = StudentT::new(*df).expect("df validated");
            let scale = ((df - 2.0) / df).sqrt();
            out.iter_mut().for_each(|x| *x = scale * t.sample(g));
        }
        IidDist::SparseSign { s } => {
            let half = 0.5 / s;
            let v = s.sqrt();
            out.iter_mut().for_each(|x| {
                let u = g.uniform();
                *x = if u < half {
                    v
                } else if u < 2.0 * half {
                    -v
                } else {
                    0.0
                };
            });
        }
        IidDist::Custom { inverse_cdf, .. } => {
            out.iter_mut().for_each(|x| *x = inverse_cdf(open_unit(g)))
        }
    }
}

/// Dense `S a` with `S_ij = T_ij / sqrt(m)`. Row `i` of `S` comes from its own stream.
pub(crate) fn apply(a: &DMatrix<f64>, m: usize, dist: &IidDist, seed: u64) -> DMatrix<f64> {
    let n = a.nrows();
    // column i of `st` is row i of S, so each row is generated contiguously
    let mut st = DMatrix::<f64>::zeros(n, m);
    for (i, mut col) in st.column_iter_mut().enumerate() {
        let mut g = Philox::new(seed, stream_id(TAG_IID, i as u64));
        fill(dist, &mut g, col.as_mut_slice());
    }
    st.tr_mul(a) / (m as f64).sqrt()
}
