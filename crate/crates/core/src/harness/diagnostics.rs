use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{solve_ls_parts, thin_svd};

/// Heuristic thresholds. They are advisory: the limit theorems are
/// asymptotic and none of these numbers comes with a guarantee.
pub const LEVERAGE_RATIO: f64 = 5.0;
/// A uniformly random orthonormal `U` has `n ||vec U||_4^4 / p` close to 3.
pub const L4_RATIO: f64 = 9.0;
/// `sqrt(n) max_i |r_i| / ||r||` is about `sqrt(2 log n)` for Gaussian-like vectors.
pub const SPIKE_RATIO: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticFlag {
    pub condition: String,
    /// Families whose limit theory relies on the condition.
    pub affects: Vec<String>,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelocalizationReport {
    pub n: usize,
    pub p: usize,
    /// `max_i ||U_{i:}||`.
    pub max_leverage: f64,
    /// `||vec(U)||_4^4`.
    pub l4_mass: f64,
    /// `max_i |e_i| / ||e||` for the least-squares residual.
    pub max_residual: Option<f64>,
    /// `max_i |f_i| / ||f||` for the fitted values.
    pub max_fitted: Option<f64>,
    pub flags: Vec<DiagnosticFlag>,
}

fn max_normalized(v: &DVector<f64>) -> Option<f64> {
    let norm = v.norm();
    (norm > 0.0).then(|| v.amax() / norm)
}

/// Delocalization summaries of `X` and, when given, of the fit of `y` on `X`.
pub fn delocalization_report(x: &DMatrix<f64>, y: Option<&DVector<f64>>) -> Result<DelocalizationReport> {
    let (n, p) = x.shape();
    let u = thin_svd(x)?.u;
    let max_leverage = u.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
    let l4_mass: f64 = u.iter().map(|v| v.powi(4)).sum();
    let (max_residual, max_fitted) = match y {
        Some(y) => {
            let beta = solve_ls_parts(x, y)?;
            let fitted = x * beta;
            (max_normalized(&(y - &fitted)), max_normalized(&fitted))
        }
        None => (None, None),
    };
    let (nf, pf) = (n as f64, p as f64);
    let root_n = nf.sqrt();
    let mut flags = Vec::new();
    let mut flag = |condition: &str, affects: &[&str], value: f64, threshold: f64| {
        if value > threshold {
            flags.push(DiagnosticFlag {
                condition: condition.into(),
                affects: affects.iter().map(|s| s.to_string()).collect(),
                value,
                threshold,
            });
        }
    };
    flag(
        "max-leverage",
        &["srht", "subsample"],
        max_leverage,
        (LEVERAGE_RATIO * pf / nf).sqrt(),
    );
    flag("l4-mass", &["sse", "subsample", "iid-nongaussian"], l4_mass * nf / pf, L4_RATIO);
    if let Some(r) = max_residual {
        flag("max-residual", &["srht", "subsample"], r * root_n, SPIKE_RATIO);
    }
    if let Some(f) = max_fitted {
        flag("max-fitted", &["srht", "subsample"], f * root_n, SPIKE_RATIO);
    }
    Ok(DelocalizationReport {
        n,
        p,
        max_leverage,
        l4_mass,
        max_residual,
        max_fitted,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_case1, gen_case2};

    #[test]
    fn coordinate_design_is_maximally_localized() {
        let n = 64;
        let p = 3;
        let x = DMatrix::from_fn(n, p, |i, j| (i == j) as u8 as f64);
        let r = delocalization_report(&x, None).unwrap();
        assert!((r.max_leverage - 1.0).abs() < 1e-12);
        assert!(r.flags.iter().any(|f| f.condition == "max-leverage"));
    }

    #[test]
    fn haar_design_is_clean() {
        let d = gen_case1(2048, 15, 11).unwrap();
        let r = delocalization_report(d.x(), d.y()).unwrap();
        // Haar rows: ||U_i||^2 is about Beta(p/2, (n-p)/2), far below 0.25^2
        assert!(r.max_leverage < 0.25, "{}", r.max_leverage);
        assert!(r.flags.is_empty(), "{:?}", r.flags);
        // n ||vec U||_4^4 / p is 3 n / (n + 2) in expectation
        assert!((r.l4_mass * 2048.0 / 15.0 - 3.0).abs() < 0.3);
    }

    #[test]
    fn heavy_tailed_design_raises_leverage_flag_in_most_seeds() {
        let seeds = 0..9u64;
        let raised = seeds
            .clone()
            .filter(|&s| {
                let d = gen_case2(2048, 15, s).unwrap();
                let r = delocalization_report(d.x(), d.y()).unwrap();
                r.flags.iter().any(|f| f.condition == "max-leverage")
            })
            .count();
        assert!(raised * 2 > seeds.count(), "{raised}");
    }
}
