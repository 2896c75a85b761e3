//! Sketched PCA with eigenvalue and eigenvector confidence intervals.
//!
//! Point estimates are the eigenpairs of `X~^T X~`. Interval widths come from
//! the covariance structure `G` of the vectorized quadratic form
//! `U^T S^T S U - I`, indexed so that pair `(a, b)` maps to `a + b p`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{orthonormality_defect, relative_gap, sym_eig, EigenDecomposition, GramFactor};
use crate::sketch::{Family, SketchOutput, LOW_GAMMA_WARNING};
use crate::stats::{z_two_sided, Interval};

/// Minimum relative eigengap for the interval routines.
pub const DEFAULT_MIN_GAP: f64 = 1e-8;
/// Orthonormality tolerance for the full-data `U` passed to oracle routines.
pub const ORTHONORMAL_TOL: f64 = 1e-8;
/// `c^T Delta c` below this fraction of `tr(Delta)` counts as a vanishing variance.
pub const DEGENERATE_DIRECTION_TOL: f64 = 1e-8;

/// Covariance structure `G` of the vectorized quadratic form.
#[derive(Clone, Debug, PartialEq)]
pub enum GForm {
    /// `I + P + alpha Q`, with `P` the commutation matrix and `Q = vec(I) vec(I)^T`.
    Isotropic(f64),
    /// `I + P + Gamma` for a kurtosis correction `Gamma`.
    Kurtosis(DMatrix<f64>),
    /// Any absolutely symmetric `p^2 x p^2` matrix.
    Explicit(DMatrix<f64>),
}

#[inline]
fn vec_index(a: usize, b: usize, p: usize) -> usize {
    a + b * p
}

impl GForm {
    /// `G_{(a b), (c d)}`.
    pub fn entry(&self, a: usize, b: usize, c: usize, d: usize, p: usize) -> f64 {
        let identity = ((a == c) & (b == d)) as u8 as f64;
        let commutation = ((a == d) & (b == c)) as u8 as f64;
        match self {
            GForm::Isotropic(alpha) => {
                identity + commutation + alpha * ((a == b) & (c == d)) as u8 as f64
            }
            GForm::Kurtosis(gamma) => {
                identity + commutation + gamma[(vec_index(a, b, p), vec_index(c, d, p))]
            }
            GForm::Explicit(g) => g[(vec_index(a, b, p), vec_index(c, d, p))],
        }
    }

    /// Dense `p^2 x p^2` matrix.
    pub fn to_dense(&self, p: usize) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(p * p, p * p);
        for b in 0..p {
            for a in 0..p {
                for d in 0..p {
                    for c in 0..p {
                        g[(vec_index(a, b, p), vec_index(c, d, p))] = self.entry(a, b, c, d, p);
                    }
                }
            }
        }
        g
    }
}

fn check_gap(lambdas: &[f64], i: usize, min_gap: f64) -> Result<()> {
    if lambdas.len() > 1 {
        let gap = relative_gap(lambdas, i);
        if !(gap > min_gap) {
            return Err(Error::EigengapTooSmall { index: i, gap });
        }
    }
    Ok(())
}

/// The eigenvector covariance functional
/// `Delta_i = sum_{k,l != i} lambda_i sqrt(lambda_k lambda_l) / ((lambda_i - lambda_k)(lambda_i - lambda_l)) G_{(ik),(il)} v_k v_l^T`.
pub fn delta_i(lambdas: &[f64], vectors: &DMatrix<f64>, g: &GForm, i: usize) -> Result<DMatrix<f64>> {
    let p = lambdas.len();
    if vectors.shape() != (p, p) || i >= p {
        return Err(Error::BadShape(format!(
            "delta_i needs p = {p} eigenpairs and index < p, got vectors {:?} and i = {i}",
            vectors.shape()
        )));
    }
    check_gap(lambdas, i, DEFAULT_MIN_GAP)?;
    let li = lambdas[i];
    let weight = |k: usize| (li * lambdas[k]).abs().sqrt() * li.signum() / (li - lambdas[k]);
    let mut coef = DMatrix::<f64>::zeros(p, p);
    match g {
        GForm::Isotropic(_) => {
            // G_{(ik),(il)} = delta_kl off the diagonal block
            for k in (0..p).filter(|&k| k != i) {
                let d = li - lambdas[k];
                coef[(k, k)] = li * lambdas[k] / (d * d);
            }
        }
        _ => {
            for l in (0..p).filter(|&l| l != i) {
                let wl = weight(l);
                for k in (0..p).filter(|&k| k != i) {
                    coef[(k, l)] = weight(k) * wl * g.entry(i, k, i, l, p);
                }
            }
        }
    }
    let delta = vectors * coef * vectors.transpose();
    Ok((&delta + delta.transpose()) * 0.5)
}

/// `W` with rows `vec(u_h u_h^T)`, so that `W^T W = sum_h (u_h u_h^T) (x) (u_h u_h^T)`.
fn fourth_moment_rows(u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let deviation = orthonormality_defect(u);
    if !(deviation <= ORTHONORMAL_TOL) {
        return Err(Error::NotOrthonormal { deviation });
    }
    let (n, p) = u.shape();
    let mut w = DMatrix::<f64>::zeros(n, p * p);
    for b in 0..p {
        for a in 0..p {
            let col = vec_index(a, b, p);
            for h in 0..n {
                w[(h, col)] = u[(h, a)] * u[(h, b)];
            }
        }
    }
    Ok(w)
}

/// Kurtosis correction `Gamma_{(k1 k2),(k3 k4)} = (kappa - 3) sum_h U_{h k1} U_{h k2} U_{h k3} U_{h k4}`.
pub fn gamma_kurtosis(u: &DMatrix<f64>, kurtosis: f64) -> Result<DMatrix<f64>> {
    let w = fourth_moment_rows(u)?;
    Ok(w.tr_mul(&w) * (kurtosis - 3.0))
}

/// `G_n = n sum_h (u_h u_h^T) (x) (u_h u_h^T)` for uniform subsampling.
pub fn subsample_g(u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let w = fourth_moment_rows(u)?;
    Ok(w.tr_mul(&w) * u.nrows() as f64)
}

/// Full-data `G` for the families whose intervals need it. `None` for
/// families with an isotropic form.
pub fn full_data_gform(family: &Family, u: &DMatrix<f64>) -> Result<Option<GForm>> {
    Ok(match family {
        Family::UniformSubsample => Some(GForm::Explicit(subsample_g(u)?)),
        Family::Iid(d) if !d.is_gaussian() => Some(GForm::Kurtosis(gamma_kurtosis(u, d.kurtosis())?)),
        _ => None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarianceMode {
    /// Closed-form family constants.
    Constant,
    /// Subsampling, eigenvalues only, factor estimated from the sketch.
    SubsampleSketchOnly,
    /// Subsampling with the full-data `G_n`.
    SubsampleOracle,
    /// Non-Gaussian i.i.d. with the full-data kurtosis correction.
    IidKurtosis,
    /// Non-Gaussian i.i.d. without full data; no intervals available.
    Unavailable,
}

#[derive(Clone, Debug)]
pub struct PcaInferenceResult {
    pub lambdas_hat: DVector<f64>,
    pub vectors_hat: DMatrix<f64>,
    pub family: Family,
    pub m: usize,
    pub n: usize,
    pub gamma: f64,
    pub tau: f64,
    pub variance_mode: VarianceMode,
    pub gform: Option<GForm>,
    pub level: f64,
    pub min_gap: f64,
    /// Sketched left singular vectors `X~ V^ Lambda^{-1/2}`, kept for the
    /// sketch-only subsampling factor.
    u_tilde: Option<DMatrix<f64>>,
    pub warnings: Vec<String>,
}

/// Eigendecomposition of `X~^T X~`.
pub fn sketched_pca(sk: &SketchOutput) -> Result<EigenDecomposition> {
    GramFactor::new(&sk.xs)?;
    sym_eig(&sk.xs.tr_mul(&sk.xs))
}

/// Point estimates plus everything the interval routines need.
///
/// `oracle` is the full-data `G` from [`full_data_gform`]; it is required
/// for subsampling eigenvectors and for non-Gaussian i.i.d. sketches.
pub fn pca_inference(sk: &SketchOutput, oracle: Option<GForm>, level: f64) -> Result<PcaInferenceResult> {
    z_two_sided(level)?;
    let eig = sketched_pca(sk)?;
    let consts = sk.constants();
    let mut warnings = Vec::new();
    let mut u_tilde = None;
    let (variance_mode, gform) = match (&sk.family, consts.alpha) {
        (_, Some(alpha)) => (VarianceMode::Constant, Some(GForm::Isotropic(alpha))),
        (Family::UniformSubsample, None) => match oracle {
            Some(g) => (VarianceMode::SubsampleOracle, Some(g)),
            None => {
                if sk.gamma < LOW_GAMMA_WARNING {
                    warnings.push(format!(
                        "sketch-only subsampling variance is unreliable for small m/n (gamma = {:.4} < {LOW_GAMMA_WARNING})",
                        sk.gamma
                    ));
                }
                let mut ut = &sk.xs * &eig.vectors;
                for (j, mut col) in ut.column_iter_mut().enumerate() {
                    col /= eig.lambdas[j].sqrt();
                }
                u_tilde = Some(ut);
                (VarianceMode::SubsampleSketchOnly, None)
            }
        },
        (_, None) => match oracle {
            Some(g) => (VarianceMode::IidKurtosis, Some(g)),
            None => (VarianceMode::Unavailable, None),
        },
    };
    Ok(PcaInferenceResult {
        lambdas_hat: eig.lambdas,
        vectors_hat: eig.vectors,
        family: sk.family.clone(),
        m: sk.m_nominal,
        n: sk.n,
        gamma: sk.gamma,
        tau: sk.tau,
        variance_mode,
        gform,
        level,
        min_gap: DEFAULT_MIN_GAP,
        u_tilde,
        warnings,
    })
}

impl PcaInferenceResult {
    pub fn p(&self) -> usize {
        self.lambdas_hat.len()
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.p() {
            return Err(Error::InvalidArgument(format!(
                "eigen index {} out of range 1..={}",
                i + 1,
                self.p()
            )));
        }
        check_gap(self.lambdas_hat.as_slice(), i, self.min_gap)
    }

    /// Asymptotic variance of the standardized eigenvalue statistic
    /// `sqrt(m) (Lambda^ - Lambda) / Lambda^`.
    pub fn eigval_factor(&self, i: usize) -> Result<f64> {
        let p = self.p();
        match (&self.variance_mode, &self.gform) {
            (VarianceMode::SubsampleSketchOnly, _) => {
                let ut = self.u_tilde.as_ref().expect("stored for sketch-only mode");
                let s4: f64 = ut.column(i).iter().map(|x| x.powi(4)).sum();
                Ok(self.tau * self.m as f64 * s4)
            }
            (_, Some(g)) => Ok(self.tau * g.entry(i, i, i, i, p)),
            (_, None) => Err(Error::NeedsFullData {
                what: "eigenvalue intervals for non-Gaussian i.i.d. sketches",
            }),
        }
    }

    /// Interval `Lambda^_i (1 -+ z sqrt(factor / m))` for the `i`-th (0-based) eigenvalue.
    pub fn eigenvalue_ci(&self, i: usize, level: f64) -> Result<Interval> {
        let z = z_two_sided(level)?;
        self.check_index(i)?;
        let half = z * (self.eigval_factor(i)? / self.m as f64).sqrt();
        let l = self.lambdas_hat[i];
        Ok(Interval {
            lower: l * (1.0 - half),
            upper: l * (1.0 + half),
        })
    }

    /// Plug-in `Delta^_i`.
    pub fn delta_hat(&self, i: usize) -> Result<DMatrix<f64>> {
        let g = self.gform.as_ref().ok_or(Error::NeedsFullData {
            what: match self.variance_mode {
                VarianceMode::SubsampleSketchOnly => "eigenvector intervals under subsampling",
                _ => "eigenvector intervals for non-Gaussian i.i.d. sketches",
            },
        })?;
        delta_i(self.lambdas_hat.as_slice(), &self.vectors_hat, g, i)
    }

    /// Interval for `c^T v_i`: `c^T v^_i +- z sqrt(tau / m) sqrt(c^T Delta^_i c)`.
    pub fn eigenvector_ci(&self, i: usize, c: &DVector<f64>, level: f64) -> Result<Interval> {
        let z = z_two_sided(level)?;
        self.check_index(i)?;
        if c.len() != self.p() {
            return Err(Error::BadShape(format!("direction has length {}, expected {}", c.len(), self.p())));
        }
        let delta = self.delta_hat(i)?;
        let q = (c.transpose() * &delta * c)[(0, 0)];
        if !(q > DEGENERATE_DIRECTION_TOL * delta.trace()) {
            return Err(Error::DegenerateDirection { index: i });
        }
        let center = c.dot(&self.vectors_hat.column(i));
        Ok(Interval::centered(center, z * (self.tau / self.m as f64).sqrt() * q.sqrt()))
    }
}
