//! Sketched least squares: point estimates, covariance estimators and intervals.
//!
//! With `M = X~^T X~`:
//!
//! * complete sketching solves on `(X~, y~)`;
//! * partial sketching uses `M^{-1} X^T y` with the exact full-data `X^T y`.
//!
//! The scaled covariance of either estimator is `(tau / m) * Sigma_hat`,
//! where `Sigma_hat` depends on the family (see [`CovarianceKind`]).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve_ls_parts, GramFactor};
use crate::sketch::{Family, SketchOutput};
use crate::stats::{chi2_quantile, z_two_sided, Interval};

/// Relative residual norm below which the fit is treated as interpolating.
pub const ZERO_RESIDUAL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorKind {
    Complete,
    Partial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovarianceKind {
    /// `||e~||^2 M^{-1}`, complete sketching on isotropic families.
    Simple,
    /// `||X~ b||^2 M^{-1} + (alpha + 1) b b^T`, partial sketching on isotropic families.
    Partial,
    /// `m M^{-1} X~^T diag(r * r) X~ M^{-1}` for i.i.d. and subsampling sketches.
    Sandwich,
}

/// Default covariance estimator for a family and estimator.
pub fn default_covariance(family: &Family, kind: EstimatorKind) -> CovarianceKind {
    match (family.has_isotropic_form(), kind) {
        (true, EstimatorKind::Complete) => CovarianceKind::Simple,
        (true, EstimatorKind::Partial) => CovarianceKind::Partial,
        (false, _) => CovarianceKind::Sandwich,
    }
}

#[derive(Clone, Debug)]
pub struct LsInferenceResult {
    pub kind: EstimatorKind,
    pub covariance: CovarianceKind,
    pub beta_hat: DVector<f64>,
    /// Covariance estimate before the `scale` factor.
    pub sigma_hat: DMatrix<f64>,
    /// `tau / m`.
    pub scale: f64,
    pub gamma: f64,
    pub tau: f64,
    pub family: Family,
    pub level: f64,
    pub cis: Vec<Interval>,
}

impl LsInferenceResult {
    /// Interval for the linear functional `c^T beta`.
    pub fn functional_ci(&self, c: &DVector<f64>, level: f64) -> Result<Interval> {
        if c.len() != self.beta_hat.len() {
            return Err(Error::BadShape(format!(
                "functional has length {}, expected {}",
                c.len(),
                self.beta_hat.len()
            )));
        }
        let z = z_two_sided(level)?;
        let var = self.scale * (c.transpose() * &self.sigma_hat * c)[(0, 0)];
        Ok(Interval::centered(c.dot(&self.beta_hat), z * var.max(0.0).sqrt()))
    }

    /// Joint confidence ellipsoid for the whole coefficient vector.
    pub fn ellipsoid(&self, level: f64) -> Result<Ellipsoid> {
        let p = self.beta_hat.len();
        let radius2 = chi2_quantile(level, p as f64)?;
        let shape = &self.sigma_hat * self.scale;
        let precision = shape
            .clone()
            .cholesky()
            .ok_or(Error::RankDeficient { ratio: 0.0 })?
            .inverse();
        Ok(Ellipsoid {
            center: self.beta_hat.clone(),
            precision,
            radius2,
        })
    }
}

/// `{b : (b - center)^T precision (b - center) <= radius2}`.
#[derive(Clone, Debug)]
pub struct Ellipsoid {
    pub center: DVector<f64>,
    pub precision: DMatrix<f64>,
    pub radius2: f64,
}

impl Ellipsoid {
    pub fn contains(&self, b: &DVector<f64>) -> bool {
        let d = b - &self.center;
        (d.transpose() * &self.precision * &d)[(0, 0)] <= self.radius2
    }
}

fn response(sk: &SketchOutput) -> Result<&DVector<f64>> {
    sk.ys
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("sketch carries no response vector".into()))
}

/// Complete sketching estimator `(X~^T X~)^{-1} X~^T y~`.
pub fn sketch_and_solve(sk: &SketchOutput) -> Result<DVector<f64>> {
    solve_ls_parts(&sk.xs, response(sk)?)
}

/// Partial sketching estimator `(X~^T X~)^{-1} X^T y`, with `xty` from the full data.
pub fn partial_sketch_solve(sk: &SketchOutput, xty: &DVector<f64>) -> Result<DVector<f64>> {
    if xty.len() != sk.p() {
        return Err(Error::BadShape(format!("X^T y has length {}, expected {}", xty.len(), sk.p())));
    }
    Ok(GramFactor::new(&sk.xs)?.solve(xty))
}

fn require_isotropic(sk: &SketchOutput, what: &'static str) -> Result<f64> {
    sk.alpha.ok_or_else(|| Error::UnsupportedFamily {
        family: sk.family.label(),
        what,
    })
}

/// `||e~||^2 (X~^T X~)^{-1}` with `e~ = y~ - X~ beta_hat`.
pub fn ls_cov_simple(sk: &SketchOutput, beta_hat: &DVector<f64>) -> Result<DMatrix<f64>> {
    require_isotropic(sk, "the simple covariance estimator")?;
    let ys = response(sk)?;
    let resid = ys - &sk.xs * beta_hat;
    let rn = resid.norm();
    if rn <= ZERO_RESIDUAL_TOL * ys.norm() {
        return Err(Error::ZeroResidual);
    }
    Ok(GramFactor::new(&sk.xs)?.inverse() * (rn * rn))
}

/// `||X~ b||^2 (X~^T X~)^{-1} + (alpha + 1) b b^T` for the partial estimator `b`.
pub fn ls_cov_partial(sk: &SketchOutput, beta_p: &DVector<f64>) -> Result<DMatrix<f64>> {
    let alpha = require_isotropic(sk, "the partial-sketching covariance estimator")?;
    if beta_p.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateSignal);
    }
    let fitted = (&sk.xs * beta_p).norm_squared();
    if fitted == 0.0 {
        return Err(Error::DegenerateSignal);
    }
    Ok(GramFactor::new(&sk.xs)?.inverse() * fitted + beta_p * beta_p.transpose() * (alpha + 1.0))
}

/// Sandwich estimator `m M^{-1} X~^T diag(r * r) X~ M^{-1}`.
///
/// `r` is the sketched residual `y~ - X~ b` for complete sketching and the
/// sketched fit `X~ b` for partial sketching.
pub fn ls_cov_sandwich(sk: &SketchOutput, r: &DVector<f64>, kind: EstimatorKind) -> Result<DMatrix<f64>> {
    match &sk.family {
        Family::Iid(_) | Family::UniformSubsample => {}
        other => {
            return Err(Error::UnsupportedFamily {
                family: other.label(),
                what: "the sandwich covariance estimator",
            })
        }
    }
    if r.len() != sk.xs.nrows() {
        return Err(Error::BadShape(format!(
            "residual has length {}, expected {}",
            r.len(),
            sk.xs.nrows()
        )));
    }
    let rn = r.norm();
    match kind {
        EstimatorKind::Complete => {
            let yn = sk.ys.as_ref().map_or(0.0, |y| y.norm());
            if rn <= ZERO_RESIDUAL_TOL * yn || rn == 0.0 {
                return Err(Error::ZeroResidual);
            }
        }
        EstimatorKind::Partial if rn == 0.0 => return Err(Error::DegenerateSignal),
        EstimatorKind::Partial => {}
    }
    let minv = GramFactor::new(&sk.xs)?.inverse();
    let mut w = sk.xs.clone();
    for (i, mut row) in w.row_iter_mut().enumerate() {
        row *= r[i].abs();
    }
    let meat = w.tr_mul(&w);
    let s = &minv * meat * &minv * sk.m_nominal as f64;
    Ok((&s + s.transpose()) * 0.5)
}

/// Coordinate-wise intervals `beta_hat_j +- z sqrt(scale * Sigma_jj)`.
pub fn ls_confidence_intervals(res: &LsInferenceResult, level: f64) -> Result<Vec<Interval>> {
    let z = z_two_sided(level)?;
    Ok((0..res.beta_hat.len())
        .map(|j| Interval::centered(res.beta_hat[j], z * (res.scale * res.sigma_hat[(j, j)]).sqrt()))
        .collect())
}

/// Point estimate, covariance and intervals in one call.
///
/// `xty` is required for partial sketching. `covariance = None` picks
/// [`default_covariance`].
pub fn ls_inference(
    sk: &SketchOutput,
    kind: EstimatorKind,
    xty: Option<&DVector<f64>>,
    covariance: Option<CovarianceKind>,
    level: f64,
) -> Result<LsInferenceResult> {
    z_two_sided(level)?;
    let covariance = covariance.unwrap_or_else(|| default_covariance(&sk.family, kind));
    let beta_hat = match kind {
        EstimatorKind::Complete => sketch_and_solve(sk)?,
        EstimatorKind::Partial => {
            let xty = xty.ok_or(Error::NeedsFullData {
                what: "partial sketching (X^T y)",
            })?;
            partial_sketch_solve(sk, xty)?
        }
    };
    let sigma_hat = match (covariance, kind) {
        (CovarianceKind::Simple, EstimatorKind::Complete) => ls_cov_simple(sk, &beta_hat)?,
        (CovarianceKind::Partial, EstimatorKind::Partial) => ls_cov_partial(sk, &beta_hat)?,
        (CovarianceKind::Sandwich, EstimatorKind::Complete) => {
            let r = response(sk)? - &sk.xs * &beta_hat;
            ls_cov_sandwich(sk, &r, kind)?
        }
        (CovarianceKind::Sandwich, EstimatorKind::Partial) => {
            let r = &sk.xs * &beta_hat;
            ls_cov_sandwich(sk, &r, kind)?
        }
        (cov, kind) => {
            return Err(Error::InvalidArgument(format!(
                "covariance {cov:?} does not apply to the {kind:?} estimator"
            )))
        }
    };
    let mut res = LsInferenceResult {
        kind,
        covariance,
        beta_hat,
        sigma_hat,
        scale: sk.tau / sk.m_nominal as f64,
        gamma: sk.gamma,
        tau: sk.tau,
        family: sk.family.clone(),
        level,
        cis: Vec::new(),
    };
    res.cis = ls_confidence_intervals(&res, level)?;
    Ok(res)
}
