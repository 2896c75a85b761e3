//! Sketching operators `S` (m x n) and the per-family constants inference needs.
//!
//! Every family is applied to the augmented matrix `[X y]` so the design and
//! the response always see the same draw of `S`.

mod fwht;
mod haar;
mod iid;
mod sse;
mod srht;
mod subsample;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::DataMatrix;

pub use fwht::{fwht, fwht_in_place};
pub use haar::haar_explicit_operator;
pub use sse::sse_scatter_ops;

/// Sketch sizes below this fraction of `n` trigger the subsample accuracy warning.
pub const LOW_GAMMA_WARNING: f64 = 0.05;
/// Minimum kurtosis accepted for i.i.d. sketches; Rademacher-like laws are refused.
pub const MIN_KURTOSIS: f64 = 1.05;

// RNG stream namespaces, one per independent component of a sketch.
pub(crate) const TAG_SRHT_SIGN: u16 = 1;
pub(crate) const TAG_SRHT_SELECT: u16 = 2;
pub(crate) const TAG_SSE: u16 = 3;
pub(crate) const TAG_IID: u16 = 4;
pub(crate) const TAG_HAAR: u16 = 5;
pub(crate) const TAG_SUBSAMPLE: u16 = 6;

/// Inverse-CDF sampler for a user-supplied standardized distribution.
pub type InverseCdf = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Entry law for i.i.d. sketches. All laws have mean 0 and variance 1.
#[derive(Clone)]
pub enum IidDist {
    Gaussian,
    /// Student t with `df > 4` degrees of freedom, rescaled to unit variance.
    StudentT { df: f64 },
    /// `+-sqrt(s)` with probability `1/(2s)` each, else 0. Kurtosis `s`.
    SparseSign { s: f64 },
    Custom {
        name: String,
        inverse_cdf: InverseCdf,
        kurtosis: f64,
    },
}

impl IidDist {
    pub fn kurtosis(&self) -> f64 {
        match self {
            IidDist::Gaussian => 3.0,
            IidDist::StudentT { df } => 3.0 + 6.0 / (df - 4.0),
            IidDist::SparseSign { s } => *s,
            IidDist::Custom { kurtosis, .. } => *kurtosis,
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, IidDist::Gaussian)
    }

    fn validate(&self) -> Result<()> {
        if let IidDist::StudentT { df } = self {
            if !(*df > 4.0) {
                return Err(Error::InvalidArgument(format!(
                    "t sketch needs df > 4 for a finite kurtosis, got {df}"
                )));
            }
        }
        let k = self.kurtosis();
        if !(k > MIN_KURTOSIS) {
            return Err(Error::KurtosisTooLow {
                kurtosis: k,
                min: MIN_KURTOSIS,
            });
        }
        Ok(())
    }
}

impl fmt::Debug for IidDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IidDist::Gaussian => write!(f, "Gaussian"),
            IidDist::StudentT { df } => write!(f, "StudentT {{ df: {df} }}"),
            IidDist::SparseSign { s } => write!(f, "SparseSign {{ s: {s} }}"),
            IidDist::Custom { name, kurtosis, .. } => {
                write!(f, "Custom {{ name: {name:?}, kurtosis: {kurtosis} }}")
            }
        }
    }
}

impl PartialEq for IidDist {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (IidDist::Gaussian, IidDist::Gaussian) => true,
            (IidDist::StudentT { df: a }, IidDist::StudentT { df: b }) => a == b,
            (IidDist::SparseSign { s: a }, IidDist::SparseSign { s: b }) => a == b,
            (
                IidDist::Custom { name: a, kurtosis: ka, .. },
                IidDist::Custom { name: b, kurtosis: kb, .. },
            ) => a == b && ka == kb,
            _ => false,
        }
    }
}

/// How a Haar sketch is realized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HaarMode {
    /// Build `S` from the SVD of an `m x n` Gaussian matrix. `O(m^2 n)`.
    Explicit,
    /// Draw `S [X y]` directly from its law. Uses that `S Q` is the top `m`
    /// rows of a uniformly random `n x r` orthonormal frame for any fixed
    /// orthonormal `Q`. `O(n r^2)`.
    Reduced,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    Srht,
    /// Sparse sign embedding with `sparsity` nonzeros per column. CountSketch is `sparsity = 1`.
    Sse { sparsity: usize },
    Iid(IidDist),
    Haar(HaarMode),
    UniformSubsample,
}

pub const FAMILY_NAMES: &[&str] = &[
    "srht",
    "countsketch",
    "sse:<zeta>",
    "iid",
    "iid-gaussian",
    "iid-t:<df>",
    "iid-sparse:<s>",
    "haar",
    "haar-explicit",
    "subsample",
];

impl Family {
    pub const COUNTSKETCH: Family = Family::Sse { sparsity: 1 };

    /// Parse a family label such as `srht`, `sse:8` or `iid-t:6`.
    pub fn parse(label: &str) -> Result<Family> {
        let label = label.trim();
        let (head, arg) = match label.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (label, None),
        };
        let bad = || {
            Error::InvalidArgument(format!(
                "unknown sketch family {label:?}; allowed: {}",
                FAMILY_NAMES.join(", ")
            ))
        };
        let num = |a: Option<&str>| -> Result<f64> {
            a.and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(bad)
        };
        let fam = match (head.to_ascii_lowercase().as_str(), arg) {
            ("srht", None) => Family::Srht,
            ("countsketch", None) => Family::COUNTSKETCH,
            ("sse", Some(a)) => Family::Sse {
                sparsity: a.parse().map_err(|_| bad())?,
            },
            ("iid" | "iid-gaussian", None) => Family::Iid(IidDist::Gaussian),
            ("iid-t", a) => Family::Iid(IidDist::StudentT { df: num(a)? }),
            ("iid-sparse", a) => Family::Iid(IidDist::SparseSign { s: num(a)? }),
            ("haar", None) => Family::Haar(HaarMode::Reduced),
            ("haar-explicit", None) => Family::Haar(HaarMode::Explicit),
            ("subsample" | "uniform-subsample", None) => Family::UniformSubsample,
            _ => return Err(bad()),
        };
        Ok(fam)
    }

    pub fn label(&self) -> String {
        match self {
            Family::Srht => "srht".into(),
            Family::Sse { sparsity: 1 } => "countsketch".into(),
            Family::Sse { sparsity } => format!("sse:{sparsity}"),
            Family::Iid(IidDist::Gaussian) => "iid-gaussian".into(),
            Family::Iid(IidDist::StudentT { df }) => format!("iid-t:{df}"),
            Family::Iid(IidDist::SparseSign { s }) => format!("iid-sparse:{s}"),
            Family::Iid(IidDist::Custom { name, .. }) => format!("iid-custom:{name}"),
            Family::Haar(HaarMode::Reduced) => "haar".into(),
            Family::Haar(HaarMode::Explicit) => "haar-explicit".into(),
            Family::UniformSubsample => "subsample".into(),
        }
    }

    /// Whether the family has a closed-form (non sandwich) inference route.
    pub fn has_isotropic_form(&self) -> bool {
        method_constants(self, 1, 2).alpha.is_some()
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SketchSpec {
    pub family: Family,
    pub m: usize,
    pub seed: u64,
}

impl SketchSpec {
    pub fn new(family: Family, m: usize, seed: u64) -> Self {
        Self { family, m, seed }
    }
}

/// Family constants: `tau`, the partial-sketching `alpha`, and the
/// asymptotic variance factors of the standardized eigenvalue and
/// eigenvector statistics. `None` means the quantity is data dependent or
/// the family only supports sandwich inference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MethodConstants {
    pub tau: f64,
    pub alpha: Option<f64>,
    pub eigval_factor: Option<f64>,
    pub eigvec_factor: Option<f64>,
}

pub fn method_constants(family: &Family, m: usize, n: usize) -> MethodConstants {
    let gamma = m as f64 / n as f64;
    let shrink = 1.0 - gamma;
    let (tau, alpha, eigval, eigvec) = match family {
        Family::Srht => (shrink, Some(1.0), Some(3.0 * shrink), Some(shrink)),
        Family::Sse { .. } => (1.0, Some(0.0), Some(2.0), Some(1.0)),
        Family::Iid(d) if d.is_gaussian() => (1.0, Some(0.0), Some(2.0), Some(1.0)),
        Family::Iid(_) => (1.0, None, None, None),
        Family::Haar(_) => (shrink, Some(0.0), Some(2.0 * shrink), Some(shrink)),
        Family::UniformSubsample => (shrink, None, None, None),
    };
    MethodConstants {
        tau,
        alpha,
        eigval_factor: eigval,
        eigvec_factor: eigvec,
    }
}

/// Result of applying a sketch to `(X, y)`.
#[derive(Clone, Debug)]
pub struct SketchOutput {
    /// Sketched design `S X`, `m_eff x p`.
    pub xs: DMatrix<f64>,
    /// Sketched response `S y`.
    pub ys: Option<DVector<f64>>,
    pub m_nominal: usize,
    /// Realized row count. Random for SRHT and subsampling.
    pub m_eff: usize,
    pub n: usize,
    pub gamma: f64,
    pub tau: f64,
    pub alpha: Option<f64>,
    /// Entry kurtosis, for i.i.d. sketches.
    pub kurtosis: Option<f64>,
    pub family: Family,
}

impl SketchOutput {
    /// Assemble an output from an already-sketched matrix. Useful for
    /// feeding an identity "sketch" (`xs = X`) through the inference code.
    pub fn from_parts(
        xs: DMatrix<f64>,
        ys: Option<DVector<f64>>,
        family: Family,
        m_nominal: usize,
        n: usize,
    ) -> Result<Self> {
        if let Some(y) = &ys {
            if y.len() != xs.nrows() {
                return Err(Error::BadShape(format!(
                    "sketched response has length {}, expected {}",
                    y.len(),
                    xs.nrows()
                )));
            }
        }
        if m_nominal == 0 || m_nominal >= n {
            return Err(Error::SketchTooLarge { m: m_nominal, n });
        }
        let c = method_constants(&family, m_nominal, n);
        let kurtosis = match &family {
            Family::Iid(d) => Some(d.kurtosis()),
            _ => None,
        };
        Ok(Self {
            m_eff: xs.nrows(),
            xs,
            ys,
            m_nominal,
            n,
            gamma: m_nominal as f64 / n as f64,
            tau: c.tau,
            alpha: c.alpha,
            kurtosis,
            family,
        })
    }

    pub fn p(&self) -> usize {
        self.xs.ncols()
    }

    pub fn constants(&self) -> MethodConstants {
        method_constants(&self.family, self.m_nominal, self.n)
    }
}

pub(crate) fn check_sizes(family: &Family, m: usize, n: usize, p: usize) -> Result<()> {
    if m < p {
        return Err(Error::SketchTooSmall { m, p });
    }
    if m >= n {
        return Err(Error::SketchTooLarge { m, n });
    }
    match family {
        Family::Sse { sparsity } if *sparsity == 0 || *sparsity > m => Err(Error::BadSparsity {
            sparsity: *sparsity,
            m,
        }),
        Family::Iid(d) => d.validate(),
        _ => Ok(()),
    }
}

/// `[X y]` as one `n x q` matrix.
fn augmented(data: &DataMatrix) -> DMatrix<f64> {
    match data.y() {
        Some(y) => {
            let (n, p) = (data.n(), data.p());
            let mut a = data.x().clone().resize_horizontally(p + 1, 0.0);
            a.set_column(p, y);
            debug_assert_eq!(a.nrows(), n);
            a
        }
        None => data.x().clone(),
    }
}

/// Sketch an arbitrary `n x q` matrix with `spec`. Size checks use `q` as `p`.
pub fn apply_matrix(spec: &SketchSpec, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, q) = a.shape();
    check_sizes(&spec.family, spec.m, n, q)?;
    sketch_matrix(spec, a)
}

fn sketch_matrix(spec: &SketchSpec, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (m, seed) = (spec.m, spec.seed);
    Ok(match &spec.family {
        Family::Srht => srht::apply(a, m, seed),
        Family::Sse { sparsity } => sse::apply(a, m, *sparsity, seed).0,
        Family::Iid(dist) => iid::apply(a, m, dist, seed),
        Family::Haar(HaarMode::Explicit) => haar::apply_explicit(a, m, seed),
        Family::Haar(HaarMode::Reduced) => haar::apply_reduced(a, m, seed),
        Family::UniformSubsample => subsample::apply(a, m, seed),
    })
}

/// Apply the sketch in `spec` to `(X, y)`.
pub fn apply(spec: &SketchSpec, data: &DataMatrix) -> Result<SketchOutput> {
    let (n, p) = (data.n(), data.p());
    check_sizes(&spec.family, spec.m, n, p)?;
    let sa = sketch_matrix(spec, &augmented(data))?;
    let m_eff = sa.nrows();
    if spec.family == Family::UniformSubsample && m_eff < p {
        return Err(Error::DegenerateSample { m_eff, p });
    }
    let (xs, ys) = split(sa, p, data.y().is_some());
    SketchOutput::from_parts(xs, ys, spec.family.clone(), spec.m, n)
}

fn split(sa: DMatrix<f64>, p: usize, has_y: bool) -> (DMatrix<f64>, Option<DVector<f64>>) {
    if has_y {
        let ys = sa.column(p).into_owned();
        (sa.remove_column(p), Some(ys))
    } else {
        (sa, None)
    }
}

pub fn apply_srht(data: &DataMatrix, m: usize, seed: u64) -> Result<SketchOutput> {
    apply(&SketchSpec::new(Family::Srht, m, seed), data)
}

pub fn apply_sse(data: &DataMatrix, m: usize, sparsity: usize, seed: u64) -> Result<SketchOutput> {
    apply(&SketchSpec::new(Family::Sse { sparsity }, m, seed), data)
}

/// Like [`apply_sse`] but also returns the number of scatter multiply-adds
/// performed, which is `sparsity * nnz([X y])`.
pub fn apply_sse_counted(
    data: &DataMatrix,
    m: usize,
    sparsity: usize,
    seed: u64,
) -> Result<(SketchOutput, u64)> {
    let family = Family::Sse { sparsity };
    check_sizes(&family, m, data.n(), data.p())?;
    let (sa, ops) = sse::apply(&augmented(data), m, sparsity, seed);
    let (xs, ys) = split(sa, data.p(), data.y().is_some());
    Ok((SketchOutput::from_parts(xs, ys, family, m, data.n())?, ops))
}

pub fn apply_iid(data: &DataMatrix, m: usize, dist: IidDist, seed: u64) -> Result<SketchOutput> {
    apply(&SketchSpec::new(Family::Iid(dist), m, seed), data)
}

pub fn apply_haar(data: &DataMatrix, m: usize, seed: u64) -> Result<SketchOutput> {
    apply(&SketchSpec::new(Family::Haar(HaarMode::Explicit), m, seed), data)
}

pub fn apply_uniform_subsample(data: &DataMatrix, m: usize, seed: u64) -> Result<SketchOutput> {
    apply(&SketchSpec::new(Family::UniformSubsample, m, seed), data)
}
