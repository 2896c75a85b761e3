//! Monte Carlo experiments: coverage, variance, quadratic-form CLTs, timing
//! and data diagnostics.
//!
//! Every trial draws its sketch from `child_seed(master, family, m, trial)`,
//! trials run on a rayon pool and results are collected in trial order, so
//! reports do not depend on the number of worker threads.

mod bench;
mod coverage;
mod diagnostics;
mod qf;
mod variance;

pub use bench::{run_bench, BenchCell, BenchConfig, BenchReport};
pub use coverage::{run_coverage, CoverageCell, CoverageReport};
pub use diagnostics::{delocalization_report, DelocalizationReport, DiagnosticFlag};
pub use qf::{pair_label, parse_pair, qf_sigma2, run_qf_clt, QfConfig, QfReport, MIN_QF_TRIALS, ZERO_ATOM_TOL};
pub use variance::{run_variance, TrendFit, VarianceCell, VarianceReport};

use std::fmt;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datagen::CaseConfig;
use crate::error::{Error, Result};
use crate::linalg::{sym_eig, DataMatrix, GramFactor};
use crate::ls::{ls_inference, EstimatorKind};
use crate::pca::{delta_i, full_data_gform, pca_inference, GForm, PcaInferenceResult};
use crate::rng::child_seed;
use crate::sketch::{apply, method_constants, Family, SketchOutput, SketchSpec};
use crate::stats::{z_two_sided, Interval};

pub const MIN_TRIALS: usize = 50;
pub const DEFAULT_TRIALS: usize = 500;
pub const DEFAULT_LEVEL: f64 = 0.95;

/// Run `f` on a dedicated pool with `threads` workers (0 = rayon's default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::ConfigInvalid(format!("cannot start thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Where an experiment's data comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Case(CaseConfig),
    Csv {
        path: PathBuf,
        has_header: bool,
        y_col: Option<crate::io::YColumn>,
    },
}

impl DataSource {
    pub fn load(&self) -> Result<DataMatrix> {
        match self {
            DataSource::Case(c) => c.generate(),
            DataSource::Csv { path, has_header, y_col } => {
                crate::io::load_csv(path, *has_header, y_col.as_ref())
            }
        }
    }
}

/// Quantity whose interval or pivot is studied. Indices are 1-based, as on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    LsCoord(usize),
    LsPartialCoord(usize),
    Eig(usize),
    /// Eigenvector `i` paired with the direction `e_k`.
    Eigvec { index: usize, direction: usize },
}

impl Target {
    /// Parses `ls:1`, `ls_partial:1`, `eig:1`, `eigvec:1` (direction `e_1`) or `eigvec:1:e2`.
    pub fn parse(s: &str) -> Result<Target> {
        let bad = || {
            Error::InvalidArgument(format!(
                "unknown target `{s}`; expected ls:J, ls_partial:J, eig:I or eigvec:I[:eK]"
            ))
        };
        let idx = |t: &str| -> Result<usize> {
            match t.parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v),
                _ => Err(bad()),
            }
        };
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["ls", j] => Ok(Target::LsCoord(idx(j)?)),
            ["ls_partial", j] => Ok(Target::LsPartialCoord(idx(j)?)),
            ["eig", i] => Ok(Target::Eig(idx(i)?)),
            ["eigvec", i] => Ok(Target::Eigvec { index: idx(i)?, direction: 1 }),
            ["eigvec", i, e] => {
                let k = e.strip_prefix('e').ok_or_else(bad)?;
                Ok(Target::Eigvec { index: idx(i)?, direction: idx(k)? })
            }
            _ => Err(bad()),
        }
    }

    pub fn needs_response(&self) -> bool {
        matches!(self, Target::LsCoord(_) | Target::LsPartialCoord(_))
    }

    fn max_index(&self) -> usize {
        match *self {
            Target::LsCoord(j) | Target::LsPartialCoord(j) | Target::Eig(j) => j,
            Target::Eigvec { index, direction } => index.max(direction),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::LsCoord(j) => write!(f, "ls:{j}"),
            Target::LsPartialCoord(j) => write!(f, "ls_partial:{j}"),
            Target::Eig(i) => write!(f, "eig:{i}"),
            Target::Eigvec { index, direction } => write!(f, "eigvec:{index}:e{direction}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub families: Vec<Family>,
    pub m_grid: Vec<usize>,
    pub trials: usize,
    pub targets: Vec<Target>,
    pub level: f64,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Checks the invariants that do not need the data.
    pub fn validate_shape(&self) -> Result<()> {
        if self.trials < MIN_TRIALS {
            return Err(Error::ConfigInvalid(format!(
                "trials = {} is below the minimum of {MIN_TRIALS}",
                self.trials
            )));
        }
        if self.families.is_empty() || self.m_grid.is_empty() || self.targets.is_empty() {
            return Err(Error::ConfigInvalid("families, m_grid and targets must be non-empty".into()));
        }
        if self.m_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::ConfigInvalid("m_grid must be strictly increasing".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::ConfigInvalid(format!("level {} must lie in (0, 1)", self.level)));
        }
        if self.families.len() >= 1 << 16 || self.trials >= 1 << 24 {
            return Err(Error::ConfigInvalid("too many families or trials".into()));
        }
        Ok(())
    }

    /// Checks everything, given the data dimensions.
    pub fn validate(&self, n: usize, p: usize, has_response: bool) -> Result<()> {
        self.validate_shape()?;
        if let Some(&m) = self.m_grid.iter().find(|&&m| m <= p || m >= n) {
            return Err(Error::ConfigInvalid(format!("m = {m} must lie strictly between p = {p} and n = {n}")));
        }
        if let Some(t) = self.targets.iter().find(|t| t.max_index() > p) {
            return Err(Error::ConfigInvalid(format!("target {t} refers past p = {p}")));
        }
        if !has_response && self.targets.iter().any(Target::needs_response) {
            return Err(Error::ConfigInvalid("least-squares targets need a response column".into()));
        }
        Ok(())
    }
}

/// Full-data quantities, computed once per experiment.
pub(crate) struct Truth {
    pub data: DataMatrix,
    pub xty: Option<DVector<f64>>,
    pub beta: Option<DVector<f64>>,
    pub lambdas: Vec<f64>,
    pub vectors: DMatrix<f64>,
    /// Left singular vectors `X V Lambda^{-1/2}`, sign-matched to `vectors`.
    pub u: DMatrix<f64>,
    /// `X (X^T X)^{-1}`; column `j` is the influence of each row on `beta_j`.
    pub w: DMatrix<f64>,
    pub residual: Option<DVector<f64>>,
    pub fitted: Option<DVector<f64>>,
}

impl Truth {
    pub fn new(data: DataMatrix) -> Result<Self> {
        let x = data.x();
        let gram = GramFactor::new(x)?;
        let eig = sym_eig(&x.tr_mul(x))?;
        let mut u = x * &eig.vectors;
        for (j, mut col) in u.column_iter_mut().enumerate() {
            col /= eig.lambdas[j].sqrt();
        }
        let w = x * gram.inverse();
        let xty = data.xty();
        let beta = xty.as_ref().map(|b| gram.solve(b));
        let fitted = beta.as_ref().map(|b| x * b);
        let residual = match (data.y(), &fitted) {
            (Some(y), Some(f)) => Some(y - f),
            _ => None,
        };
        Ok(Truth {
            xty,
            beta,
            lambdas: eig.lambdas.as_slice().to_vec(),
            vectors: eig.vectors,
            u,
            w,
            residual,
            fitted,
            data,
        })
    }

    pub fn p(&self) -> usize {
        self.data.p()
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    fn unit(&self, k: usize) -> DVector<f64> {
        DVector::from_fn(self.p(), |i, _| (i + 1 == k) as u8 as f64)
    }

    /// Value of the target on the full data.
    fn target_value(&self, t: Target, sign: f64) -> f64 {
        match t {
            Target::LsCoord(j) | Target::LsPartialCoord(j) => self.beta.as_ref().expect("validated")[j - 1],
            Target::Eig(i) => self.lambdas[i - 1],
            Target::Eigvec { index, direction } => sign * self.vectors[(direction - 1, index - 1)],
        }
    }

    /// Predicted variance of the standardized statistic computed in [`evaluate_trial`].
    pub fn theoretical_variance(&self, family: &Family, g: Option<&GForm>, m: usize, t: Target) -> Option<f64> {
        let consts = method_constants(family, m, self.n());
        let tau = consts.tau;
        let p = self.p();
        match t {
            Target::LsCoord(j) | Target::LsPartialCoord(j) => {
                let r = match t {
                    Target::LsCoord(_) => self.residual.as_ref()?,
                    _ => self.fitted.as_ref()?,
                };
                Some(qf_variance(family, tau, consts.alpha, &self.w.column(j - 1).into_owned(), r))
            }
            Target::Eig(i) => {
                let g = g.cloned().or(consts.alpha.map(GForm::Isotropic))?;
                Some(tau * g.entry(i - 1, i - 1, i - 1, i - 1, p))
            }
            Target::Eigvec { index, direction } => {
                let g = g.cloned().or(consts.alpha.map(GForm::Isotropic))?;
                let c = self.unit(direction);
                let quad = |g: &GForm| -> Option<f64> {
                    let d = delta_i(&self.lambdas, &self.vectors, g, index - 1).ok()?;
                    Some((c.transpose() * d * &c)[(0, 0)])
                };
                Some(tau * quad(&g)? / quad(&GForm::Isotropic(0.0))?)
            }
        }
    }
}

/// Variance of `sqrt(m) a^T (S^T S - I) b` in the proportional limit, for
/// the family's quadratic-form law.
pub(crate) fn qf_variance(family: &Family, tau: f64, alpha: Option<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let ab = a.dot(b);
    let cross: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * x * y * y).sum();
    let base = a.norm_squared() * b.norm_squared();
    match (family, alpha) {
        (_, Some(alpha)) => tau * (base + (1.0 + alpha) * ab * ab),
        (Family::UniformSubsample, None) => tau * a.len() as f64 * cross,
        (Family::Iid(d), None) => base + ab * ab + (d.kurtosis() - 3.0) * cross,
        _ => unreachable!("only subsampling and non-Gaussian i.i.d. lack alpha"),
    }
}

/// Per-family context: the full-data `G` where intervals need it.
pub(crate) struct FamilyContext {
    pub index: usize,
    pub family: Family,
    pub gform: Option<GForm>,
}

impl FamilyContext {
    pub fn new(index: usize, family: &Family, truth: &Truth, targets: &[Target]) -> Result<Self> {
        let needs_pca = targets.iter().any(|t| !t.needs_response());
        let gform = if needs_pca { full_data_gform(family, &truth.u)? } else { None };
        Ok(FamilyContext {
            index,
            family: family.clone(),
            gform,
        })
    }
}

/// Interval and standardized statistic for one target in one trial.
#[derive(Debug)]
pub(crate) struct TargetOutcome {
    pub ci: Result<Interval>,
    pub truth: f64,
    pub statistic: Option<f64>,
}

/// One sketch, every target.
pub(crate) fn evaluate_trial(
    ctx: &FamilyContext,
    truth: &Truth,
    m: usize,
    trial: usize,
    master: u64,
    targets: &[Target],
    level: f64,
) -> Vec<TargetOutcome> {
    let spec = SketchSpec::new(ctx.family.clone(), m, child_seed(master, ctx.index, m, trial));
    let sk = match apply(&spec, &truth.data) {
        Ok(sk) => sk,
        Err(e) => {
            return targets
                .iter()
                .map(|_| TargetOutcome {
                    ci: Err(clone_error(&e)),
                    truth: f64::NAN,
                    statistic: None,
                })
                .collect()
        }
    };
    let mut complete = None;
    let mut partial = None;
    let mut pca = None;
    targets
        .iter()
        .map(|&t| evaluate_target(ctx, truth, &sk, t, level, &mut complete, &mut partial, &mut pca))
        .collect()
}

type Lazy<T> = Option<Result<T>>;

#[allow(clippy::too_many_arguments)]
fn evaluate_target(
    ctx: &FamilyContext,
    truth: &Truth,
    sk: &SketchOutput,
    t: Target,
    level: f64,
    complete: &mut Lazy<crate::ls::LsInferenceResult>,
    partial: &mut Lazy<crate::ls::LsInferenceResult>,
    pca: &mut Lazy<PcaInferenceResult>,
) -> TargetOutcome {
    let root_m = (sk.m_nominal as f64).sqrt();
    match t {
        Target::LsCoord(j) | Target::LsPartialCoord(j) => {
            let (slot, kind) = match t {
                Target::LsCoord(_) => (complete, EstimatorKind::Complete),
                _ => (partial, EstimatorKind::Partial),
            };
            let res = slot.get_or_insert_with(|| ls_inference(sk, kind, truth.xty.as_ref(), None, level));
            let value = truth.target_value(t, 1.0);
            match res {
                Ok(r) => TargetOutcome {
                    ci: Ok(r.cis[j - 1]),
                    truth: value,
                    statistic: Some(root_m * (r.beta_hat[j - 1] - value)),
                },
                Err(e) => TargetOutcome {
                    ci: Err(clone_error(e)),
                    truth: value,
                    statistic: None,
                },
            }
        }
        Target::Eig(i) | Target::Eigvec { index: i, .. } => {
            let res = pca.get_or_insert_with(|| pca_inference(sk, ctx.gform.clone(), level));
            let r = match res {
                Ok(r) => r,
                Err(e) => {
                    return TargetOutcome {
                        ci: Err(clone_error(e)),
                        truth: f64::NAN,
                        statistic: None,
                    }
                }
            };
            if let Target::Eig(_) = t {
                let value = truth.target_value(t, 1.0);
                let est = r.lambdas_hat[i - 1];
                return TargetOutcome {
                    ci: r.eigenvalue_ci(i - 1, level),
                    truth: value,
                    statistic: Some(root_m * (est - value) / est),
                };
            }
            let Target::Eigvec { direction, .. } = t else { unreachable!() };
            let vhat = r.vectors_hat.column(i - 1);
            // eigenvectors are defined up to sign; compare like with like
            let sign = if vhat.dot(&truth.vectors.column(i - 1)) < 0.0 { -1.0 } else { 1.0 };
            let value = truth.target_value(t, sign);
            let est = vhat[direction - 1];
            let iso = isotropic_quadratic(r, i - 1, direction - 1);
            TargetOutcome {
                ci: r.eigenvector_ci(i - 1, &truth.unit(direction), level),
                truth: value,
                statistic: (iso > 0.0).then(|| root_m * (est - value) / iso.sqrt()),
            }
        }
    }
}

/// `e_k^T Delta^_i e_k` for `G = I + P`, from the sketched spectrum.
fn isotropic_quadratic(r: &PcaInferenceResult, i: usize, k: usize) -> f64 {
    let l = &r.lambdas_hat;
    let v = &r.vectors_hat;
    (0..l.len())
        .filter(|&j| j != i)
        .map(|j| l[i] * l[j] / (l[i] - l[j]).powi(2) * v[(k, j)].powi(2))
        .sum()
}

/// Errors are not `Clone` because of the I/O variant; trial errors never carry one.
fn clone_error(e: &Error) -> Error {
    use Error::*;
    match e {
        RankDeficient { ratio } => RankDeficient { ratio: *ratio },
        NonFinite { what } => NonFinite { what },
        NotSymmetric { asymmetry } => NotSymmetric { asymmetry: *asymmetry },
        DegenerateSample { m_eff, p } => DegenerateSample { m_eff: *m_eff, p: *p },
        ZeroResidual => ZeroResidual,
        DegenerateSignal => DegenerateSignal,
        EigengapTooSmall { index, gap } => EigengapTooSmall { index: *index, gap: *gap },
        NeedsFullData { what } => NeedsFullData { what },
        DegenerateDirection { index } => DegenerateDirection { index: *index },
        other => InvalidArgument(other.to_string()),
    }
}

/// Level-free normal quantile check shared by the runners.
pub(crate) fn check_level(level: f64) -> Result<()> {
    z_two_sided(level).map(|_| ()).map_err(|_| Error::ConfigInvalid(format!("level {level} must lie in (0, 1)")))
}

/// Loads data and checks the config against it.
pub(crate) fn prepare(cfg: &ExperimentConfig) -> Result<Truth> {
    cfg.validate_shape()?;
    check_level(cfg.level)?;
    let data = cfg.data.load()?;
    cfg.validate(data.n(), data.p(), data.y().is_some())?;
    Truth::new(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_round_trip() {
        for s in ["ls:1", "ls_partial:3", "eig:2", "eigvec:1:e2"] {
            assert_eq!(Target::parse(s).unwrap().to_string(), s);
        }
        assert_eq!(
            Target::parse("eigvec:2").unwrap(),
            Target::Eigvec { index: 2, direction: 1 }
        );
        for s in ["ls:0", "eig", "eigvec:1:2", "foo:1", "ls:-1"] {
            assert!(Target::parse(s).is_err(), "{s}");
        }
    }

    fn cfg() -> ExperimentConfig {
        ExperimentConfig {
            data: DataSource::Case(CaseConfig::new(1, 256, 4, 3)),
            families: vec![Family::Srht],
            m_grid: vec![64, 128],
            trials: 50,
            targets: vec![Target::Eig(1)],
            level: 0.95,
            seed: 1,
        }
    }

    #[test]
    fn validation_rules() {
        assert!(cfg().validate(256, 4, true).is_ok());
        let mut c = cfg();
        c.trials = 49;
        assert!(matches!(c.validate(256, 4, true), Err(Error::ConfigInvalid(_))));
        let mut c = cfg();
        c.m_grid = vec![128, 64];
        assert!(c.validate(256, 4, true).is_err());
        let mut c = cfg();
        c.m_grid = vec![64, 256];
        assert!(c.validate(256, 4, true).is_err());
        let mut c = cfg();
        c.m_grid = vec![4, 64];
        assert!(c.validate(256, 4, true).is_err());
        let mut c = cfg();
        c.targets = vec![Target::Eig(5)];
        assert!(c.validate(256, 4, true).is_err());
        let mut c = cfg();
        c.targets = vec![Target::LsCoord(1)];
        assert!(c.validate(256, 4, false).is_err());
    }

    #[test]
    fn qf_variance_matches_table_constants() {
        let n = 64;
        let a = DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 });
        // a = a~ = e_1: SRHT gives 1 + 2, subsampling gives n
        assert!((qf_variance(&Family::Srht, 1.0, Some(1.0), &a, &a) - 3.0).abs() < 1e-15);
        assert!((qf_variance(&Family::UniformSubsample, 1.0, None, &a, &a) - n as f64).abs() < 1e-12);
        let t = Family::Iid(crate::sketch::IidDist::StudentT { df: 6.0 });
        // kurtosis 6: 1 + 1 + 3
        assert!((qf_variance(&t, 1.0, None, &a, &a) - 5.0).abs() < 1e-12);
    }
}
