use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::qf_variance;
use crate::datagen::{gen_unit_pair, PairStyle};
use crate::error::{Error, Result};
use crate::rng::{child_seed, stream_id, Philox};
use crate::sketch::{apply_matrix, method_constants, Family, IidDist, SketchSpec, TAG_IID};
use crate::stats::{ks_test, mean, normal_cdf, variance};

pub const MIN_QF_TRIALS: usize = 1000;
/// Samples this close to zero count towards the atom at zero.
pub const ZERO_ATOM_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct QfConfig {
    pub family: Family,
    pub n: usize,
    pub m: usize,
    pub pair: PairStyle,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QfReport {
    pub family: String,
    pub n: usize,
    pub m: usize,
    pub pair: String,
    pub trials: usize,
    pub inner_product: f64,
    /// Limiting variance of `sqrt(m / tau) (a^T S^T S a~ - a^T a~)`.
    pub sigma2: f64,
    /// Moments of the statistic divided by `sigma`.
    pub mean: f64,
    pub variance: f64,
    /// Variance before dividing by `sigma^2`.
    pub raw_variance: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub zero_fraction: f64,
    pub distinct_values: usize,
}

pub fn pair_label(style: PairStyle) -> String {
    match style {
        PairStyle::Delocalized => "delocalized".into(),
        PairStyle::Localized => "localized".into(),
        PairStyle::Angle(t) => format!("angle:{t}"),
        PairStyle::SrhtCounterexample => "srht-counterexample".into(),
    }
}

pub fn parse_pair(s: &str) -> Result<PairStyle> {
    match s {
        "delocalized" => Ok(PairStyle::Delocalized),
        "localized" | "e1" => Ok(PairStyle::Localized),
        "srht-counterexample" => Ok(PairStyle::SrhtCounterexample),
        _ => s
            .strip_prefix("angle:")
            .and_then(|t| t.parse::<f64>().ok())
            .filter(|t| t.is_finite())
            .map(PairStyle::Angle)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown pair `{s}`; expected delocalized, localized, angle:THETA or srht-counterexample"
                ))
            }),
    }
}

/// `sigma^2` for the standardized quadratic form, with `tau` factored out.
pub fn qf_sigma2(family: &Family, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let alpha = method_constants(family, 1, 2).alpha;
    qf_variance(family, 1.0, alpha, a, b)
}

/// `S [a a~]` for one trial.
///
/// A Gaussian sketch is rotation invariant, so `S Q` for orthonormal `Q` is
/// again an `m x 2` Gaussian matrix; drawing that directly is exact in law
/// and avoids generating the full `m x n` operator.
fn sketch_pair(family: &Family, m: usize, seed: u64, ab: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Family::Iid(IidDist::Gaussian) = family {
        crate::sketch::check_sizes(family, m, ab.nrows(), ab.ncols())?;
        let qr = ab.clone().qr();
        let r = qr.r();
        let mut rng = Philox::new(seed, stream_id(TAG_IID, 1 << 40));
        let g = DMatrix::<f64>::from_fn(m, ab.ncols(), |_, _| StandardNormal.sample(&mut rng));
        return Ok(g * r / (m as f64).sqrt());
    }
    apply_matrix(&SketchSpec::new(family.clone(), m, seed), ab)
}

/// Samples `sqrt(m / tau) (a^T S^T S a~ - a^T a~) / sigma` over independent sketches.
pub fn run_qf_clt(cfg: &QfConfig) -> Result<QfReport> {
    if cfg.trials < MIN_QF_TRIALS {
        return Err(Error::ConfigInvalid(format!(
            "trials = {} is below the minimum of {MIN_QF_TRIALS}",
            cfg.trials
        )));
    }
    if cfg.trials >= 1 << 24 {
        return Err(Error::ConfigInvalid("too many trials".into()));
    }
    crate::sketch::check_sizes(&cfg.family, cfg.m, cfg.n, 2).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
    let (a, b) = gen_unit_pair(cfg.pair, cfg.n, cfg.seed)?;
    let inner = a.dot(&b);
    let sigma2 = qf_sigma2(&cfg.family, &a, &b);
    if !(sigma2 > 0.0) {
        return Err(Error::ConfigInvalid("the limiting variance is zero for this pair".into()));
    }
    let tau = method_constants(&cfg.family, cfg.m, cfg.n).tau;
    let scale = (cfg.m as f64 / tau).sqrt() / sigma2.sqrt();
    let mut ab = DMatrix::zeros(cfg.n, 2);
    ab.set_column(0, &a);
    ab.set_column(1, &b);
    let samples: Vec<f64> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let sab = sketch_pair(&cfg.family, cfg.m, child_seed(cfg.seed, 0, cfg.m, t), &ab)?;
            Ok(scale * (sab.column(0).dot(&sab.column(1)) - inner))
        })
        .collect::<Result<_>>()?;
    let ks = ks_test(&samples, normal_cdf)?;
    let var = variance(&samples);
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    Ok(QfReport {
        family: cfg.family.label(),
        n: cfg.n,
        m: cfg.m,
        pair: pair_label(cfg.pair),
        trials: cfg.trials,
        inner_product: inner,
        sigma2,
        mean: mean(&samples),
        variance: var,
        raw_variance: var * sigma2,
        ks_statistic: ks.statistic,
        ks_p_value: ks.p_value,
        zero_fraction: samples.iter().filter(|x| x.abs() <= ZERO_ATOM_TOL).count() as f64 / samples.len() as f64,
        distinct_values: sorted.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_labels_round_trip() {
        for s in ["delocalized", "localized", "angle:0.5", "srht-counterexample"] {
            assert_eq!(pair_label(parse_pair(s).unwrap()), s);
        }
        assert!(parse_pair("angle:x").is_err());
    }

    #[test]
    fn too_few_trials_rejected() {
        let cfg = QfConfig {
            family: Family::Srht,
            n: 64,
            m: 16,
            pair: PairStyle::Delocalized,
            trials: 999,
            seed: 1,
        };
        assert!(matches!(run_qf_clt(&cfg), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn gaussian_shortcut_has_the_operator_law() {
        // the reduced draw and the explicit operator agree in the first two moments
        let n = 128;
        let m = 32;
        let (a, b) = gen_unit_pair(PairStyle::Angle(1.0), n, 3).unwrap();
        let mut ab = DMatrix::zeros(n, 2);
        ab.set_column(0, &a);
        ab.set_column(1, &b);
        let fam = Family::Iid(IidDist::Gaussian);
        let draw = |reduced: bool, s: u64| {
            let sab = if reduced {
                sketch_pair(&fam, m, s, &ab).unwrap()
            } else {
                apply_matrix(&SketchSpec::new(fam.clone(), m, s), &ab).unwrap()
            };
            (m as f64).sqrt() * (sab.column(0).dot(&sab.column(1)) - a.dot(&b))
        };
        let trials = 4000;
        let r: Vec<f64> = (0..trials).map(|s| draw(true, s)).collect();
        let e: Vec<f64> = (0..trials).map(|s| draw(false, s + 1_000_000)).collect();
        let target = 1.0 + a.dot(&b).powi(2);
        // variance of a sample variance is about 2 sigma^4 / trials
        let se = target * (2.0 / trials as f64).sqrt();
        assert!((variance(&r) - target).abs() < 4.0 * se, "{}", variance(&r));
        assert!((variance(&e) - target).abs() < 4.0 * se, "{}", variance(&e));
        assert!(mean(&r).abs() < 4.0 * (target / trials as f64).sqrt());
    }
}
