use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate_trial, prepare, ExperimentConfig, FamilyContext, TargetOutcome};
use crate::error::Result;
use crate::sketch::{method_constants, Family};
use crate::stats::{linear_fit, variance};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceCell {
    pub family: String,
    pub m: usize,
    pub target: String,
    pub gamma: f64,
    /// Sample variance of the standardized statistic over successful trials.
    pub empirical: Option<f64>,
    pub theoretical: Option<f64>,
    pub ratio: Option<f64>,
    pub samples: u64,
    pub failures: u64,
}

/// Least-squares line of empirical variance against `1 - gamma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub family: String,
    pub target: String,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub cells: Vec<VarianceCell>,
    pub trends: Vec<TrendFit>,
}

/// Empirical variance of the standardized statistics against their limits.
///
/// The statistics are `sqrt(m) (beta^_j - beta_j)` for the least-squares
/// targets, `sqrt(m) (Lambda^_i - Lambda_i) / Lambda^_i` for eigenvalues and
/// `sqrt(m) c^T (v^_i - v_i) / sqrt(c^T Delta^_i c)` with the `G = I + P`
/// functional for eigenvectors, so the eigenvector limit is `tau` for every
/// isotropic family.
pub fn run_variance(cfg: &ExperimentConfig) -> Result<VarianceReport> {
    let truth = prepare(cfg)?;
    let mut cells = Vec::new();
    let mut trends = Vec::new();
    let n = truth.n();
    for (fi, family) in cfg.families.iter().enumerate() {
        let ctx = FamilyContext::new(fi, family, &truth, &cfg.targets)?;
        let first = cells.len();
        for &m in &cfg.m_grid {
            let outcomes: Vec<Vec<TargetOutcome>> = (0..cfg.trials)
                .into_par_iter()
                .map(|t| evaluate_trial(&ctx, &truth, m, t, cfg.seed, &cfg.targets, cfg.level))
                .collect();
            for (k, &target) in cfg.targets.iter().enumerate() {
                let stats: Vec<f64> = outcomes.iter().filter_map(|o| o[k].statistic).collect();
                let empirical = (stats.len() >= 2).then(|| variance(&stats));
                let theoretical = truth.theoretical_variance(family, ctx.gform.as_ref(), m, target);
                let ratio = match (empirical, theoretical) {
                    (Some(e), Some(t)) if t > 0.0 => Some(e / t),
                    _ => None,
                };
                cells.push(VarianceCell {
                    family: family.label(),
                    m,
                    target: target.to_string(),
                    gamma: m as f64 / n as f64,
                    empirical,
                    theoretical,
                    ratio,
                    samples: stats.len() as u64,
                    failures: (cfg.trials - stats.len()) as u64,
                });
            }
        }
        if matches!(family, Family::Srht | Family::Haar(_)) && cfg.m_grid.len() >= 2 {
            for target in &cfg.targets {
                let label = target.to_string();
                let (xs, ys): (Vec<f64>, Vec<f64>) = cells[first..]
                    .iter()
                    .filter(|c| c.target == label)
                    .filter_map(|c| Some((method_constants(family, c.m, n).tau, c.empirical?)))
                    .unzip();
                if xs.len() >= 2 {
                    let fit = linear_fit(&xs, &ys);
                    trends.push(TrendFit {
                        family: family.label(),
                        target: label,
                        slope: fit.slope,
                        intercept: fit.intercept,
                        r_squared: fit.r_squared,
                        points: xs.len(),
                    });
                }
            }
        }
    }
    Ok(VarianceReport { cells, trends })
}
