use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate_trial, prepare, ExperimentConfig, FamilyContext, TargetOutcome};
use crate::error::Result;
use crate::stats::{clopper_pearson, mean};

/// One `(family, m, target)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageCell {
    pub family: String,
    pub m: usize,
    pub target: String,
    pub hits: u64,
    pub trials: u64,
    /// `hits / (trials - failures)`; absent when every trial failed.
    pub coverage: Option<f64>,
    pub cp_lower: Option<f64>,
    pub cp_upper: Option<f64>,
    pub mean_width: Option<f64>,
    pub failures: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub level: f64,
    pub cells: Vec<CoverageCell>,
}

/// Empirical coverage of the nominal intervals.
pub fn run_coverage(cfg: &ExperimentConfig) -> Result<CoverageReport> {
    let truth = prepare(cfg)?;
    let mut cells = Vec::new();
    for (fi, family) in cfg.families.iter().enumerate() {
        let ctx = FamilyContext::new(fi, family, &truth, &cfg.targets)?;
        for &m in &cfg.m_grid {
            let outcomes: Vec<Vec<TargetOutcome>> = (0..cfg.trials)
                .into_par_iter()
                .map(|t| evaluate_trial(&ctx, &truth, m, t, cfg.seed, &cfg.targets, cfg.level))
                .collect();
            for (k, target) in cfg.targets.iter().enumerate() {
                let column = outcomes.iter().map(|o| &o[k]);
                cells.push(summarize(family.label(), m, target.to_string(), column, cfg.level)?);
            }
        }
    }
    Ok(CoverageReport { level: cfg.level, cells })
}

fn summarize<'a>(
    family: String,
    m: usize,
    target: String,
    outcomes: impl Iterator<Item = &'a TargetOutcome>,
    level: f64,
) -> Result<CoverageCell> {
    let mut hits = 0u64;
    let mut trials = 0u64;
    let mut failures = 0u64;
    let mut widths = Vec::new();
    for o in outcomes {
        trials += 1;
        match &o.ci {
            Ok(ci) => {
                hits += ci.contains(o.truth) as u64;
                widths.push(ci.width());
            }
            Err(_) => failures += 1,
        }
    }
    let ok = trials - failures;
    let (coverage, cp_lower, cp_upper, mean_width) = if ok == 0 {
        (None, None, None, None)
    } else {
        let cp = clopper_pearson(hits, ok, level)?;
        (Some(hits as f64 / ok as f64), Some(cp.lower), Some(cp.upper), Some(mean(&widths)))
    };
    Ok(CoverageCell {
        family,
        m,
        target,
        hits,
        trials,
        coverage,
        cp_lower,
        cp_upper,
        mean_width,
        failures,
    })
}
