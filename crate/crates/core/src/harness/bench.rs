use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datagen::CaseConfig;
use crate::error::{Error, Result};
use crate::ls::sketch_and_solve;
use crate::rng::child_seed;
use crate::sketch::{apply, Family, SketchSpec};

pub const MIN_REPS: usize = 20;

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub data: CaseConfig,
    pub families: Vec<Family>,
    pub m_grid: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub family: String,
    pub m: usize,
    pub reps: usize,
    /// Median seconds to build `(SX, Sy)`.
    pub build_median_s: f64,
    /// Median seconds to build the sketch and solve the sketched problem.
    pub total_median_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n: usize,
    pub p: usize,
    pub cells: Vec<BenchCell>,
}

impl BenchReport {
    pub fn cell(&self, family: &str, m: usize) -> Option<&BenchCell> {
        self.cells.iter().find(|c| c.family == family && c.m == m)
    }
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

/// Wall-clock medians per `(family, m)`. Runs on the calling thread; one
/// untimed warm-up per cell.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.reps < MIN_REPS {
        return Err(Error::ConfigInvalid(format!("reps = {} is below the minimum of {MIN_REPS}", cfg.reps)));
    }
    let data = cfg.data.generate()?;
    let mut cells = Vec::new();
    for (fi, family) in cfg.families.iter().enumerate() {
        for &m in &cfg.m_grid {
            let spec = |r: usize| SketchSpec::new(family.clone(), m, child_seed(cfg.seed, fi, m, r));
            sketch_and_solve(&apply(&spec(cfg.reps), &data)?)?;
            let mut build = Vec::with_capacity(cfg.reps);
            let mut total = Vec::with_capacity(cfg.reps);
            for r in 0..cfg.reps {
                let t0 = Instant::now();
                let sk = apply(&spec(r), &data)?;
                let t1 = Instant::now();
                std::hint::black_box(sketch_and_solve(&sk)?);
                let t2 = Instant::now();
                build.push((t1 - t0).as_secs_f64());
                total.push((t2 - t0).as_secs_f64());
            }
            cells.push(BenchCell {
                family: family.label(),
                m,
                reps: cfg.reps,
                build_median_s: median(&mut build),
                total_median_s: median(&mut total),
            });
        }
    }
    Ok(BenchReport {
        n: data.n(),
        p: data.p(),
        cells,
    })
}
