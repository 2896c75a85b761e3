//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::f64::consts::FRAC_PI_2;
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::DMatrix;
use sketchinf::datagen::{CaseConfig, PairStyle};
use sketchinf::harness::{
    run_bench, run_coverage, run_qf_clt, run_variance, BenchConfig, DataSource, ExperimentConfig, QfConfig, Target,
};
use sketchinf::pca::{delta_i, GForm};
use sketchinf::rng::uniform_at;
use sketchinf::sketch::{apply_matrix, fwht};
use sketchinf::{Family, SketchSpec};

/// Master seed for every Monte Carlo criterion, fixed before any run.
const SEED: u64 = 7;

type Outcome = Result<(bool, String), String>;

fn fam(label: &str) -> Family {
    Family::parse(label).expect("family label")
}

fn case1(n: usize, p: usize) -> DataSource {
    DataSource::Case(CaseConfig::new(1, n, p, SEED))
}

fn targets(labels: &[&str]) -> Vec<Target> {
    labels.iter().map(|t| Target::parse(t).expect("target")).collect()
}

fn within(ratio: f64, tol: f64) -> bool {
    (ratio - 1.0).abs() <= tol
}

fn fwht_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for l in 1..=6 {
        let n = 1usize << l;
        let scale = 1.0 / (n as f64).sqrt();
        for col in 0..n {
            let v: Vec<f64> = (0..n).map(|i| uniform_at(col as u64, l, i as u64) - 0.5).collect();
            let fast = fwht(&v).map_err(|e| e.to_string())?;
            for (i, f) in fast.iter().enumerate() {
                let naive: f64 = (0..n)
                    .map(|j| if (i & j).count_ones() % 2 == 0 { v[j] } else { -v[j] })
                    .sum::<f64>()
                    * scale;
                worst = worst.max((f - naive).abs());
            }
        }
    }
    Ok((worst <= 1e-10, format!("max abs error {worst:.2e} over n' = 2..64")))
}

fn unbiasedness() -> Outcome {
    let (n, p, m, seeds) = (128, 4, 32, 2000);
    let x = DMatrix::from_fn(n, p, |i, j| uniform_at(1, j as u64, i as u64) - 0.5 + (j == 0) as u8 as f64);
    let gram = x.tr_mul(&x);
    let mut ok = true;
    let mut parts = Vec::new();
    for label in [
        "srht",
        "countsketch",
        "sse:8",
        "iid-gaussian",
        "iid-t:6",
        "iid-sparse:3",
        "haar",
        "haar-explicit",
        "subsample",
    ] {
        let family = fam(label);
        let mut sum = DMatrix::<f64>::zeros(p, p);
        let mut sum_sq = DMatrix::<f64>::zeros(p, p);
        for s in 0..seeds {
            let sx = apply_matrix(&SketchSpec::new(family.clone(), m, s), &x).map_err(|e| e.to_string())?;
            let g = sx.tr_mul(&sx);
            sum_sq += g.component_mul(&g);
            sum += g;
        }
        let k = seeds as f64;
        let mean = &sum / k;
        let var = (sum_sq - sum.component_mul(&sum) / k) / (k - 1.0);
        // E ||mean - X^T X||_F^2 = sum of entry variances / k when unbiased
        let se = (var.sum() / k).sqrt();
        let err = (mean - &gram).norm();
        ok &= err <= 3.0 * se;
        parts.push(format!("{label} {:.2}", err / se));
    }
    Ok((ok, format!("||bias||_F / SE: {}", parts.join(", "))))
}

fn qf_variance() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for label in ["srht", "countsketch", "iid-gaussian", "haar", "subsample"] {
        for (theta, ip) in [(FRAC_PI_2, 0), (0.0, 1)] {
            let report = run_qf_clt(&QfConfig {
                family: fam(label),
                n: 4096,
                m: 1024,
                pair: PairStyle::Angle(theta),
                trials: 5000,
                seed: SEED,
            })
            .map_err(|e| e.to_string())?;
            ok &= within(report.variance, 0.10);
            parts.push(format!("{label}@{ip} {:.3}", report.variance));
        }
    }
    Ok((ok, format!("variance / limit: {}", parts.join(", "))))
}

fn counterexamples() -> Outcome {
    let run = |family: &str, pair| {
        run_qf_clt(&QfConfig {
            family: fam(family),
            n: 4096,
            m: 1024,
            pair,
            trials: 5000,
            seed: SEED,
        })
        .map_err(|e| e.to_string())
    };
    let srht = run("srht", PairStyle::SrhtCounterexample)?;
    let sub = run("subsample", PairStyle::Localized)?;
    Ok((
        srht.zero_fraction >= 0.2 && sub.distinct_values == 2,
        format!(
            "srht zero fraction {:.3}, subsample distinct values {}",
            srht.zero_fraction, sub.distinct_values
        ),
    ))
}

fn pca_variance() -> Outcome {
    let cfg = ExperimentConfig {
        data: case1(2048, 15),
        families: ["srht", "countsketch", "iid-gaussian", "haar", "subsample"].map(fam).to_vec(),
        m_grid: vec![800],
        trials: 500,
        targets: targets(&["eig:1", "eigvec:1:e1"]),
        level: 0.95,
        seed: SEED,
    };
    let report = run_variance(&cfg).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for c in &report.cells {
        let pass = c.ratio.is_some_and(|r| within(r, 0.15));
        ok &= pass;
        let r = c.ratio.map_or("n/a".into(), |r| format!("{r:.3}"));
        parts.push(format!("{} {} {r}{}", c.family, c.target, if pass { "" } else { " (out)" }));
    }
    Ok((ok, format!("empirical / limit: {}", parts.join(", "))))
}

fn coverage() -> Outcome {
    let cfg = ExperimentConfig {
        data: case1(2048, 15),
        families: ["srht", "countsketch", "iid-gaussian"].map(fam).to_vec(),
        m_grid: vec![400, 800, 1600],
        trials: 500,
        targets: targets(&["ls:1", "ls_partial:1", "eig:1", "eigvec:1:e1"]),
        level: 0.95,
        seed: SEED,
    };
    let report = run_coverage(&cfg).map_err(|e| e.to_string())?;
    let mut misses = Vec::new();
    let mut lowest = f64::INFINITY;
    for c in &report.cells {
        let cov = c.coverage.unwrap_or(f64::NAN);
        lowest = lowest.min(cov);
        let (lo, hi) = (c.cp_lower.unwrap_or(f64::NAN), c.cp_upper.unwrap_or(f64::NAN));
        let in_cp = lo <= 0.95 && 0.95 <= hi;
        if !(in_cp || (0.92..=0.975).contains(&cov)) {
            misses.push(format!(
                "{} m={} {} {cov:.3} [{:.3}, {:.3}]",
                c.family, c.m, c.target, lo, hi
            ));
        }
    }
    let detail = if misses.is_empty() {
        format!("{} cells, lowest coverage {lowest:.3}", report.cells.len())
    } else {
        format!("{} of {} cells out: {}", misses.len(), report.cells.len(), misses.join("; "))
    };
    Ok((misses.is_empty(), detail))
}

fn gamma_trend() -> Outcome {
    let cfg = ExperimentConfig {
        data: case1(2048, 15),
        families: vec![fam("srht"), fam("haar")],
        m_grid: vec![512, 1024, 1536],
        trials: 500,
        targets: targets(&["eig:1"]),
        level: 0.95,
        seed: SEED,
    };
    let report = run_variance(&cfg).map_err(|e| e.to_string())?;
    let mut ok = report.trends.len() == 2;
    let mut parts = Vec::new();
    for t in &report.trends {
        ok &= t.r_squared > 0.9 && t.slope > 0.0;
        parts.push(format!("{} slope {:.3} R^2 {:.3}", t.family, t.slope, t.r_squared));
    }
    Ok((ok, parts.join(", ")))
}

fn cost_ordering() -> Outcome {
    let data = CaseConfig::new(1, 2048, 15, SEED);
    let order = ["countsketch", "sse:8", "srht", "iid-gaussian"];
    let at_800 = run_bench(&BenchConfig {
        data: data.clone(),
        families: order.map(fam).to_vec(),
        m_grid: vec![800],
        reps: 21,
        seed: SEED,
    })
    .map_err(|e| e.to_string())?;
    let times: Vec<f64> = order
        .iter()
        .map(|f| at_800.cell(f, 800).map(|c| c.build_median_s).ok_or(format!("missing {f}")))
        .collect::<Result<_, _>>()?;
    let ordered = times.windows(2).all(|w| w[0] < w[1]);
    let grid: Vec<usize> = (1..=8).map(|k| 200 * k).collect();
    let srht = run_bench(&BenchConfig {
        data,
        families: vec![Family::Srht],
        m_grid: grid,
        reps: 21,
        seed: SEED,
    })
    .map_err(|e| e.to_string())?;
    let sweep: Vec<f64> = srht.cells.iter().map(|c| c.build_median_s).collect();
    let spread = sweep.iter().cloned().fold(0.0, f64::max) / sweep.iter().cloned().fold(f64::INFINITY, f64::min);
    let shown: Vec<String> = order
        .iter()
        .zip(&times)
        .map(|(f, t)| format!("{f} {:.0}us", t * 1e6))
        .collect();
    Ok((
        ordered && spread < 3.0,
        format!("m=800 build medians: {}; srht max/min over m=200..1600 {spread:.2}", shown.join(" < ")),
    ))
}

fn random_orthonormal(p: usize, seed: u64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |i, j| uniform_at(seed, 100 + j as u64, i as u64) - 0.5);
    a.qr().q()
}

fn delta_consistency() -> Outcome {
    let mut worst_abs = 0.0f64;
    let mut worst_rel = 0.0f64;
    for s in 0..100u64 {
        let p = 2 + (s as usize % 7);
        let v = random_orthonormal(p, s);
        // distinct positive spectrum with a guaranteed gap
        let mut lambdas: Vec<f64> = (0..p)
            .map(|k| (p - k) as f64 + 0.8 * uniform_at(s, 7, k as u64) + 0.1)
            .collect();
        lambdas.sort_by(|a, b| b.total_cmp(a));
        let explicit = GForm::Explicit(GForm::Isotropic(0.0).to_dense(p));
        let scale = 0.01 + 100.0 * uniform_at(s, 8, 0);
        let scaled: Vec<f64> = lambdas.iter().map(|l| l * scale).collect();
        for i in 0..p {
            let closed = delta_i(&lambdas, &v, &GForm::Isotropic(0.0), i).map_err(|e| e.to_string())?;
            let general = delta_i(&lambdas, &v, &explicit, i).map_err(|e| e.to_string())?;
            worst_abs = worst_abs.max((&closed - &general).amax());
            let rescaled = delta_i(&scaled, &v, &GForm::Isotropic(0.0), i).map_err(|e| e.to_string())?;
            worst_rel = worst_rel.max((&rescaled - &closed).amax() / closed.amax());
        }
    }
    Ok((
        worst_abs <= 1e-12 && worst_rel <= 1e-12,
        format!("explicit vs closed form {worst_abs:.2e}, homogeneity {worst_rel:.2e} relative"),
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("coverage.json");
    std::fs::write(
        &config,
        r#"{"data": {"case": 1, "n": 512, "p": 5, "seed": 3}, "families": ["srht", "countsketch", "iid-gaussian", "haar"],
            "m_grid": [100, 200], "trials": 60, "targets": ["ls:1", "ls_partial:2", "eig:1", "eigvec:1:e1"], "seed": 11}"#,
    )
    .map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for (threads, format) in [(1, "csv"), (8, "csv"), (1, "json"), (8, "json")] {
        let out = Command::new(env!("CARGO_BIN_EXE_sketchinf"))
            .args(["--threads", &threads.to_string(), "--format", format, "--no-meta", "mc-coverage", "--config"])
            .arg(&config)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(String::from_utf8_lossy(&out.stderr).into_owned());
        }
        outputs.push(out.stdout);
    }
    let same = outputs[0] == outputs[1] && outputs[2] == outputs[3] && !outputs[0].is_empty();
    Ok((same, format!("csv {} bytes, json {} bytes, threads 1 vs 8", outputs[0].len(), outputs[2].len())))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("fwht-oracle", fwht_oracle),
        ("unbiasedness", unbiasedness),
        ("qf-variance", qf_variance),
        ("non-normality", counterexamples),
        ("pca-variance", pca_variance),
        ("coverage", coverage),
        ("gamma-trend", gamma_trend),
        ("cost-ordering", cost_ordering),
        ("delta-consistency", delta_consistency),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let (pass, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += !pass as usize;
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("{verdict} {:>2} {name}: {detail} ({:.1}s)", k + 1, t0.elapsed().as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
