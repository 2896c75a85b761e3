use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::{json, Value};

use sketchinf::datagen::CaseConfig;
use sketchinf::harness::{
    delocalization_report, parse_pair, run_bench, run_coverage, run_qf_clt, run_variance, with_threads, BenchConfig,
    QfConfig,
};
use sketchinf::io::{columns, config_to_json, emit_report, load_csv, parse_config, Field, Format, Meta, Tabular, YColumn};
use sketchinf::ls::{ls_inference, CovarianceKind, EstimatorKind};
use sketchinf::pca::{full_data_gform, pca_inference};
use sketchinf::sketch::{apply, SketchSpec};
use sketchinf::{DataMatrix, Error, Family, Result};

#[derive(Parser)]
#[command(name = "sketchinf", version, about = "Sketched least squares and PCA with confidence intervals")]
struct Cli {
    /// Output format: csv or json.
    #[arg(long, global = true, default_value = "csv")]
    format: String,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; required by every randomized command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for Monte Carlo runs (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Omit the provenance header.
    #[arg(long, global = true)]
    no_meta: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Numeric CSV input.
    #[arg(long, conflicts_with = "case")]
    csv: Option<PathBuf>,
    /// The CSV has no header row.
    #[arg(long)]
    no_header: bool,
    /// Response column: `last`, a 1-based number or a header name.
    #[arg(long)]
    y_col: Option<String>,
    /// Simulated design (1, 2 or 3) instead of a CSV.
    #[arg(long)]
    case: Option<u8>,
    #[arg(long, default_value_t = 2048)]
    n: usize,
    #[arg(long, default_value_t = 15)]
    p: usize,
    /// Seed for the simulated design (defaults to --seed).
    #[arg(long)]
    data_seed: Option<u64>,
}

#[derive(Args, Clone)]
struct SketchArgs {
    /// Sketch family, e.g. srht, countsketch, sse:8, iid-gaussian, haar, subsample.
    #[arg(long)]
    family: String,
    /// Sketch size.
    #[arg(long)]
    m: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Print the sketched data (S X, S y).
    Sketch {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        sketch: SketchArgs,
    },
    /// Sketched least squares with coordinate-wise intervals.
    Ls {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        sketch: SketchArgs,
        /// Use the exact X^T y (partial sketching).
        #[arg(long)]
        partial: bool,
        /// Covariance estimator: simple, partial or sandwich (default depends on family).
        #[arg(long)]
        cov: Option<String>,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Sketched PCA with eigenvalue and eigenvector intervals.
    Pca {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        sketch: SketchArgs,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Use full-data singular vectors where the family needs them.
        #[arg(long)]
        oracle: bool,
        /// Eigenvector intervals are for c = e_k with this k.
        #[arg(long, default_value_t = 1)]
        direction: usize,
    },
    /// Monte Carlo coverage of the intervals.
    McCoverage {
        #[arg(long)]
        config: PathBuf,
    },
    /// Monte Carlo variance of the standardized statistics.
    McVariance {
        #[arg(long)]
        config: PathBuf,
    },
    /// Distribution of one sketched quadratic form.
    QfClt {
        #[arg(long)]
        family: String,
        #[arg(long, default_value_t = 4096)]
        n: usize,
        #[arg(long, default_value_t = 1024)]
        m: usize,
        /// delocalized, localized, angle:THETA or srht-counterexample.
        #[arg(long, default_value = "delocalized")]
        pair: String,
        #[arg(long, default_value_t = 5000)]
        trials: usize,
    },
    /// Median sketch and solve times on a simulated design.
    Bench {
        #[arg(long, default_value_t = 1)]
        case: u8,
        #[arg(long, default_value_t = 2048)]
        n: usize,
        #[arg(long, default_value_t = 15)]
        p: usize,
        /// Comma-separated sketch sizes.
        #[arg(long, default_value = "800", value_delimiter = ',')]
        m_grid: Vec<usize>,
        /// Comma-separated families.
        #[arg(long, default_value = "countsketch,sse:8,srht,iid-gaussian", value_delimiter = ',')]
        families: Vec<String>,
        #[arg(long, default_value_t = 20)]
        reps: usize,
    },
    /// Leverage and delocalization summaries of a design.
    Diagnose {
        #[command(flatten)]
        data: DataArgs,
    },
}

struct Ctx {
    format: Format,
    out: Option<PathBuf>,
    seed: Option<u64>,
    threads: usize,
    meta: bool,
}

impl Ctx {
    fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::ConfigInvalid("--seed is required for randomized commands".into()))
    }

    fn emit<R: Tabular>(&self, report: &R, command: &str, config: Value) -> Result<()> {
        let meta = self.meta.then(|| Meta::new(command, config));
        emit_report(report, self.format, self.out.as_deref(), meta.as_ref())
    }
}

fn load_data(args: &DataArgs, ctx: &Ctx, default_y: Option<&str>) -> Result<(DataMatrix, Value)> {
    match (&args.csv, args.case) {
        (Some(path), None) => {
            let y = args.y_col.as_deref().or(default_y).filter(|s| *s != "none").map(YColumn::parse);
            let d = load_csv(path, !args.no_header, y.as_ref())?;
            let echo = json!({
                "csv": path.display().to_string(),
                "has_header": !args.no_header,
                "y_col": y.as_ref().map(YColumn::label),
            });
            Ok((d, echo))
        }
        (None, Some(case)) => {
            let seed = match args.data_seed {
                Some(s) => s,
                None => ctx.seed()?,
            };
            if !(1..=3).contains(&case) {
                return Err(Error::InvalidArgument(format!("--case must be 1, 2 or 3, got {case}")));
            }
            let cc = CaseConfig::new(case, args.n, args.p, seed);
            let d = cc.generate()?;
            Ok((d, json!({ "case": case, "n": args.n, "p": args.p, "seed": seed })))
        }
        _ => Err(Error::InvalidArgument("give exactly one of --csv or --case".into())),
    }
}

#[derive(Serialize)]
struct SketchReport {
    family: String,
    m: usize,
    m_eff: usize,
    n: usize,
    gamma: f64,
    tau: f64,
    xs: Vec<Vec<f64>>,
    ys: Option<Vec<f64>>,
}

impl Tabular for SketchReport {
    fn header(&self) -> Vec<String> {
        let p = self.xs.first().map_or(0, Vec::len);
        let mut h: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
        if self.ys.is_some() {
            h.push("y".into());
        }
        h
    }

    fn rows(&self) -> Vec<Vec<Field>> {
        self.xs
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut r: Vec<Field> = row.iter().map(|&v| v.into()).collect();
                if let Some(ys) = &self.ys {
                    r.push(ys[i].into());
                }
                r
            })
            .collect()
    }
}

#[derive(Serialize)]
struct LsRow {
    coord: usize,
    estimate: f64,
    std_error: f64,
    lower: f64,
    upper: f64,
}

#[derive(Serialize)]
struct LsReport {
    family: String,
    m: usize,
    m_eff: usize,
    estimator: String,
    covariance: String,
    level: f64,
    coefficients: Vec<LsRow>,
}

impl Tabular for LsReport {
    fn header(&self) -> Vec<String> {
        columns(&["coord", "estimate", "std_error", "lower", "upper"])
    }

    fn rows(&self) -> Vec<Vec<Field>> {
        self.coefficients
            .iter()
            .map(|r| vec![r.coord.into(), r.estimate.into(), r.std_error.into(), r.lower.into(), r.upper.into()])
            .collect()
    }
}

#[derive(Serialize)]
struct PcaRow {
    index: usize,
    eigenvalue: f64,
    eigenvalue_lower: Option<f64>,
    eigenvalue_upper: Option<f64>,
    direction_estimate: f64,
    direction_lower: Option<f64>,
    direction_upper: Option<f64>,
    /// Error code when an interval is unavailable.
    note: Option<String>,
}

#[derive(Serialize)]
struct PcaReport {
    family: String,
    m: usize,
    m_eff: usize,
    variance_mode: String,
    level: f64,
    direction: usize,
    components: Vec<PcaRow>,
    warnings: Vec<String>,
}

impl Tabular for PcaReport {
    fn header(&self) -> Vec<String> {
        columns(&[
            "index",
            "eigenvalue",
            "eigenvalue_lower",
            "eigenvalue_upper",
            "direction_estimate",
            "direction_lower",
            "direction_upper",
            "note",
        ])
    }

    fn rows(&self) -> Vec<Vec<Field>> {
        self.components
            .iter()
            .map(|r| {
                vec![
                    r.index.into(),
                    r.eigenvalue.into(),
                    r.eigenvalue_lower.into(),
                    r.eigenvalue_upper.into(),
                    r.direction_estimate.into(),
                    r.direction_lower.into(),
                    r.direction_upper.into(),
                    r.note.clone().into(),
                ]
            })
            .collect()
    }
}

fn sketch_echo(data: Value, sketch: &SketchArgs, seed: u64) -> Value {
    json!({ "data": data, "family": sketch.family, "m": sketch.m, "seed": seed })
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx {
        format: Format::parse(&cli.format)?,
        out: cli.out,
        seed: cli.seed,
        threads: cli.threads,
        meta: !cli.no_meta,
    };
    match cli.command {
        Command::Sketch { data, sketch } => {
            let seed = ctx.seed()?;
            let (d, echo) = load_data(&data, &ctx, None)?;
            let sk = apply(&SketchSpec::new(Family::parse(&sketch.family)?, sketch.m, seed), &d)?;
            let report = SketchReport {
                family: sk.family.label(),
                m: sk.m_nominal,
                m_eff: sk.m_eff,
                n: sk.n,
                gamma: sk.gamma,
                tau: sk.tau,
                xs: sk.xs.row_iter().map(|r| r.iter().copied().collect()).collect(),
                ys: sk.ys.as_ref().map(|y| y.iter().copied().collect()),
            };
            ctx.emit(&report, "sketch", sketch_echo(echo, &sketch, seed))
        }
        Command::Ls {
            data,
            sketch,
            partial,
            cov,
            level,
        } => {
            let seed = ctx.seed()?;
            let (d, echo) = load_data(&data, &ctx, Some("last"))?;
            if d.y().is_none() {
                return Err(Error::InvalidArgument("least squares needs a response column (--y-col)".into()));
            }
            let covariance = match cov.as_deref() {
                None => None,
                Some("simple") => Some(CovarianceKind::Simple),
                Some("partial") => Some(CovarianceKind::Partial),
                Some("sandwich") => Some(CovarianceKind::Sandwich),
                Some(other) => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown covariance `{other}`; expected simple, partial or sandwich"
                    )))
                }
            };
            let kind = if partial { EstimatorKind::Partial } else { EstimatorKind::Complete };
            let sk = apply(&SketchSpec::new(Family::parse(&sketch.family)?, sketch.m, seed), &d)?;
            let xty = d.xty();
            let res = ls_inference(&sk, kind, xty.as_ref(), covariance, level)?;
            let report = LsReport {
                family: sk.family.label(),
                m: sk.m_nominal,
                m_eff: sk.m_eff,
                estimator: format!("{kind:?}").to_lowercase(),
                covariance: format!("{:?}", res.covariance).to_lowercase(),
                level,
                coefficients: res
                    .cis
                    .iter()
                    .enumerate()
                    .map(|(j, ci)| LsRow {
                        coord: j + 1,
                        estimate: res.beta_hat[j],
                        std_error: (res.scale * res.sigma_hat[(j, j)]).sqrt(),
                        lower: ci.lower,
                        upper: ci.upper,
                    })
                    .collect(),
            };
            let mut cfg = sketch_echo(echo, &sketch, seed);
            cfg["partial"] = json!(partial);
            cfg["level"] = json!(level);
            ctx.emit(&report, "ls", cfg)
        }
        Command::Pca {
            data,
            sketch,
            level,
            oracle,
            direction,
        } => {
            let seed = ctx.seed()?;
            let (d, echo) = load_data(&data, &ctx, None)?;
            let family = Family::parse(&sketch.family)?;
            let p = d.p();
            if !(1..=p).contains(&direction) {
                return Err(Error::InvalidArgument(format!("--direction must lie in 1..={p}")));
            }
            let sk = apply(&SketchSpec::new(family.clone(), sketch.m, seed), &d.without_response())?;
            let g = if oracle {
                let svd = sketchinf::linalg::thin_svd(d.x())?;
                full_data_gform(&family, &svd.u)?
            } else {
                None
            };
            let res = pca_inference(&sk, g, level)?;
            for w in &res.warnings {
                eprintln!("warning: {w}");
            }
            let c = DVector::from_fn(p, |i, _| (i + 1 == direction) as u8 as f64);
            let components = (0..p)
                .map(|i| {
                    let ev = res.eigenvalue_ci(i, level);
                    let vc = res.eigenvector_ci(i, &c, level);
                    let note = match (&ev, &vc) {
                        (Err(e), _) | (Ok(_), Err(e)) => Some(e.code().to_string()),
                        _ => None,
                    };
                    PcaRow {
                        index: i + 1,
                        eigenvalue: res.lambdas_hat[i],
                        eigenvalue_lower: ev.as_ref().ok().map(|ci| ci.lower),
                        eigenvalue_upper: ev.as_ref().ok().map(|ci| ci.upper),
                        direction_estimate: res.vectors_hat[(direction - 1, i)],
                        direction_lower: vc.as_ref().ok().map(|ci| ci.lower),
                        direction_upper: vc.as_ref().ok().map(|ci| ci.upper),
                        note,
                    }
                })
                .collect();
            let report = PcaReport {
                family: sk.family.label(),
                m: sk.m_nominal,
                m_eff: sk.m_eff,
                variance_mode: format!("{:?}", res.variance_mode),
                level,
                direction,
                components,
                warnings: res.warnings.clone(),
            };
            let mut cfg = sketch_echo(echo, &sketch, seed);
            cfg["oracle"] = json!(oracle);
            cfg["level"] = json!(level);
            ctx.emit(&report, "pca", cfg)
        }
        Command::McCoverage { config } => {
            let cfg = parse_config(&config)?;
            let report = with_threads(ctx.threads, || run_coverage(&cfg))??;
            ctx.emit(&report, "mc-coverage", config_to_json(&cfg))
        }
        Command::McVariance { config } => {
            let cfg = parse_config(&config)?;
            let report = with_threads(ctx.threads, || run_variance(&cfg))??;
            ctx.emit(&report, "mc-variance", config_to_json(&cfg))
        }
        Command::QfClt {
            family,
            n,
            m,
            pair,
            trials,
        } => {
            let cfg = QfConfig {
                family: Family::parse(&family)?,
                n,
                m,
                pair: parse_pair(&pair)?,
                trials,
                seed: ctx.seed()?,
            };
            let report = with_threads(ctx.threads, || run_qf_clt(&cfg))??;
            let echo = json!({ "family": family, "n": n, "m": m, "pair": pair, "trials": trials, "seed": cfg.seed });
            ctx.emit(&report, "qf-clt", echo)
        }
        Command::Bench {
            case,
            n,
            p,
            m_grid,
            families,
            reps,
        } => {
            let seed = ctx.seed()?;
            let cfg = BenchConfig {
                data: CaseConfig::new(case, n, p, seed),
                families: families.iter().map(|f| Family::parse(f)).collect::<Result<_>>()?,
                m_grid: m_grid.clone(),
                reps,
                seed,
            };
            let report = run_bench(&cfg)?;
            let echo = json!({ "case": case, "n": n, "p": p, "m_grid": m_grid, "families": families, "reps": reps, "seed": seed });
            ctx.emit(&report, "bench", echo)
        }
        Command::Diagnose { data } => {
            let (d, echo) = load_data(&data, &ctx, None)?;
            let report = delocalization_report(d.x(), d.y())?;
            ctx.emit(&report, "diagnose", json!({ "data": echo }))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                // a closed pipe (`sketchinf --help | head`) is not an error
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), e.to_string().replace('\n', " "));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
