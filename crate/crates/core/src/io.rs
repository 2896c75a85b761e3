//! CSV ingestion, JSON experiment configs and report emission.
//!
//! Numbers are written in the shortest decimal form that parses back to the
//! same `f64`, identically in CSV and JSON.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::datagen::CaseConfig;
use crate::error::{Error, Result};
use crate::harness::{
    BenchReport, CoverageReport, DataSource, DelocalizationReport, ExperimentConfig, QfReport, Target,
    VarianceReport, DEFAULT_LEVEL, DEFAULT_TRIALS, MIN_TRIALS,
};
use crate::linalg::DataMatrix;
use crate::sketch::{Family, FAMILY_NAMES};

/// Which column of a CSV file holds the response.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YColumn {
    Last,
    /// 1-based column number.
    Index(usize),
    /// Header name; needs a header row.
    Name(String),
}

impl YColumn {
    /// `last`, a 1-based column number, or a header name.
    pub fn parse(s: &str) -> YColumn {
        match s {
            "last" => YColumn::Last,
            _ => match s.parse::<usize>() {
                Ok(k) => YColumn::Index(k),
                Err(_) => YColumn::Name(s.to_string()),
            },
        }
    }

    pub fn label(&self) -> String {
        match self {
            YColumn::Last => "last".into(),
            YColumn::Index(k) => k.to_string(),
            YColumn::Name(s) => s.clone(),
        }
    }
}

/// Reads a numeric CSV into a [`DataMatrix`]. Row and column numbers in
/// errors are 1-based and count the header line.
pub fn load_csv(path: &Path, has_header: bool, y_col: Option<&YColumn>) -> Result<DataMatrix> {
    let file = std::fs::File::open(path)?;
    read_csv(file, has_header, y_col)
}

pub fn read_csv(reader: impl std::io::Read, has_header: bool, y_col: Option<&YColumn>) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let offset = has_header as usize;
    let headers: Option<Vec<String>> = if has_header {
        Some(rdr.headers().map_err(|e| csv_error(e, 1))?.iter().map(str::to_string).collect())
    } else {
        None
    };
    let mut width = headers.as_ref().map(Vec::len);
    let mut values = Vec::new();
    let mut rows = 0usize;
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 1 + offset;
        let rec = rec.map_err(|e| csv_error(e, line))?;
        let expected = *width.get_or_insert(rec.len());
        if rec.len() != expected {
            return Err(Error::RaggedRows {
                row: line,
                expected,
                found: rec.len(),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(Error::NonNumericCell {
                        row: line,
                        col: j + 1,
                        value: cell.to_string(),
                    })
                }
            }
        }
        rows += 1;
    }
    let q = width.unwrap_or(0);
    if rows == 0 || q == 0 {
        return Err(Error::ParseError {
            row: 1 + offset,
            col: 1,
            message: "no data rows".into(),
        });
    }
    let full = DMatrix::from_row_slice(rows, q, &values);
    let Some(yc) = y_col else {
        return DataMatrix::new(full, None);
    };
    let idx = match yc {
        YColumn::Last => q - 1,
        YColumn::Index(k) if (1..=q).contains(k) => k - 1,
        YColumn::Index(k) => {
            return Err(Error::InvalidArgument(format!("y column {k} out of range 1..={q}")));
        }
        YColumn::Name(name) => headers
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == name))
            .ok_or_else(|| Error::InvalidArgument(format!("no header column named `{name}`")))?,
    };
    if q < 2 {
        return Err(Error::BadShape("a response column needs at least one other column".into()));
    }
    let y: DVector<f64> = full.column(idx).into_owned();
    DataMatrix::new(full.remove_column(idx), Some(y))
}

fn csv_error(e: csv::Error, line: usize) -> Error {
    let (row, col) = match e.position() {
        Some(p) => (p.line() as usize, 1),
        None => (line, 1),
    };
    Error::ParseError {
        row,
        col,
        message: e.to_string(),
    }
}

/// Shortest round-trip text for a float; `NaN`/`inf` for non-finite values.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        serde_json::Number::from_f64(x).expect("finite").to_string()
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// One CSV cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Field {
    Str(String),
    Int(u64),
    Float(f64),
    Missing,
}

impl From<&str> for Field {
    fn from(s: &str) -> Self {
        Field::Str(s.into())
    }
}
impl From<String> for Field {
    fn from(s: String) -> Self {
        Field::Str(s)
    }
}
impl From<usize> for Field {
    fn from(v: usize) -> Self {
        Field::Int(v as u64)
    }
}
impl From<u64> for Field {
    fn from(v: u64) -> Self {
        Field::Int(v)
    }
}
impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Float(v)
    }
}
impl<T: Into<Field>> From<Option<T>> for Field {
    fn from(v: Option<T>) -> Self {
        v.map_or(Field::Missing, Into::into)
    }
}

impl Field {
    fn render(&self) -> String {
        let s = match self {
            Field::Str(s) => s.clone(),
            Field::Int(v) => v.to_string(),
            Field::Float(v) => format_f64(*v),
            Field::Missing => String::new(),
        };
        if s.contains([',', '"', '\n']) {
            format!("\"{}\"", s.replace('"', "\"\""))
        } else {
            s
        }
    }
}

pub fn columns(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// A report with a flat CSV form. The JSON form is the serde serialization.
pub trait Tabular: Serialize {
    fn header(&self) -> Vec<String>;
    fn rows(&self) -> Vec<Vec<Field>>;
    /// Extra `#` lines after the table, part of the data rather than metadata.
    fn footer(&self) -> Vec<String> {
        Vec::new()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Result<Format> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::InvalidArgument(format!("unknown format `{s}`; expected csv or json"))),
        }
    }
}

/// Provenance written ahead of a report unless disabled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub generated_at: String,
    pub command: String,
    pub config: Value,
}

impl Meta {
    pub fn new(command: impl Into<String>, config: Value) -> Self {
        Meta {
            tool: "sketchinf".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            generated_at: utc_timestamp(SystemTime::now()),
            command: command.into(),
            config,
        }
    }
}

/// RFC 3339 UTC timestamp, seconds precision.
pub fn utc_timestamp(t: SystemTime) -> String {
    let secs = t.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0) as i64;
    let (days, rem) = (secs.div_euclid(86_400), secs.rem_euclid(86_400));
    // days-to-civil conversion for the proleptic Gregorian calendar
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = doy - (153 * mp + 2) / 5 + 1;
    let month = if mp < 10 { mp + 3 } else { mp - 9 };
    let year = yoe + era * 400 + (month <= 2) as i64;
    format!(
        "{year:04}-{month:02}-{day:02}T{:02}:{:02}:{:02}Z",
        rem / 3600,
        rem % 3600 / 60,
        rem % 60
    )
}

/// Renders a report as text.
pub fn render_report<R: Tabular>(report: &R, format: Format, meta: Option<&Meta>) -> Result<String> {
    match format {
        Format::Csv => {
            let mut out = String::new();
            if let Some(m) = meta {
                writeln!(out, "# tool: {} {}", m.tool, m.version).unwrap();
                writeln!(out, "# generated_at: {}", m.generated_at).unwrap();
                writeln!(out, "# command: {}", m.command).unwrap();
                writeln!(out, "# config: {}", m.config).unwrap();
            }
            out.push_str(&report.header().join(","));
            out.push('\n');
            for row in report.rows() {
                let cells: Vec<String> = row.iter().map(Field::render).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            for line in report.footer() {
                writeln!(out, "# {line}").unwrap();
            }
            Ok(out)
        }
        Format::Json => {
            let mut value = serde_json::to_value(report).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            if let (Some(m), Value::Object(obj)) = (meta, &mut value) {
                let mut with_meta = Map::new();
                with_meta.insert("meta".into(), serde_json::to_value(m).expect("plain data"));
                with_meta.append(obj);
                value = Value::Object(with_meta);
            }
            let mut s = serde_json::to_string_pretty(&value).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
    }
}

/// Writes a report to `path`, or to stdout when `path` is `None`.
pub fn emit_report<R: Tabular>(report: &R, format: Format, path: Option<&Path>, meta: Option<&Meta>) -> Result<()> {
    let text = render_report(report, format, meta)?;
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                r => r?,
            }
        }
    }
    Ok(())
}

impl Tabular for CoverageReport {
    fn header(&self) -> Vec<String> {
        columns(&[
            "family", "m", "target", "hits", "trials", "coverage", "cp_lower", "cp_upper", "mean_width", "failures",
        ])
    }

    fn rows(&self) -> Vec<Vec<Field>> {
        self.cells
            .iter()
            .map(|c| {
                vec![
                    c.family.clone().into(),
                    c.m.into(),
                    c.target.clone().into(),
                    c.hits.into(),
                    c.trials.into(),
                    c.coverage.into(),
                    c.cp_lower.into(),
                    c.cp_upper.into(),
                    c.mean_width.into(),
                    c.failures.into(),
                ]
            })
            .collect()
    }
}

impl Tabular for VarianceReport {
    fn header(&self) -> Vec<String> {
        columns(&[
            "family", "m", "target", "gamma", "empirical", "theoretical", "ratio", "samples", "failures",
        ])
    }

    fn rows(&self) -> Vec<Vec<Field>> {
        self.cells
            .iter()
            .map(|c| {
                vec![
                    c.family.clone().into(),
                    c.m.into(),
                    c.target.clone().into(),
                    c.gamma.into(),
                    c.empirical.into(),
                    c.theoretical.into(),
                    c.ratio.into(),
                    c.samples.into(),
                    c.failures.into(),
                ]
            })
            .collect()
    }

    fn footer(&self) -> Vec<String> {
        if self.trends.is_empty() {
            return Vec::new();
        }
        let mut lines = vec!["trend,family,target,slope,intercept,r_squared,points".to_string()];
        for t in &self.trends {
            lines.push(format!(
                "trend,{},{},{},{},{},{}",
                t.family,
                t.target,
                format_f64(t.slope),
                format_f64(t.intercept),
                format_f64(t.r_squared),
                t.points
            ));
        }
        lines
    }
}

impl Tabular for QfReport {
    fn header(&self) -> Vec<String> {
        columns(&[
            "family",
            "n",
            "m",
            "pair",
            "trials",
            "inner_product",
            "sigma2",
            "mean",
            "variance",
            "raw_variance",
            "ks_statistic",
            "ks_p_value",
            "zero_fraction",
            "distinct_values",
        ])
    }

    fn rows(&self) -> Vec<Vec<Field>> {
        vec![vec![
            self.family.clone().into(),
            self.n.into(),
            self.m.into(),
            self.pair.clone().into(),
            self.trials.into(),
            self.inner_product.into(),
            self.sigma2.into(),
            self.mean.into(),
            self.variance.into(),
            self.raw_variance.into(),
            self.ks_statistic.into(),
            self.ks_p_value.into(),
            self.zero_fraction.into(),
            self.distinct_values.into(),
        ]]
    }
}

impl Tabular for BenchReport {
    fn header(&self) -> Vec<String> {
        columns(&["family", "n", "p", "m", "reps", "build_median_s", "total_median_s"])
    }

    fn rows(&self) -> Vec<Vec<Field>> {
        self.cells
            .iter()
            .map(|c| {
                vec![
                    c.family.clone().into(),
                    self.n.into(),
                    self.p.into(),
                    c.m.into(),
                    c.reps.into(),
                    c.build_median_s.into(),
                    c.total_median_s.into(),
                ]
            })
            .collect()
    }
}

impl Tabular for DelocalizationReport {
    fn header(&self) -> Vec<String> {
        columns(&["n", "p", "max_leverage", "l4_mass", "max_residual", "max_fitted", "flags"])
    }

    fn rows(&self) -> Vec<Vec<Field>> {
        let flags: Vec<&str> = self.flags.iter().map(|f| f.condition.as_str()).collect();
        vec![vec![
            self.n.into(),
            self.p.into(),
            self.max_leverage.into(),
            self.l4_mass.into(),
            self.max_residual.into(),
            self.max_fitted.into(),
            flags.join(";").into(),
        ]]
    }

    fn footer(&self) -> Vec<String> {
        self.flags
            .iter()
            .map(|f| {
                format!(
                    "flag,{},{},{},{}",
                    f.condition,
                    format_f64(f.value),
                    format_f64(f.threshold),
                    f.affects.join(";")
                )
            })
            .collect()
    }
}

const CONFIG_KEYS: &[&str] = &["data", "families", "m_grid", "trials", "targets", "level", "seed"];

fn schema(key: impl Into<String>, message: impl Into<String>) -> Error {
    Error::SchemaError {
        key: key.into(),
        message: message.into(),
    }
}

fn get_u64(v: &Value, key: &str) -> Result<u64> {
    v.as_u64().ok_or_else(|| schema(key, "expected a non-negative integer"))
}

fn get_usize(v: &Value, key: &str) -> Result<usize> {
    get_u64(v, key).and_then(|x| usize::try_from(x).map_err(|_| schema(key, "integer too large")))
}

fn parse_data(v: &Value, master_seed: u64) -> Result<DataSource> {
    let obj = v.as_object().ok_or_else(|| schema("data", "expected an object"))?;
    if obj.contains_key("csv") {
        for k in obj.keys() {
            if !["csv", "has_header", "y_col"].contains(&k.as_str()) {
                return Err(schema(format!("data.{k}"), "unknown key; csv data takes csv, has_header, y_col"));
            }
        }
        let path = obj["csv"].as_str().ok_or_else(|| schema("data.csv", "expected a path string"))?;
        let has_header = match obj.get("has_header") {
            None => true,
            Some(b) => b.as_bool().ok_or_else(|| schema("data.has_header", "expected a boolean"))?,
        };
        let y_col = match obj.get("y_col") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(YColumn::parse(s)),
            Some(n @ Value::Number(_)) => Some(YColumn::Index(get_usize(n, "data.y_col")?)),
            Some(_) => return Err(schema("data.y_col", "expected \"last\", a column number or a header name")),
        };
        return Ok(DataSource::Csv {
            path: PathBuf::from(path),
            has_header,
            y_col,
        });
    }
    for k in obj.keys() {
        if !["case", "n", "p", "seed", "noise_sd"].contains(&k.as_str()) {
            return Err(schema(format!("data.{k}"), "unknown key; case data takes case, n, p, seed, noise_sd"));
        }
    }
    let need = |k: &str| obj.get(k).ok_or_else(|| schema(format!("data.{k}"), "missing"));
    let case = get_u64(need("case")?, "data.case")?;
    if !(1..=3).contains(&case) {
        return Err(schema("data.case", "expected 1, 2 or 3"));
    }
    let mut cc = CaseConfig::new(
        case as u8,
        get_usize(need("n")?, "data.n")?,
        get_usize(need("p")?, "data.p")?,
        match obj.get("seed") {
            Some(s) => get_u64(s, "data.seed")?,
            None => master_seed,
        },
    );
    if let Some(s) = obj.get("noise_sd") {
        cc.noise_sd = s
            .as_f64()
            .filter(|x| x.is_finite() && *x >= 0.0)
            .ok_or_else(|| schema("data.noise_sd", "expected a non-negative number"))?;
    }
    Ok(DataSource::Case(cc))
}

/// Parses and validates an experiment config. CSV data is read to check `m_grid` against its shape.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let root: Value = serde_json::from_str(text).map_err(|e| schema("$", e.to_string()))?;
    let obj = root.as_object().ok_or_else(|| schema("$", "expected a JSON object"))?;
    if let Some(k) = obj.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
        return Err(schema(k.clone(), format!("unknown key; allowed keys are {}", CONFIG_KEYS.join(", "))));
    }
    let seed = get_u64(obj.get("seed").ok_or_else(|| schema("seed", "missing"))?, "seed")?;
    let data = parse_data(obj.get("data").ok_or_else(|| schema("data", "missing"))?, seed)?;

    let list = |key: &str| -> Result<&Vec<Value>> {
        let v = obj.get(key).ok_or_else(|| schema(key, "missing"))?;
        let arr = v.as_array().ok_or_else(|| schema(key, "expected an array"))?;
        if arr.is_empty() {
            return Err(schema(key, "must not be empty"));
        }
        Ok(arr)
    };
    let families = list("families")?
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let key = format!("families[{i}]");
            let s = f.as_str().ok_or_else(|| schema(&key, "expected a string"))?;
            Family::parse(s).map_err(|_| {
                schema(&key, format!("unknown family `{s}`; allowed: {}", FAMILY_NAMES.join(", ")))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let m_grid = list("m_grid")?
        .iter()
        .map(|m| get_usize(m, "m_grid"))
        .collect::<Result<Vec<_>>>()?;
    let targets = list("targets")?
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let key = format!("targets[{i}]");
            let s = t.as_str().ok_or_else(|| schema(&key, "expected a string"))?;
            Target::parse(s).map_err(|e| schema(&key, e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let trials = match obj.get("trials") {
        Some(t) => get_usize(t, "trials")?,
        None => DEFAULT_TRIALS,
    };
    if trials < MIN_TRIALS {
        return Err(schema("trials", format!("must be at least {MIN_TRIALS}")));
    }
    let level = match obj.get("level") {
        Some(l) => l.as_f64().ok_or_else(|| schema("level", "expected a number"))?,
        None => DEFAULT_LEVEL,
    };
    if !(level > 0.0 && level < 1.0) {
        return Err(schema("level", "must lie in (0, 1)"));
    }
    if m_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(schema("m_grid", "must be strictly increasing"));
    }
    let (n, p, has_y) = match &data {
        DataSource::Case(c) => (c.n, c.p, true),
        DataSource::Csv { .. } => {
            let d = data.load()?;
            (d.n(), d.p(), d.y().is_some())
        }
    };
    if let Some(m) = m_grid.iter().find(|&&m| m <= p || m >= n) {
        return Err(schema("m_grid", format!("m = {m} must lie strictly between p = {p} and n = {n}")));
    }
    for (i, t) in targets.iter().enumerate() {
        let single = ExperimentConfig {
            data: data.clone(),
            families: families.clone(),
            m_grid: m_grid.clone(),
            trials,
            targets: vec![*t],
            level,
            seed,
        };
        if let Err(e) = single.validate(n, p, has_y) {
            return Err(schema(format!("targets[{i}]"), e.to_string()));
        }
    }
    Ok(ExperimentConfig {
        data,
        families,
        m_grid,
        trials,
        targets,
        level,
        seed,
    })
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config_str(&std::fs::read_to_string(path)?)
}

/// The config with defaults filled in, as echoed in report metadata.
pub fn config_to_json(cfg: &ExperimentConfig) -> Value {
    let data = match &cfg.data {
        DataSource::Case(c) => serde_json::json!({
            "case": c.case, "n": c.n, "p": c.p, "seed": c.seed, "noise_sd": c.noise_sd,
        }),
        DataSource::Csv { path, has_header, y_col } => serde_json::json!({
            "csv": path.display().to_string(),
            "has_header": has_header,
            "y_col": y_col.as_ref().map(YColumn::label),
        }),
    };
    serde_json::json!({
        "data": data,
        "families": cfg.families.iter().map(Family::label).collect::<Vec<_>>(),
        "m_grid": cfg.m_grid,
        "trials": cfg.trials,
        "targets": cfg.targets.iter().map(Target::to_string).collect::<Vec<_>>(),
        "level": cfg.level,
        "seed": cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::CoverageCell;

    #[test]
    fn reads_plain_matrix() {
        let d = read_csv("1,2\n3,4\n".as_bytes(), false, None).unwrap();
        assert_eq!(d.x(), &DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert!(d.y().is_none());
    }

    #[test]
    fn splits_last_column() {
        let d = read_csv("a,b,c\n1,2,3\n4,5,6\n7,8,10\n".as_bytes(), true, Some(&YColumn::Last)).unwrap();
        assert_eq!(d.p(), 2);
        assert_eq!(d.y().unwrap().as_slice(), &[3.0, 6.0, 10.0]);
        let d = read_csv("a,b,c\n1,2,3\n4,5,6\n7,8,10\n".as_bytes(), true, Some(&YColumn::parse("a"))).unwrap();
        assert_eq!(d.y().unwrap().as_slice(), &[1.0, 4.0, 7.0]);
    }

    #[test]
    fn error_locations() {
        match read_csv("1,2\n3,NaN\n".as_bytes(), false, None) {
            Err(Error::NonNumericCell { row, col, value }) => assert_eq!((row, col, value.as_str()), (2, 2, "NaN")),
            other => panic!("{other:?}"),
        }
        match read_csv("x,y\n1,2\n3\n".as_bytes(), true, None) {
            Err(Error::RaggedRows { row, expected, found }) => assert_eq!((row, expected, found), (3, 2, 1)),
            other => panic!("{other:?}"),
        }
        match read_csv("1,abc\n".as_bytes(), false, None) {
            Err(Error::NonNumericCell { row: 1, col: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_csv("".as_bytes(), false, None), Err(Error::ParseError { .. })));
        assert!(matches!(
            read_csv(&b"1,\xff\n"[..], false, None),
            Err(Error::ParseError { row: 1, .. }) | Err(Error::NonNumericCell { .. })
        ));
    }

    #[test]
    fn shortest_round_trip_numbers() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5e17, 0.95] {
            assert_eq!(format_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(format_f64(0.1), "0.1");
        assert_eq!(format_f64(f64::NAN), "NaN");
    }

    #[test]
    fn timestamp_known_dates() {
        let at = |s: u64| utc_timestamp(UNIX_EPOCH + std::time::Duration::from_secs(s));
        assert_eq!(at(0), "1970-01-01T00:00:00Z");
        assert_eq!(at(951_782_400), "2000-02-29T00:00:00Z");
        assert_eq!(at(1_700_000_000), "2023-11-14T22:13:20Z");
    }

    fn one_cell() -> CoverageReport {
        CoverageReport {
            level: 0.95,
            cells: vec![CoverageCell {
                family: "srht".into(),
                m: 800,
                target: "eig:1".into(),
                hits: 470,
                trials: 500,
                coverage: Some(470.0 / 497.0),
                cp_lower: Some(0.92),
                cp_upper: Some(0.96),
                mean_width: Some(0.1),
                failures: 3,
            }],
        }
    }

    #[test]
    fn csv_one_cell_has_two_lines() {
        let text = render_report(&one_cell(), Format::Csv, None).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "family,m,target,hits,trials,coverage,cp_lower,cp_upper,mean_width,failures");
        let f: Vec<&str> = lines[1].split(',').collect();
        let (hits, trials, failures): (f64, f64, f64) = (f[3].parse().unwrap(), f[4].parse().unwrap(), f[9].parse().unwrap());
        assert_eq!(f[5].parse::<f64>().unwrap(), hits / (trials - failures));
    }

    #[test]
    fn json_round_trip() {
        let r = one_cell();
        let meta = Meta::new("mc-coverage", Value::Null);
        let text = render_report(&r, Format::Json, Some(&meta)).unwrap();
        let back: CoverageReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["meta"]["tool"], "sketchinf");
    }

    const MINIMAL: &str = r#"{"data": {"case": 1, "n": 2048, "p": 15}, "families": ["srht"],
        "m_grid": [800], "targets": ["eig:1"], "seed": 7}"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str(MINIMAL).unwrap();
        assert_eq!(c.trials, 500);
        assert_eq!(c.level, 0.95);
        assert_eq!(c.seed, 7);
        assert_eq!(c.targets, vec![Target::Eig(1)]);
        let echo = config_to_json(&c);
        assert_eq!(echo["trials"], 500);
        assert_eq!(parse_config_str(&echo.to_string()).unwrap().m_grid, c.m_grid);
    }

    fn key_of(r: Result<ExperimentConfig>) -> String {
        match r {
            Err(Error::SchemaError { key, message }) => format!("{key}: {message}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schema_errors_name_the_key() {
        assert!(key_of(parse_config_str(&MINIMAL.replace("[800]", "[2048]"))).starts_with("m_grid"));
        assert!(key_of(parse_config_str(&MINIMAL.replace("[800]", "[800, 400]"))).starts_with("m_grid"));
        let e = key_of(parse_config_str(&MINIMAL.replace("\"srht\"", "\"fft\"")));
        assert!(e.starts_with("families[0]") && e.contains("countsketch"), "{e}");
        assert!(key_of(parse_config_str(&MINIMAL.replace("\"seed\"", "\"sed\""))).starts_with("sed"));
        assert!(key_of(parse_config_str(&MINIMAL.replace("eig:1", "eig:16"))).starts_with("targets[0]"));
        let e = key_of(parse_config_str(&MINIMAL.replace("\"seed\": 7", "\"seed\": 7, \"trials\": 10")));
        assert!(e.starts_with("trials"));
    }

    #[test]
    fn csv_data_config_checks_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let mut s = String::from("a,b,y\n");
        for i in 0..40 {
            writeln!(s, "{},{},{}", i, (i * i) % 7, i % 3).unwrap();
        }
        std::fs::write(&path, s).unwrap();
        let cfg = format!(
            r#"{{"data": {{"csv": {:?}, "y_col": "last"}}, "families": ["sse:2"], "m_grid": [10, 20],
               "targets": ["ls:1"], "trials": 50, "seed": 1}}"#,
            path.display().to_string()
        );
        let c = parse_config_str(&cfg).unwrap();
        assert_eq!(c.data.load().unwrap().p(), 2);
        assert!(key_of(parse_config_str(&cfg.replace("[10, 20]", "[10, 40]"))).starts_with("m_grid"));
    }
}
