//! CSV ingestion, state-variable construction and the 30/30/40 split.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::series::{Series, SeriesView};

/// Columns read from a CSV file, all numeric except the optional time
/// column.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub columns: Vec<String>,
    /// Column-major values, one vector per entry of `columns`.
    pub values: Vec<Vec<f64>>,
    pub time: Option<Vec<String>>,
    /// SHA-256 of the file bytes, hex encoded.
    pub sha256: String,
}

impl RawTable {
    pub fn len(&self) -> usize {
        self.values.first().map_or_else(|| self.time.as_ref().map_or(0, Vec::len), Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .iter()
            .position(|c| c == name)
            .map(|i| self.values[i].as_slice())
            .ok_or_else(|| Error::Data(format!("column `{name}` was not loaded")))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Reads `columns` (and `time_column`, if any) from a headed CSV file.
pub fn load_csv(path: &Path, columns: &[String], time_column: Option<&str>) -> Result<RawTable> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut t = parse_csv(&bytes, columns, time_column)?;
    t.sha256 = sha256_hex(&bytes);
    Ok(t)
}

/// Parses CSV text; row numbers in errors are 1-based data rows.
pub fn parse_csv(bytes: &[u8], columns: &[String], time_column: Option<&str>) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let header = rdr.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("missing column `{name}`")))
    };
    let idx: Vec<usize> = columns.iter().map(|c| find(c)).collect::<Result<_>>()?;
    let tidx = time_column.map(find).transpose()?;

    let mut values = vec![Vec::new(); columns.len()];
    let mut time = tidx.map(|_| Vec::new());
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (j, &i) in idx.iter().enumerate() {
            let cell = rec.get(i).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| {
                Error::Data(format!("row {}, column `{}`: non-numeric value `{cell}`", r + 1, columns[j]))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "row {}, column `{}`: missing or non-finite value",
                    r + 1,
                    columns[j]
                )));
            }
            values[j].push(v);
        }
        if let (Some(i), Some(ts)) = (tidx, time.as_mut()) {
            ts.push(rec.get(i).unwrap_or("").to_string());
        }
    }
    if let Some(ts) = &time {
        check_time_order(ts)?;
    }
    Ok(RawTable {
        columns: columns.to_vec(),
        values,
        time,
        sha256: sha256_hex(bytes),
    })
}

/// Timestamps must increase strictly: numerically when every stamp is a
/// number, lexicographically otherwise (ISO dates).
fn check_time_order(ts: &[String]) -> Result<()> {
    let nums: Option<Vec<f64>> = ts.iter().map(|s| s.parse().ok()).collect();
    let bad = match &nums {
        Some(n) => n.windows(2).position(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)),
        None => ts.windows(2).position(|w| w[1] <= w[0]),
    };
    match bad {
        Some(i) => Err(Error::Data(format!(
            "timestamps out of order at row {}: `{}` after `{}`",
            i + 2,
            ts[i + 1],
            ts[i]
        ))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnTransform {
    Lag(usize),
    FirstDifference,
    RollingMean(usize),
    TimeIndex,
}

impl std::str::FromStr for ColumnTransform {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let arg = |prefix: &str| -> Option<Result<usize>> {
            let inner = s.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')')?;
            Some(
                inner
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad argument in transform `{s}`"))),
            )
        };
        if s == "first_difference" {
            return Ok(ColumnTransform::FirstDifference);
        }
        if s == "time_index" {
            return Ok(ColumnTransform::TimeIndex);
        }
        if let Some(n) = arg("lag") {
            return Ok(ColumnTransform::Lag(n?));
        }
        if let Some(w) = arg("rolling_mean") {
            let w = w?;
            if w == 0 {
                return Err(Error::Config("rolling_mean window must be positive".into()));
            }
            return Ok(ColumnTransform::RollingMean(w));
        }
        Err(Error::Config(format!("unknown transform `{s}`")))
    }
}

impl std::fmt::Display for ColumnTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ColumnTransform::Lag(n) => write!(f, "lag({n})"),
            ColumnTransform::FirstDifference => f.write_str("first_difference"),
            ColumnTransform::RollingMean(w) => write!(f, "rolling_mean({w})"),
            ColumnTransform::TimeIndex => f.write_str("time_index"),
        }
    }
}

impl ColumnTransform {
    /// Applies the transform; undefined leading values become NaN.
    pub fn apply(self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        match self {
            ColumnTransform::Lag(k) => (0..n).map(|t| if t >= k { x[t - k] } else { f64::NAN }).collect(),
            ColumnTransform::FirstDifference => {
                (0..n).map(|t| if t >= 1 { x[t] - x[t - 1] } else { f64::NAN }).collect()
            }
            ColumnTransform::RollingMean(w) => {
                let mut out = vec![f64::NAN; n];
                for t in w.saturating_sub(1)..n {
                    out[t] = x[t + 1 - w..=t].iter().sum::<f64>() / w as f64;
                }
                out
            }
            ColumnTransform::TimeIndex => (0..n).map(|t| t as f64).collect(),
        }
    }
}

/// One state variable: a source column passed through transforms in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub name: String,
    /// Source column; may be omitted for `time_index`.
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default)]
    pub transforms: Vec<String>,
}

impl StateSpec {
    pub fn parsed_transforms(&self) -> Result<Vec<ColumnTransform>> {
        self.transforms.iter().map(|s| s.parse()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: String,
    #[serde(default)]
    pub time_column: Option<String>,
    /// One column, or two PIT columns for the copula.
    pub y: Vec<String>,
    #[serde(default)]
    pub proxy: Option<String>,
    #[serde(default)]
    pub state: Vec<StateSpec>,
}

impl DataConfig {
    /// Every column that must be read from the file.
    pub fn source_columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = self.y.clone();
        cols.extend(self.proxy.iter().cloned());
        cols.extend(self.state.iter().filter_map(|s| s.source.clone()));
        let mut seen = std::collections::HashSet::new();
        cols.retain(|c| seen.insert(c.clone()));
        cols
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub estimation_end: usize,
    pub validation_end: usize,
    pub len: usize,
}

impl Splits {
    pub fn estimation(&self) -> Range<usize> {
        0..self.estimation_end
    }
    pub fn validation(&self) -> Range<usize> {
        self.estimation_end..self.validation_end
    }
    pub fn test(&self) -> Range<usize> {
        self.validation_end..self.len
    }
}

/// Boundaries ⌊0.3T⌋ and ⌊0.6T⌋.
pub fn split(t: usize) -> Result<Splits> {
    if t < 10 {
        return Err(Error::Data(format!("{t} usable rows; at least 10 are needed to split")));
    }
    Ok(Splits {
        estimation_end: 3 * t / 10,
        validation_end: 6 * t / 10,
        len: t,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: Series,
    /// State names, in column order of `z`.
    pub names: Vec<String>,
    /// Row-major state matrix; row t holds information dated t−1 or earlier.
    pub z: Vec<Vec<f64>>,
    pub proxy: Option<Vec<f64>>,
    pub time: Option<Vec<String>>,
    pub splits: Splits,
    /// Leading raw rows dropped as warm-up.
    pub warmup: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> SeriesView<'_> {
        self.y.view()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Config(format!("unknown state variable `{name}`")))
    }
}

/// Builds y, the lagged state matrix and the proxy. Every state column is
/// shifted one period after its transforms, so row t only sees data up to
/// t−1; rows whose state is undefined are dropped from the front.
pub fn build_dataset(raw: &RawTable, cfg: &DataConfig) -> Result<Dataset> {
    if cfg.y.is_empty() || cfg.y.len() > 2 {
        return Err(Error::Config(format!("y needs one or two columns, got {}", cfg.y.len())));
    }
    let n = raw.len();
    let mut names = Vec::with_capacity(cfg.state.len());
    let mut cols = Vec::with_capacity(cfg.state.len());
    for s in &cfg.state {
        if names.contains(&s.name) {
            return Err(Error::Config(format!("state variable `{}` defined twice", s.name)));
        }
        let tr = s.parsed_transforms()?;
        let mut x = match &s.source {
            Some(src) => raw.column(src)?.to_vec(),
            None if tr.first() == Some(&ColumnTransform::TimeIndex) => vec![0.0; n],
            None => return Err(Error::Config(format!("state variable `{}` has no source", s.name))),
        };
        for t in tr {
            x = t.apply(&x);
        }
        names.push(s.name.clone());
        cols.push(ColumnTransform::Lag(1).apply(&x));
    }

    // Warm-up: leading rows where any state is undefined. Interior gaps are
    // not imputed.
    let warmup = (0..n)
        .find(|&t| cols.iter().all(|c| !c[t].is_nan()))
        .unwrap_or(n);
    if warmup >= n {
        return Err(Error::Data("no rows left after warm-up trimming".into()));
    }
    for (c, name) in cols.iter().zip(&names) {
        if let Some(t) = c[warmup..].iter().position(|v| v.is_nan()) {
            return Err(Error::MissingState {
                variable: name.clone(),
                row: warmup + t,
            });
        }
    }

    let y = match cfg.y.as_slice() {
        [a] => Series::Univariate(raw.column(a)?[warmup..].to_vec()),
        [a, b] => {
            let (a, b) = (raw.column(a)?, raw.column(b)?);
            Series::Bivariate((warmup..n).map(|t| [a[t], b[t]]).collect())
        }
        _ => unreachable!(),
    };
    let proxy = cfg
        .proxy
        .as_ref()
        .map(|p| raw.column(p).map(|v| v[warmup..].to_vec()))
        .transpose()?;
    let z = (warmup..n).map(|t| cols.iter().map(|c| c[t]).collect()).collect();
    let len = n - warmup;
    Ok(Dataset {
        y,
        names,
        z,
        proxy,
        time: raw.time.as_ref().map(|ts| ts[warmup..].to_vec()),
        splits: split(len)?,
        warmup,
    })
}

/// Provenance record written next to fitted models. Two models are
/// comparable only when their manifests hash identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub data_sha256: String,
    pub y: Vec<String>,
    pub proxy: Option<String>,
    pub state: Vec<StateSpec>,
    pub rows: usize,
    pub warmup: usize,
    pub splits: Splits,
}

impl DatasetManifest {
    pub fn new(raw: &RawTable, cfg: &DataConfig, ds: &Dataset) -> Self {
        Self {
            data_sha256: raw.sha256.clone(),
            y: cfg.y.clone(),
            proxy: cfg.proxy.clone(),
            state: cfg.state.clone(),
            rows: ds.len(),
            warmup: ds.warmup,
            splits: ds.splits,
        }
    }

    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(serde_json::to_string(self)?.as_bytes()))
    }
}
