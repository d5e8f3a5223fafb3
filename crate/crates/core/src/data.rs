//! Synthetic datasets and CSV ingestion, normalized to `[−1, 1]`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::LdpError;
use crate::mechanisms::RandomStream;

/// Redraw cap per truncated-Gaussian value; reaching it means the truncation window is
/// practically unreachable for the given mean and spread.
const MAX_REJECTIONS: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),

    #[error("line {line}: row has {found} fields but the header has {expected}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("column '{0}' is not listed in the schema")]
    UnknownColumn(String),

    #[error("schema column '{0}' is missing from the data")]
    MissingColumn(String),

    #[error("numeric column '{0}' is constant and cannot be normalized")]
    ConstantColumn(String),

    #[error("line {line}, column '{column}': cannot parse '{value}' as a number")]
    Parse {
        line: u64,
        column: String,
        value: String,
    },

    #[error("schema line {line}: {reason}")]
    Schema { line: usize, reason: String },

    #[error("label column '{column}': {reason}")]
    Label { column: String, reason: String },

    #[error("dataset has no rows")]
    NoRows,

    #[error(transparent)]
    Ldp(#[from] LdpError),
}

pub type DataResult<T> = std::result::Result<T, DataError>;

/// How a source column is treated on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    /// Min-max mapped to `[−1, 1]`.
    Numeric,
    /// `k` distinct values become `k−1` columns in `{−1, 1}`.
    Categorical,
    /// Regression target, min-max mapped to `[−1, 1]`.
    Label,
    /// Two-valued class label mapped to `−1`/`+1`.
    Class,
    /// Dropped on load.
    Ignore,
}

impl std::str::FromStr for ColumnKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "numeric" => Ok(Self::Numeric),
            "categorical" => Ok(Self::Categorical),
            "label" => Ok(Self::Label),
            "class" => Ok(Self::Class),
            "ignore" => Ok(Self::Ignore),
            other => Err(format!(
                "unknown column kind '{other}' (numeric, categorical, label, class, ignore)"
            )),
        }
    }
}

/// Column kinds by name, read from lines of the form `name = kind`.
///
/// Blank lines and lines starting with `#` are skipped.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schema {
    columns: BTreeMap<String, ColumnKind>,
}

impl Schema {
    pub fn parse(text: &str) -> DataResult<Self> {
        let mut columns = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let schema_err = |reason: String| DataError::Schema {
                line: i + 1,
                reason,
            };
            let (name, kind) = line
                .split_once('=')
                .or_else(|| line.split_once(':'))
                .ok_or_else(|| schema_err(format!("expected 'name = kind', got '{line}'")))?;
            let name = name.trim().to_string();
            if name.is_empty() {
                return Err(schema_err("empty column name".into()));
            }
            let kind = kind.parse::<ColumnKind>().map_err(schema_err)?;
            if columns.insert(name.clone(), kind).is_some() {
                return Err(schema_err(format!("column '{name}' listed twice")));
            }
        }
        let labels = columns
            .values()
            .filter(|k| matches!(k, ColumnKind::Label | ColumnKind::Class))
            .count();
        if labels > 1 {
            return Err(DataError::Schema {
                line: 0,
                reason: "at most one label or class column".into(),
            });
        }
        Ok(Self { columns })
    }

    pub fn from_file(path: &Path) -> DataResult<Self> {
        let text = fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.into(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn with(mut self, name: &str, kind: ColumnKind) -> Self {
        self.columns.insert(name.to_string(), kind);
        self
    }

    pub fn kind(&self, name: &str) -> Option<ColumnKind> {
        self.columns.get(name).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EncodedKind {
    Numeric,
    /// `+1` when the source column equals `category`.
    BinaryEncoded {
        source: String,
        category: String,
    },
}

/// Metadata to invert the normalization of one stored column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub original_min: f64,
    pub original_max: f64,
    pub kind: EncodedKind,
}

impl ColumnMeta {
    pub fn numeric(name: impl Into<String>, original_min: f64, original_max: f64) -> Self {
        Self {
            name: name.into(),
            original_min,
            original_max,
            kind: EncodedKind::Numeric,
        }
    }

    pub fn normalize(&self, v: f64) -> f64 {
        min_max(v, self.original_min, self.original_max)
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        self.original_min + (z + 1.0) / 2.0 * (self.original_max - self.original_min)
    }
}

fn min_max(v: f64, lo: f64, hi: f64) -> f64 {
    (2.0 * (v - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LabelMeta {
    Regression {
        name: String,
        original_min: f64,
        original_max: f64,
    },
    Binary {
        name: String,
        negative: String,
        positive: String,
    },
}

/// Rows with every stored value in `[−1, 1]`, plus optional labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub rows: Vec<Vec<f64>>,
    pub labels: Option<Vec<f64>>,
    pub columns: Vec<ColumnMeta>,
    pub label_meta: Option<LabelMeta>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    /// Whether every stored feature and label lies in `[−1, 1]`.
    pub fn values_in_range(&self) -> bool {
        let ok = |v: &f64| v.is_finite() && v.abs() <= 1.0;
        self.rows
            .iter()
            .all(|r| r.len() == self.columns.len() && r.iter().all(ok))
            && self.labels.as_ref().map_or(true, |l| l.iter().all(ok))
    }

    /// Coordinate-wise mean of the rows.
    pub fn column_means(&self) -> DataResult<Vec<f64>> {
        if self.rows.is_empty() {
            return Err(DataError::NoRows);
        }
        let mut acc = crate::multidim::MeanAccumulator::new(self.dim());
        for r in &self.rows {
            acc.push(r)?;
        }
        Ok(acc.means()?)
    }

    /// Shuffles rows with `stream` and returns `(train, test)`, with `train_fraction` of rows in train.
    pub fn split(
        &self,
        train_fraction: f64,
        stream: &mut RandomStream,
    ) -> DataResult<(Dataset, Dataset)> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(
                LdpError::InvalidParameter(format!("train fraction {train_fraction}")).into(),
            );
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, stream.below(i + 1));
        }
        let cut = (self.len() as f64 * train_fraction).round() as usize;
        let take = |idx: &[usize]| Dataset {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
            columns: self.columns.clone(),
            label_meta: self.label_meta.clone(),
        };
        Ok((take(&order[..cut]), take(&order[cut..])))
    }
}

fn standard_columns(d: usize) -> Vec<ColumnMeta> {
    (0..d)
        .map(|j| ColumnMeta::numeric(format!("x{j}"), -1.0, 1.0))
        .collect()
}

/// One draw from `N(mu, sigma²)` conditioned on `[−1, 1]`, by rejection.
pub fn truncated_gaussian(mu: f64, sigma: f64, stream: &mut RandomStream) -> DataResult<f64> {
    for _ in 0..MAX_REJECTIONS {
        let z: f64 = StandardNormal.sample(stream);
        let v = mu + sigma * z;
        if v.abs() <= 1.0 {
            return Ok(v);
        }
    }
    Err(
        LdpError::InvalidParameter(format!("N({mu}, {sigma}²) almost never lands in [-1, 1]"))
            .into(),
    )
}

/// `n` rows of `d` i.i.d. draws from `N(mu, sigma²)` truncated to `[−1, 1]`.
pub fn synth_gaussian(
    n: usize,
    d: usize,
    mu: f64,
    sigma: f64,
    stream: &mut RandomStream,
) -> DataResult<Dataset> {
    if n == 0 || d == 0 {
        return Err(LdpError::Empty("synthetic dataset shape").into());
    }
    if !(sigma.is_finite() && sigma > 0.0 && mu.is_finite()) {
        return Err(
            LdpError::InvalidParameter(format!("gaussian mean {mu}, spread {sigma}")).into(),
        );
    }
    let rows = (0..n)
        .map(|_| {
            (0..d)
                .map(|_| truncated_gaussian(mu, sigma, stream))
                .collect::<DataResult<Vec<_>>>()
        })
        .collect::<DataResult<Vec<_>>>()?;
    Ok(Dataset {
        rows,
        labels: None,
        columns: standard_columns(d),
        label_meta: None,
    })
}

/// Ground truth of a synthetic linear task, before label rescaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearTruth {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Raw label range mapped onto `[−1, 1]`.
    pub label_min: f64,
    pub label_max: f64,
}

impl LinearTruth {
    /// Weights and bias expressed in the rescaled label space.
    pub fn scaled(&self) -> (Vec<f64>, f64) {
        let s = 2.0 / (self.label_max - self.label_min);
        let w = self.weights.iter().map(|w| w * s).collect();
        (w, s * (self.bias - self.label_min) - 1.0)
    }
}

fn random_linear(p: usize, weight_seed: u64) -> (Vec<f64>, f64) {
    let mut ws = RandomStream::new(weight_seed);
    let w = (0..p).map(|_| ws.uniform_in(-1.0, 1.0)).collect();
    (w, ws.uniform_in(-0.5, 0.5))
}

fn uniform_features(n: usize, p: usize, stream: &mut RandomStream) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..p).map(|_| stream.uniform_in(-1.0, 1.0)).collect())
        .collect()
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Linear regression task: uniform features on `[−1, 1]^p`, labels `w·x + bias + noise`
/// min-max rescaled to `[−1, 1]`. Weights come from `weight_seed` alone.
pub fn synth_regression(
    n: usize,
    p: usize,
    weight_seed: u64,
    noise_sigma: f64,
    stream: &mut RandomStream,
) -> DataResult<(Dataset, LinearTruth)> {
    if n == 0 || p == 0 {
        return Err(LdpError::Empty("synthetic dataset shape").into());
    }
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(LdpError::InvalidParameter(format!("noise level {noise_sigma}")).into());
    }
    let (weights, bias) = random_linear(p, weight_seed);
    let rows = uniform_features(n, p, stream);
    let raw: Vec<f64> = rows
        .iter()
        .map(|x| {
            let z: f64 = StandardNormal.sample(stream);
            dot(&weights, x) + bias + noise_sigma * z
        })
        .collect();
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if hi <= lo {
        return Err(DataError::ConstantColumn("label".into()));
    }
    let labels = raw.iter().map(|&v| min_max(v, lo, hi)).collect();
    let data = Dataset {
        rows,
        labels: Some(labels),
        columns: standard_columns(p),
        label_meta: Some(LabelMeta::Regression {
            name: "y".into(),
            original_min: lo,
            original_max: hi,
        }),
    };
    Ok((
        data,
        LinearTruth {
            weights,
            bias,
            label_min: lo,
            label_max: hi,
        },
    ))
}

/// Binary task with labels `sign(w·x + bias)`; points closer than `margin` to the
/// separating hyperplane (in score units) are redrawn, so the classes are separable.
pub fn synth_classification(
    n: usize,
    p: usize,
    weight_seed: u64,
    margin: f64,
    stream: &mut RandomStream,
) -> DataResult<(Dataset, LinearTruth)> {
    if n == 0 || p == 0 {
        return Err(LdpError::Empty("synthetic dataset shape").into());
    }
    let (weights, bias) = random_linear(p, weight_seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut tries = 0usize;
    while rows.len() < n {
        tries += 1;
        if tries > n.saturating_mul(1000).max(MAX_REJECTIONS) {
            return Err(LdpError::InvalidParameter(format!(
                "margin {margin} leaves no room for samples"
            ))
            .into());
        }
        let x: Vec<f64> = (0..p).map(|_| stream.uniform_in(-1.0, 1.0)).collect();
        let s = dot(&weights, &x) + bias;
        if s.abs() < margin {
            continue;
        }
        labels.push(if s > 0.0 { 1.0 } else { -1.0 });
        rows.push(x);
    }
    let data = Dataset {
        rows,
        labels: Some(labels),
        columns: standard_columns(p),
        label_meta: Some(LabelMeta::Binary {
            name: "y".into(),
            negative: "-1".into(),
            positive: "1".into(),
        }),
    };
    Ok((
        data,
        LinearTruth {
            weights,
            bias,
            label_min: -1.0,
            label_max: 1.0,
        },
    ))
}

/// Reads a headered CSV and encodes it per `schema`.
pub fn load_csv(path: &Path, schema: &Schema) -> DataResult<Dataset> {
    let file = fs::File::open(path).map_err(|source| DataError::Io {
        path: path.into(),
        source,
    })?;
    read_csv(file, schema)
}

/// [`load_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(input: R, schema: &Schema) -> DataResult<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    for name in &header {
        if schema.kind(name).is_none() {
            return Err(DataError::UnknownColumn(name.clone()));
        }
    }
    for name in schema.columns.keys() {
        if !header.contains(name) {
            return Err(DataError::MissingColumn(name.clone()));
        }
    }

    let mut cells: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    let mut lines = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(DataError::RaggedRow {
                line,
                expected: header.len(),
                found: record.len(),
            });
        }
        for (col, field) in cells.iter_mut().zip(record.iter()) {
            col.push(field.to_string());
        }
        lines.push(line);
    }
    if lines.is_empty() {
        return Err(DataError::NoRows);
    }

    let n = lines.len();
    let parse = |name: &str, col: &[String]| -> DataResult<Vec<f64>> {
        col.iter()
            .zip(&lines)
            .map(|(v, &line)| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| DataError::Parse {
                        line,
                        column: name.to_string(),
                        value: v.clone(),
                    })
            })
            .collect()
    };
    let range = |name: &str, vals: &[f64]| -> DataResult<(f64, f64)> {
        let (lo, hi) = vals
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if hi <= lo {
            Err(DataError::ConstantColumn(name.to_string()))
        } else {
            Ok((lo, hi))
        }
    };

    let mut features: Vec<Vec<f64>> = Vec::new();
    let mut columns = Vec::new();
    let mut labels = None;
    let mut label_meta = None;
    for (name, col) in header.iter().zip(&cells) {
        match schema.kind(name).expect("checked above") {
            ColumnKind::Ignore => {}
            ColumnKind::Numeric => {
                let vals = parse(name, col)?;
                let (lo, hi) = range(name, &vals)?;
                let meta = ColumnMeta::numeric(name.clone(), lo, hi);
                features.push(vals.iter().map(|&v| meta.normalize(v)).collect());
                columns.push(meta);
            }
            ColumnKind::Categorical => {
                let distinct: BTreeSet<&String> = col.iter().collect();
                // Sorted order fixes which value is the all −1 one (the last).
                let values: Vec<&String> = distinct.into_iter().collect();
                for category in &values[..values.len() - 1] {
                    features.push(
                        col.iter()
                            .map(|v| if v == *category { 1.0 } else { -1.0 })
                            .collect(),
                    );
                    columns.push(ColumnMeta {
                        name: format!("{name}={category}"),
                        original_min: -1.0,
                        original_max: 1.0,
                        kind: EncodedKind::BinaryEncoded {
                            source: name.clone(),
                            category: (*category).clone(),
                        },
                    });
                }
            }
            ColumnKind::Label => {
                let vals = parse(name, col)?;
                let (lo, hi) = range(name, &vals)?;
                labels = Some(vals.iter().map(|&v| min_max(v, lo, hi)).collect::<Vec<_>>());
                label_meta = Some(LabelMeta::Regression {
                    name: name.clone(),
                    original_min: lo,
                    original_max: hi,
                });
            }
            ColumnKind::Class => {
                let (negative, positive) = binary_classes(name, col)?;
                labels = Some(
                    col.iter()
                        .map(|v| if *v == positive { 1.0 } else { -1.0 })
                        .collect(),
                );
                label_meta = Some(LabelMeta::Binary {
                    name: name.clone(),
                    negative,
                    positive,
                });
            }
        }
    }

    let rows = (0..n)
        .map(|i| features.iter().map(|f| f[i]).collect())
        .collect();
    Ok(Dataset {
        rows,
        labels,
        columns,
        label_meta,
    })
}

/// The two class values, negative first: numeric order when both parse, else lexicographic.
fn binary_classes(name: &str, col: &[String]) -> DataResult<(String, String)> {
    let distinct: BTreeSet<&String> = col.iter().collect();
    if distinct.len() != 2 {
        return Err(DataError::Label {
            column: name.to_string(),
            reason: format!(
                "expected exactly 2 distinct values, found {}",
                distinct.len()
            ),
        });
    }
    let mut v: Vec<&String> = distinct.into_iter().collect();
    if let (Ok(a), Ok(b)) = (v[0].parse::<f64>(), v[1].parse::<f64>()) {
        if a > b {
            v.swap(0, 1);
        }
    }
    Ok((v[0].clone(), v[1].clone()))
}
