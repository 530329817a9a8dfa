//! Tabular dataset loading, encoding, and synthesis.
//!
//! Everything downstream assumes one fixed layout: a feature matrix `X` that
//! never contains sensitive columns, a sensitive matrix `S` of {0,1}
//! indicators (or standardized continuous attributes), and a binary label
//! vector `Y`. Preprocessing is deterministic: categorical features one-hot
//! encode in sorted category order, every surviving feature column is
//! standardized to zero mean and unit variance, constant columns are dropped
//! with a recorded warning, and rows with missing values are dropped.
//!
//! A binary sensitive attribute becomes a single indicator column (of its
//! lexicographically larger category); an attribute with three or more
//! categories gets one indicator column per category. Continuous sensitive
//! attributes are standardized like features. These columns stay out of `X`
//! so neither the model nor the transport cost can see them directly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Share of samples assigned to the training side by [`split_train_test`].
pub const TRAIN_FRACTION: f64 = 0.8;

/// Values treated as missing when reading raw CSV files.
const MISSING_TOKENS: [&str; 3] = ["", "?", "NA"];

/// Standard deviations below this make a column "constant".
const CONSTANT_STD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitiveKind {
    Categorical,
    Continuous,
}

/// One declared sensitive attribute and where its columns live in `S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitiveAttr {
    pub name: String,
    pub kind: SensitiveKind,
    /// Column range inside the `S` matrix.
    pub first_column: usize,
    pub width: usize,
    /// Category names aligned with the columns; for a binary attribute the
    /// single column indicates `categories[0]`. Empty for continuous.
    pub categories: Vec<String>,
}

impl SensitiveAttr {
    pub fn columns(&self) -> Range<usize> {
        self.first_column..self.first_column + self.width
    }

    /// Human-readable name for each column of this attribute.
    pub fn column_names(&self) -> Vec<String> {
        match self.kind {
            SensitiveKind::Continuous => vec![self.name.clone()],
            SensitiveKind::Categorical => self
                .categories
                .iter()
                .map(|c| format!("{}={}", self.name, c))
                .collect(),
        }
    }
}

/// Mean and standard deviation used to standardize one feature column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
}

/// Role assignment for the columns of a raw CSV file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Name of the binary label column.
    pub label: String,
    /// If set, label values equal to this string map to 1, the (single)
    /// other value to 0. Without it the label must literally be 0 or 1.
    #[serde(default)]
    pub positive_label: Option<String>,
    /// Sensitive columns, excluded from the feature matrix.
    #[serde(default)]
    pub sensitive: Vec<(String, SensitiveKind)>,
    /// Columns to ignore entirely.
    #[serde(default)]
    pub drop: Vec<String>,
}

/// Recipe for a synthetic biased dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Number of samples.
    pub n: usize,
    /// Number of feature columns (at least 1).
    #[serde(default = "default_features")]
    pub features: usize,
    /// Number of groups of the single categorical sensitive attribute.
    #[serde(default = "default_groups")]
    pub groups: usize,
    /// Mean shift applied to feature 0 for members of group 0. Zero gives a
    /// dataset with no feature/group association.
    #[serde(default)]
    pub bias_strength: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_features() -> usize {
    5
}

fn default_groups() -> usize {
    2
}

/// A fully preprocessed dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    x: Array2<f64>,
    s: Array2<f64>,
    y: Vec<u8>,
    feature_names: Vec<String>,
    sensitive: Vec<SensitiveAttr>,
    standardization: Vec<ColumnStats>,
    warnings: Vec<String>,
}

impl TabularDataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn sensitive_dim(&self) -> usize {
        self.s.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn s(&self) -> ArrayView2<'_, f64> {
        self.s.view()
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn sensitive_attrs(&self) -> &[SensitiveAttr] {
        &self.sensitive
    }

    /// Standardization parameters aligned with the feature columns.
    pub fn standardization(&self) -> &[ColumnStats] {
        &self.standardization
    }

    /// Non-fatal preprocessing notes (dropped rows, dropped constant columns).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Names of the columns of `S`, attribute by attribute.
    pub fn sensitive_column_names(&self) -> Vec<String> {
        self.sensitive
            .iter()
            .flat_map(|a| a.column_names())
            .collect()
    }

    /// New dataset holding the given rows (metadata shared as-is; the
    /// standardization parameters remain those of the parent dataset).
    pub fn select_rows(&self, indices: &[usize]) -> Result<TabularDataset> {
        for &i in indices {
            if i >= self.n() {
                return Err(Error::BatchIndexRange {
                    index: i,
                    n: self.n(),
                });
            }
        }
        let take = |m: &Array2<f64>| {
            let mut out = Array2::zeros((indices.len(), m.ncols()));
            for (r, &i) in indices.iter().enumerate() {
                out.row_mut(r).assign(&m.row(i));
            }
            out
        };
        Ok(TabularDataset {
            x: take(&self.x),
            s: take(&self.s),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
            sensitive: self.sensitive.clone(),
            standardization: self.standardization.clone(),
            warnings: Vec::new(),
        })
    }
}

/// Deterministic 80/20 split.
pub fn split_train_test(ds: &TabularDataset, seed: u64) -> Result<(TabularDataset, TabularDataset)> {
    let n = ds.n();
    if n < 2 {
        return Err(Error::Schema(format!("cannot split {n} samples")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = ((n as f64) * TRAIN_FRACTION).floor() as usize;
    let n_train = n_train.clamp(1, n - 1);
    let train = ds.select_rows(&order[..n_train])?;
    let test = ds.select_rows(&order[n_train..])?;
    Ok((train, test))
}

/// Load and preprocess a raw CSV file according to `schema`.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<TabularDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| map_csv_open(path, e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::csv(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        rows.push(record.iter().map(str::to_owned).collect());
    }
    build_from_raw(path, &headers, rows, schema)
}

fn map_csv_open(path: &Path, e: csv::Error) -> Error {
    if let csv::ErrorKind::Io(_) = e.kind() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::csv(path, e)
    }
}

fn build_from_raw(
    path: &Path,
    headers: &[String],
    rows: Vec<Vec<String>>,
    schema: &CsvSchema,
) -> Result<TabularDataset> {
    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column {name:?} not found in {path:?}")))
    };

    let label_idx = col_index(&schema.label)?;
    let mut sensitive_idx = Vec::new();
    for (name, kind) in &schema.sensitive {
        sensitive_idx.push((col_index(name)?, name.clone(), *kind));
    }
    for name in &schema.drop {
        col_index(name)?;
    }
    let mut used = vec![true; headers.len()];
    for name in &schema.drop {
        used[col_index(name)?] = false;
    }
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&i| used[i] && i != label_idx && sensitive_idx.iter().all(|(j, _, _)| *j != i))
        .collect();

    let mut warnings = Vec::new();

    // Drop rows with a missing value in any used column.
    let is_missing = |v: &str| MISSING_TOKENS.iter().any(|t| v.eq_ignore_ascii_case(t));
    let mut kept: Vec<&Vec<String>> = Vec::with_capacity(rows.len());
    for row in &rows {
        if row.len() != headers.len() {
            return Err(Error::Schema(format!(
                "row with {} fields, expected {} in {path:?}",
                row.len(),
                headers.len()
            )));
        }
        let complete = feature_cols
            .iter()
            .chain(std::iter::once(&label_idx))
            .chain(sensitive_idx.iter().map(|(i, _, _)| i))
            .all(|&i| !is_missing(&row[i]));
        if complete {
            kept.push(row);
        }
    }
    if kept.len() < rows.len() {
        warnings.push(format!(
            "dropped {} of {} rows with missing values",
            rows.len() - kept.len(),
            rows.len()
        ));
    }
    let n = kept.len();
    if n < 2 {
        return Err(Error::Schema(format!(
            "only {n} usable rows in {path:?}; need at least 2"
        )));
    }

    // Labels.
    let mut y = Vec::with_capacity(n);
    if let Some(pos) = &schema.positive_label {
        let mut distinct: Vec<&str> = Vec::new();
        for row in &kept {
            let v = row[label_idx].as_str();
            if !distinct.contains(&v) {
                distinct.push(v);
            }
        }
        if distinct.len() > 2 || !distinct.contains(&pos.as_str()) {
            return Err(Error::Schema(format!(
                "label column {:?} has values {distinct:?}; expected two values including {pos:?}",
                schema.label
            )));
        }
        for row in &kept {
            y.push(u8::from(row[label_idx] == *pos));
        }
    } else {
        for (r, row) in kept.iter().enumerate() {
            match row[label_idx].as_str() {
                "0" => y.push(0),
                "1" => y.push(1),
                other => {
                    return Err(Error::Schema(format!(
                        "label column {:?} must be 0 or 1, got {other:?} (row {r}); \
                         set positive_label to map string labels",
                        schema.label
                    )))
                }
            }
        }
    }

    // Feature columns: numeric stay single, categorical one-hot in sorted
    // category order. Everything is standardized afterwards.
    let mut encoded: Vec<(String, Vec<f64>)> = Vec::new();
    for &ci in &feature_cols {
        let name = &headers[ci];
        let parsed: Option<Vec<f64>> = kept
            .iter()
            .map(|row| row[ci].parse::<f64>().ok())
            .collect();
        match parsed {
            Some(vals) => {
                if let Some(bad) = vals.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Parse {
                        value: kept[bad][ci].clone(),
                        row: bad,
                        column: name.clone(),
                    });
                }
                encoded.push((name.clone(), vals));
            }
            None => {
                let mut categories: Vec<&str> = kept.iter().map(|row| row[ci].as_str()).collect();
                categories.sort_unstable();
                categories.dedup();
                for cat in categories {
                    let col = kept
                        .iter()
                        .map(|row| f64::from(row[ci] == cat))
                        .collect::<Vec<_>>();
                    encoded.push((format!("{name}={cat}"), col));
                }
            }
        }
    }

    let mut feature_names = Vec::new();
    let mut standardization = Vec::new();
    let mut x_cols: Vec<Vec<f64>> = Vec::new();
    for (name, col) in encoded {
        match standardize(&col) {
            Some((stats, values)) => {
                feature_names.push(name);
                standardization.push(stats);
                x_cols.push(values);
            }
            None => warnings.push(format!("dropped constant feature column {name:?}")),
        }
    }
    if x_cols.is_empty() {
        return Err(Error::Schema(format!(
            "no usable feature columns left in {path:?}"
        )));
    }

    // Sensitive columns.
    let mut s_cols: Vec<Vec<f64>> = Vec::new();
    let mut sensitive = Vec::new();
    for (ci, name, kind) in &sensitive_idx {
        match kind {
            SensitiveKind::Continuous => {
                let mut vals = Vec::with_capacity(n);
                for (r, row) in kept.iter().enumerate() {
                    let v: f64 = row[*ci].parse().map_err(|_| Error::Parse {
                        value: row[*ci].clone(),
                        row: r,
                        column: name.clone(),
                    })?;
                    vals.push(v);
                }
                let first_column = s_cols.len();
                match standardize(&vals) {
                    Some((_, values)) => s_cols.push(values),
                    None => {
                        warnings.push(format!(
                            "continuous sensitive column {name:?} is constant; kept as zeros"
                        ));
                        s_cols.push(vec![0.0; n]);
                    }
                }
                sensitive.push(SensitiveAttr {
                    name: name.clone(),
                    kind: *kind,
                    first_column,
                    width: 1,
                    categories: Vec::new(),
                });
            }
            SensitiveKind::Categorical => {
                let mut categories: Vec<&str> = kept.iter().map(|row| row[*ci].as_str()).collect();
                categories.sort_unstable();
                categories.dedup();
                if categories.len() < 2 {
                    return Err(Error::DegenerateGroup(format!(
                        "{name} (single category {:?})",
                        categories.first().copied().unwrap_or("")
                    )));
                }
                // Two categories need only one indicator; more get one each.
                let encoded_cats: Vec<&str> = if categories.len() == 2 {
                    vec![categories[1]]
                } else {
                    categories.clone()
                };
                let first_column = s_cols.len();
                for cat in &encoded_cats {
                    s_cols.push(
                        kept.iter()
                            .map(|row| f64::from(row[*ci] == *cat))
                            .collect(),
                    );
                }
                sensitive.push(SensitiveAttr {
                    name: name.clone(),
                    kind: *kind,
                    first_column,
                    width: encoded_cats.len(),
                    categories: encoded_cats.iter().map(|c| c.to_string()).collect(),
                });
            }
        }
    }

    Ok(TabularDataset {
        x: columns_to_array(n, x_cols),
        s: columns_to_array(n, s_cols),
        y,
        feature_names,
        sensitive,
        standardization,
        warnings,
    })
}

/// Generate a synthetic dataset with a controllable group bias.
///
/// Group membership is uniform; features are independent standard normals
/// except that feature 0 is shifted by `bias_strength` for group 0; the label
/// is Bernoulli in a logistic model that loads on features 0..3, so the bias
/// propagates into the label exactly through feature 0.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<TabularDataset> {
    if spec.n < 4 {
        return Err(Error::Config(format!("synthetic n = {} too small", spec.n)));
    }
    if spec.features == 0 {
        return Err(Error::Config("synthetic needs at least 1 feature".into()));
    }
    if spec.groups < 2 {
        return Err(Error::Config("synthetic needs at least 2 groups".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let d = spec.features;

    let groups: Vec<usize> = (0..n).map(|_| rng.gen_range(0..spec.groups)).collect();
    let mut x = Array2::zeros((n, d));
    for i in 0..n {
        for j in 0..d {
            x[[i, j]] = rng.sample::<f64, _>(StandardNormal);
        }
        if groups[i] == 0 {
            x[[i, 0]] += spec.bias_strength;
        }
    }

    // Label weights: the biased feature dominates, but enough signal lives in
    // clean features for a fair model to stay predictive.
    let weights = [1.2, 1.0, 0.6];
    let offset = weights[0] * spec.bias_strength / spec.groups as f64;
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let mut z = -offset;
        for (j, w) in weights.iter().enumerate().take(d.min(weights.len())) {
            z += w * x[[i, j]];
        }
        let p = 1.0 / (1.0 + (-z).exp());
        y.push(u8::from(rng.gen::<f64>() < p));
    }

    let mut feature_names = Vec::new();
    let mut standardization = Vec::new();
    let mut x_cols = Vec::new();
    for j in 0..d {
        let col: Vec<f64> = (0..n).map(|i| x[[i, j]]).collect();
        let (stats, values) = standardize(&col).expect("gaussian column cannot be constant");
        feature_names.push(format!("f{j}"));
        standardization.push(stats);
        x_cols.push(values);
    }

    // Group indicators: a single column for two groups, one per group beyond.
    let (encoded, categories): (Vec<usize>, Vec<String>) = if spec.groups == 2 {
        (vec![1], vec!["1".to_string()])
    } else {
        (
            (0..spec.groups).collect(),
            (0..spec.groups).map(|g| g.to_string()).collect(),
        )
    };
    let s_cols: Vec<Vec<f64>> = encoded
        .iter()
        .map(|&g| groups.iter().map(|&gi| f64::from(gi == g)).collect())
        .collect();
    let sensitive = vec![SensitiveAttr {
        name: "group".to_string(),
        kind: SensitiveKind::Categorical,
        first_column: 0,
        width: s_cols.len(),
        categories,
    }];

    Ok(TabularDataset {
        x: columns_to_array(n, x_cols),
        s: columns_to_array(n, s_cols),
        y,
        feature_names,
        sensitive,
        standardization,
        warnings: Vec::new(),
    })
}

fn standardize(col: &[f64]) -> Option<(ColumnStats, Vec<f64>)> {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < CONSTANT_STD {
        return None;
    }
    let values = col.iter().map(|v| (v - mean) / std).collect();
    Some((ColumnStats { mean, std }, values))
}

fn columns_to_array(n: usize, cols: Vec<Vec<f64>>) -> Array2<f64> {
    let d = cols.len();
    let mut out = Array2::zeros((n, d));
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    n: usize,
    feature_names: Vec<String>,
    sensitive: Vec<SensitiveAttr>,
    standardization: Vec<ColumnStats>,
    warnings: Vec<String>,
}

/// Write a processed dataset as `<base>.csv` plus `<base>.json`.
///
/// Floats are written in shortest round-trip form, so a save/load cycle
/// reproduces the dataset bit for bit.
pub fn save_dataset(ds: &TabularDataset, base: &Path) -> Result<()> {
    let csv_path = base.with_extension("csv");
    let json_path = base.with_extension("json");

    let mut out = String::new();
    let mut header: Vec<String> = ds.feature_names.clone();
    header.extend(ds.sensitive_column_names());
    header.push("label".to_string());
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..ds.n() {
        for j in 0..ds.feature_dim() {
            let _ = write!(out, "{},", ds.x[[i, j]]);
        }
        for j in 0..ds.sensitive_dim() {
            let _ = write!(out, "{},", ds.s[[i, j]]);
        }
        let _ = writeln!(out, "{}", ds.y[i]);
    }
    std::fs::write(&csv_path, out).map_err(|e| Error::io(&csv_path, e))?;

    let sidecar = Sidecar {
        n: ds.n(),
        feature_names: ds.feature_names.clone(),
        sensitive: ds.sensitive.clone(),
        standardization: ds.standardization.clone(),
        warnings: ds.warnings.clone(),
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Json {
        path: json_path.clone(),
        source: e,
    })?;
    std::fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;
    Ok(())
}

/// Load a dataset previously written by [`save_dataset`].
pub fn load_dataset(base: &Path) -> Result<TabularDataset> {
    let csv_path = base.with_extension("csv");
    let json_path = base.with_extension("json");

    let json = std::fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let sidecar: Sidecar = serde_json::from_str(&json).map_err(|e| Error::Json {
        path: json_path.clone(),
        source: e,
    })?;

    let d_x = sidecar.feature_names.len();
    let d_s: usize = sidecar.sensitive.iter().map(|a| a.width).sum();

    let mut reader = csv::ReaderBuilder::new()
        .from_path(&csv_path)
        .map_err(|e| map_csv_open(&csv_path, e))?;
    let mut x = Array2::zeros((sidecar.n, d_x));
    let mut s = Array2::zeros((sidecar.n, d_s));
    let mut y = Vec::with_capacity(sidecar.n);
    let mut rows = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(&csv_path, e))?;
        if record.len() != d_x + d_s + 1 {
            return Err(Error::Schema(format!(
                "serialized row {i} has {} fields, sidecar says {}",
                record.len(),
                d_x + d_s + 1
            )));
        }
        if i >= sidecar.n {
            return Err(Error::Schema(format!(
                "serialized file has more rows than the sidecar's n = {}",
                sidecar.n
            )));
        }
        let parse = |field: &str, col: String| -> Result<f64> {
            field.parse::<f64>().map_err(|_| Error::Parse {
                value: field.to_string(),
                row: i,
                column: col,
            })
        };
        for j in 0..d_x {
            x[[i, j]] = parse(&record[j], sidecar.feature_names[j].clone())?;
        }
        for j in 0..d_s {
            s[[i, j]] = parse(&record[d_x + j], format!("s{j}"))?;
        }
        y.push(match &record[d_x + d_s] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Schema(format!(
                    "serialized label must be 0 or 1, got {other:?} (row {i})"
                )))
            }
        });
        rows += 1;
    }
    if rows != sidecar.n {
        return Err(Error::Schema(format!(
            "serialized file has {rows} rows, sidecar says {}",
            sidecar.n
        )));
    }

    Ok(TabularDataset {
        x,
        s,
        y,
        feature_names: sidecar.feature_names,
        sensitive: sidecar.sensitive,
        standardization: sidecar.standardization,
        warnings: sidecar.warnings,
    })
}

/// Convenience constructor for tests and snippets that need a dataset with
/// explicit matrices rather than a file.
pub fn from_parts(
    x: Array2<f64>,
    s: Array2<f64>,
    y: Vec<u8>,
    feature_names: Vec<String>,
    sensitive: Vec<SensitiveAttr>,
) -> Result<TabularDataset> {
    if x.nrows() != s.nrows() || x.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "x has {} rows, s has {}, y has {}",
            x.nrows(),
            s.nrows(),
            y.len()
        )));
    }
    if feature_names.len() != x.ncols() {
        return Err(Error::Dimension(format!(
            "{} feature names for {} columns",
            feature_names.len(),
            x.ncols()
        )));
    }
    let declared: usize = sensitive.iter().map(|a| a.width).sum();
    if declared != s.ncols() {
        return Err(Error::Dimension(format!(
            "sensitive attrs declare {declared} columns, s has {}",
            s.ncols()
        )));
    }
    let standardization = (0..x.ncols())
        .map(|_| ColumnStats { mean: 0.0, std: 1.0 })
        .collect();
    Ok(TabularDataset {
        x,
        s,
        y,
        feature_names,
        sensitive,
        standardization,
        warnings: Vec::new(),
    })
}

/// Group sizes per sensitive column, used by a few reports.
pub fn group_counts(ds: &TabularDataset) -> BTreeMap<String, usize> {
    let names = ds.sensitive_column_names();
    let mut out = BTreeMap::new();
    for (j, name) in names.into_iter().enumerate() {
        let count = ds.s.column(j).iter().filter(|&&v| v > 0.5).count();
        out.insert(name, count);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;
    use tempfile::TempDir;

    fn write_csv(dir: &TempDir, name: &str, content: &str) -> PathBuf {
        let path = dir.path().join(name);
        std::fs::write(&path, content).unwrap();
        path
    }

    fn small_schema() -> CsvSchema {
        CsvSchema {
            label: "y".into(),
            positive_label: None,
            sensitive: vec![("sex".into(), SensitiveKind::Categorical)],
            drop: vec![],
        }
    }

    #[test]
    fn loads_standardizes_and_encodes() {
        let dir = TempDir::new().unwrap();
        let path = write_csv(
            &dir,
            "t.csv",
            "age,wage,sex,y\n20,1.0,M,0\n30,2.0,F,1\n40,4.0,M,0\n50,8.0,F,1\n",
        );
        let ds = load_csv(&path, &small_schema()).unwrap();
        assert_eq!(ds.n(), 4);
        assert_eq!(ds.feature_dim(), 2);
        assert_eq!(ds.sensitive_dim(), 1); // binary attribute -> one indicator
        assert_eq!(ds.y(), &[0, 1, 0, 1]);
        // Binary categories sort to [F, M]; the indicator marks M.
        assert_eq!(ds.sensitive_column_names(), vec!["sex=M".to_string()]);
        assert_eq!(ds.s()[[0, 0]], 1.0);
        assert_eq!(ds.s()[[1, 0]], 0.0);
        for j in 0..ds.feature_dim() {
            let col = ds.x().column(j).to_owned();
            let mean = col.mean().unwrap();
            let var = col.mapv(|v| (v - mean) * (v - mean)).mean().unwrap();
            assert!(mean.abs() < 1e-9, "column {j} mean {mean}");
            assert!((var - 1.0).abs() < 1e-6, "column {j} var {var}");
        }
    }

    #[test]
    fn non_binary_label_is_a_schema_error() {
        let dir = TempDir::new().unwrap();
        let path = write_csv(&dir, "t.csv", "a,sex,y\n1,M,0\n2,F,2\n3,M,1\n");
        let err = load_csv(&path, &small_schema()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");
    }

    #[test]
    fn string_labels_need_positive_label() {
        let dir = TempDir::new().unwrap();
        let path = write_csv(&dir, "t.csv", "a,sex,y\n1,M,lo\n2,F,hi\n3,M,lo\n");
        assert!(load_csv(&path, &small_schema()).is_err());
        let schema = CsvSchema {
            positive_label: Some("hi".into()),
            ..small_schema()
        };
        let ds = load_csv(&path, &schema).unwrap();
        assert_eq!(ds.y(), &[0, 1, 0]);
    }

    #[test]
    fn unknown_schema_column_is_reported() {
        let dir = TempDir::new().unwrap();
        let path = write_csv(&dir, "t.csv", "a,y\n1,0\n2,1\n");
        let schema = CsvSchema {
            label: "y".into(),
            sensitive: vec![("ghost".into(), SensitiveKind::Categorical)],
            ..Default::default()
        };
        let err = load_csv(&path, &schema).unwrap_err();
        assert!(err.to_string().contains("ghost"), "{err}");
    }

    #[test]
    fn missing_rows_are_dropped_with_warning() {
        let dir = TempDir::new().unwrap();
        let path = write_csv(
            &dir,
            "t.csv",
            "a,sex,y\n1,M,0\n?,F,1\n3,M,1\n4,F,0\n5,?,1\n",
        );
        let ds = load_csv(&path, &small_schema()).unwrap();
        assert_eq!(ds.n(), 3);
        assert!(ds.warnings().iter().any(|w| w.contains("dropped 2 of 5")));
    }

    #[test]
    fn categorical_features_one_hot_then_standardize() {
        let dir = TempDir::new().unwrap();
        let path = write_csv(
            &dir,
            "t.csv",
            "job,sex,y\nnurse,M,0\nclerk,F,1\nnurse,M,1\nsmith,F,0\n",
        );
        let ds = load_csv(&path, &small_schema()).unwrap();
        assert_eq!(
            ds.feature_names(),
            &["job=clerk", "job=nurse", "job=smith"]
        );
        for j in 0..3 {
            let col = ds.x().column(j).to_owned();
            let mean = col.mean().unwrap();
            assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn constant_feature_column_dropped() {
        let dir = TempDir::new().unwrap();
        let path = write_csv(&dir, "t.csv", "a,b,sex,y\n1,7,M,0\n2,7,F,1\n3,7,M,1\n");
        let ds = load_csv(&path, &small_schema()).unwrap();
        assert_eq!(ds.feature_names(), &["a"]);
        assert!(ds.warnings().iter().any(|w| w.contains("\"b\"")));
    }

    #[test]
    fn synthetic_unbiased_has_no_group_signal() {
        let ds = generate_synthetic(&SyntheticSpec {
            n: 2000,
            features: 5,
            groups: 2,
            bias_strength: 0.0,
            seed: 7,
        })
        .unwrap();
        // Correlation between each feature and the group indicator stays at
        // sampling-noise scale.
        let s0: Vec<f64> = ds.s().column(0).to_vec();
        for j in 0..ds.feature_dim() {
            let xj: Vec<f64> = ds.x().column(j).to_vec();
            let c = pearson(&xj, &s0);
            assert!(c.abs() < 0.1, "feature {j} correlates {c}");
        }
    }

    #[test]
    fn synthetic_bias_shifts_feature_zero() {
        let ds = generate_synthetic(&SyntheticSpec {
            n: 2000,
            features: 4,
            groups: 2,
            bias_strength: 2.0,
            seed: 7,
        })
        .unwrap();
        let s0: Vec<f64> = ds.s().column(0).to_vec();
        let x0: Vec<f64> = ds.x().column(0).to_vec();
        // Indicator marks group 1, shift lands on group 0: strong negative
        // correlation after standardization.
        assert!(pearson(&x0, &s0) < -0.5);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticSpec {
            n: 64,
            features: 3,
            groups: 2,
            bias_strength: 1.0,
            seed: 42,
        };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_is_disjoint_and_sized() {
        let ds = generate_synthetic(&SyntheticSpec {
            n: 100,
            features: 3,
            groups: 2,
            bias_strength: 1.0,
            seed: 1,
        })
        .unwrap();
        let (train, test) = split_train_test(&ds, 3).unwrap();
        assert_eq!(train.n(), 80);
        assert_eq!(test.n(), 20);
    }

    #[test]
    fn serialization_round_trips_bit_for_bit() {
        let dir = TempDir::new().unwrap();
        let ds = generate_synthetic(&SyntheticSpec {
            n: 50,
            features: 4,
            groups: 3,
            bias_strength: 1.5,
            seed: 11,
        })
        .unwrap();
        let base = dir.path().join("snap");
        save_dataset(&ds, &base).unwrap();
        let re = load_dataset(&base).unwrap();
        assert_eq!(ds, re);
        // And once more through the same files.
        save_dataset(&re, &base).unwrap();
        let rere = load_dataset(&base).unwrap();
        assert_eq!(re, rere);
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>();
        let va = a.iter().map(|x| (x - ma) * (x - ma)).sum::<f64>();
        let vb = b.iter().map(|y| (y - mb) * (y - mb)).sum::<f64>();
        cov / (va.sqrt() * vb.sqrt())
    }
}
