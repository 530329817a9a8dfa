//! Linear fairness constraints over score vectors.
//!
//! A fairness notion is encoded as a matrix `G` with one row per elementary
//! constraint; a score vector `f` is fair when `G f = 0`. Two families are
//! built here, both from frozen full-dataset expectations so that batch
//! restrictions stay consistent with the dataset-level notion:
//!
//! * Parity rows: `g_j = S_jk / mean(S_k) - 1` for indicator columns, which
//!   vanish exactly when group k's mean score equals the overall mean
//!   (equivalently, zero correlation between scores and the indicator). A
//!   continuous attribute whose mean is numerically zero (it is standardized
//!   upstream) uses the centered covariance form `g_j = a_j - mean(a)`
//!   instead of dividing by a near-zero mean.
//! * Odds rows: the same comparison restricted to each label slice,
//!   `g_j = Y_jl (S_jk / mean(S_k | Y=l) - 1)`, two rows (l = 0, 1) per
//!   sensitive column. Rows are zero outside their slice and centered within
//!   it, so constant score vectors are always fair.
//!
//! Rows are plain data: concatenating matrices stacks constraints, and a
//! minibatch view is just a column subset (expectations are *not*
//! recomputed, which is what keeps the batched cost an estimate of the
//! dataset-level one).

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{SensitiveKind, TabularDataset};
use crate::{Error, Result};

/// Mean magnitudes below this switch a continuous attribute to the centered
/// covariance row instead of dividing by the mean.
const NEAR_ZERO_MEAN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Notion {
    Pdp,
    Peo,
    Composite,
}

impl std::fmt::Display for Notion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Notion::Pdp => "pdp",
            Notion::Peo => "peo",
            Notion::Composite => "composite",
        };
        f.write_str(s)
    }
}

/// A fairness constraint matrix: `d_F` rows over `n` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrix {
    g: Array2<f64>,
    notion: Notion,
    row_labels: Vec<String>,
}

impl ConstraintMatrix {
    pub fn from_parts(g: Array2<f64>, notion: Notion, row_labels: Vec<String>) -> Result<Self> {
        if g.nrows() != row_labels.len() {
            return Err(Error::Dimension(format!(
                "{} rows but {} labels",
                g.nrows(),
                row_labels.len()
            )));
        }
        Ok(ConstraintMatrix {
            g,
            notion,
            row_labels,
        })
    }

    pub fn g(&self) -> ArrayView2<'_, f64> {
        self.g.view()
    }

    pub fn d_f(&self) -> usize {
        self.g.nrows()
    }

    pub fn n(&self) -> usize {
        self.g.ncols()
    }

    pub fn notion(&self) -> Notion {
        self.notion
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    /// Constraint residual `G h`.
    pub fn residual(&self, h: &[f64]) -> Result<Vec<f64>> {
        if h.len() != self.n() {
            return Err(Error::Dimension(format!(
                "score vector of length {} against {} columns",
                h.len(),
                self.n()
            )));
        }
        Ok(self
            .g
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(h).map(|(g, v)| g * v).sum())
            .collect())
    }

    /// Column subset in the order given, sharing the frozen expectations of
    /// the full matrix.
    pub fn restrict_to_batch(&self, indices: &[usize]) -> Result<ConstraintMatrix> {
        let n = self.n();
        let mut seen = vec![false; n];
        for &idx in indices {
            if idx >= n {
                return Err(Error::BatchIndexRange { index: idx, n });
            }
            if seen[idx] {
                return Err(Error::BatchIndexDuplicate(idx));
            }
            seen[idx] = true;
        }
        if indices.is_empty() {
            return Err(Error::Dimension("empty batch restriction".into()));
        }
        let mut g = Array2::zeros((self.d_f(), indices.len()));
        for (bj, &j) in indices.iter().enumerate() {
            g.column_mut(bj).assign(&self.g.column(j));
        }
        Ok(ConstraintMatrix {
            g,
            notion: self.notion,
            row_labels: self.row_labels.clone(),
        })
    }

    /// Checks that a strictly positive fair vector can exist.
    ///
    /// Exact centering (`G 1 = 0`, which full parity/odds builds satisfy by
    /// construction) passes immediately. Otherwise every nonzero row must
    /// carry both signs: a single-signed row `g` forces `sum_j g_j f_j != 0`
    /// for every strictly positive `f`, which is exactly the regime where a
    /// dual coordinate runs away to infinity. This typically means a batch
    /// that lost one group of an attribute entirely.
    pub fn check_positive_feasibility(&self) -> Result<()> {
        let ones = vec![1.0; self.n()];
        let centered = self
            .residual(&ones)?
            .iter()
            .all(|r| r.abs() <= 1e-9 * self.n() as f64);
        if centered {
            return Ok(());
        }
        for (c, row) in self.g.rows().into_iter().enumerate() {
            let has_pos = row.iter().any(|&v| v > 0.0);
            let has_neg = row.iter().any(|&v| v < 0.0);
            if has_pos != has_neg {
                return Err(Error::Infeasible(format!(
                    "constraint row {c} ({}) is single-signed over this batch",
                    self.row_labels
                        .get(c)
                        .map(String::as_str)
                        .unwrap_or("unlabeled")
                )));
            }
        }
        Ok(())
    }
}

/// Stack several constraint matrices over the same samples.
pub fn concat(parts: &[ConstraintMatrix]) -> Result<ConstraintMatrix> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Dimension("concat of zero constraint matrices".into()))?;
    let n = first.n();
    for p in parts {
        if p.n() != n {
            return Err(Error::Dimension(format!(
                "concat over {} and {} columns",
                n,
                p.n()
            )));
        }
    }
    let d_f: usize = parts.iter().map(|p| p.d_f()).sum();
    let mut g = Array2::zeros((d_f, n));
    let mut row_labels = Vec::with_capacity(d_f);
    let mut r = 0;
    for p in parts {
        for row in p.g.rows() {
            g.row_mut(r).assign(&row);
            r += 1;
        }
        row_labels.extend(p.row_labels.iter().cloned());
    }
    let notion = if parts.iter().all(|p| p.notion() == first.notion()) {
        first.notion()
    } else {
        Notion::Composite
    };
    ConstraintMatrix::from_parts(g, notion, row_labels)
}

/// Parity rows: one per sensitive column, expectations frozen over `ds`.
pub fn build_pdp(ds: &TabularDataset) -> Result<ConstraintMatrix> {
    if ds.sensitive_dim() == 0 {
        return Err(Error::Schema("dataset declares no sensitive columns".into()));
    }
    if ds.n() < 2 {
        return Err(Error::Schema("need at least 2 samples".into()));
    }
    let n = ds.n();
    let names = ds.sensitive_column_names();
    let mut g = Array2::zeros((ds.sensitive_dim(), n));
    let mut row_labels = Vec::new();
    for attr in ds.sensitive_attrs() {
        for (offset, k) in attr.columns().enumerate() {
            let col = ds.s().column(k).to_owned();
            let mean = col.mean().unwrap();
            let name = &names[k];
            let row = match attr.kind {
                SensitiveKind::Categorical => {
                    if mean == 0.0 || mean == 1.0 {
                        return Err(Error::DegenerateGroup(name.clone()));
                    }
                    row_labels.push(format!("pdp:{name}"));
                    col.mapv(|v| v / mean - 1.0)
                }
                SensitiveKind::Continuous => {
                    if mean.abs() <= NEAR_ZERO_MEAN {
                        row_labels.push(format!("pdp:{name} (covariance)"));
                        col.mapv(|v| v - mean)
                    } else {
                        row_labels.push(format!("pdp:{name}"));
                        col.mapv(|v| v / mean - 1.0)
                    }
                }
            };
            g.row_mut(attr.first_column + offset).assign(&row);
        }
    }
    ConstraintMatrix::from_parts(g, Notion::Pdp, row_labels)
}

/// Odds rows: the parity comparison within each label slice, two rows per
/// sensitive column. Row order is the label-0 block then the label-1 block.
pub fn build_peo(ds: &TabularDataset) -> Result<ConstraintMatrix> {
    if ds.sensitive_dim() == 0 {
        return Err(Error::Schema("dataset declares no sensitive columns".into()));
    }
    let n = ds.n();
    let d_s = ds.sensitive_dim();
    let names = ds.sensitive_column_names();
    for l in [0u8, 1] {
        if !ds.y().iter().any(|&y| y == l) {
            return Err(Error::EmptyLabelSlice(l));
        }
    }
    let mut g = Array2::zeros((2 * d_s, n));
    let mut row_labels = vec![String::new(); 2 * d_s];
    let s = ds.s();
    for attr in ds.sensitive_attrs() {
        for (offset, k) in attr.columns().enumerate() {
            let col = s.column(k);
            for l in [0u8, 1] {
                let in_slice: Vec<bool> = ds.y().iter().map(|&y| y == l).collect();
                let n_l = in_slice.iter().filter(|&&b| b).count() as f64;
                let cond_mean = col
                    .iter()
                    .zip(&in_slice)
                    .filter(|(_, &b)| b)
                    .map(|(&v, _)| v)
                    .sum::<f64>()
                    / n_l;
                let name = &names[k];
                let r = attr.first_column + offset + (l as usize) * d_s;
                let covariance_form = match attr.kind {
                    SensitiveKind::Categorical => {
                        if cond_mean == 0.0 {
                            return Err(Error::DegenerateCell(format!("{name} | y={l}")));
                        }
                        false
                    }
                    SensitiveKind::Continuous => cond_mean.abs() <= NEAR_ZERO_MEAN,
                };
                let mut row = Array1::zeros(n);
                for j in 0..n {
                    if in_slice[j] {
                        row[j] = if covariance_form {
                            col[j] - cond_mean
                        } else {
                            col[j] / cond_mean - 1.0
                        };
                    }
                }
                row_labels[r] = if covariance_form {
                    format!("peo:{name}|y={l} (covariance)")
                } else {
                    format!("peo:{name}|y={l}")
                };
                g.row_mut(r).assign(&row);
            }
        }
    }
    ConstraintMatrix::from_parts(g, Notion::Peo, row_labels)
}
