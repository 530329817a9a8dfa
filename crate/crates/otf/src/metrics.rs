//! Ranking quality and fairness violation measurements.
//!
//! Violations are measured as absolute Pearson correlations between scores
//! and sensitive columns: zero correlation against every indicator is
//! equivalent to equal group means, which is what the constraint rows
//! enforce in expectation. The parity notion correlates over the whole
//! sample, the equal-opportunity notion correlates within each label slice
//! and takes the worst case.

use std::collections::BTreeMap;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::constraints::Notion;
use crate::{Error, Result};

/// Standard-deviation threshold below which a column counts as constant.
const CONSTANT_TOL: f64 = 1e-12;

/// Area under the ROC curve via the rank-sum statistic.
///
/// Ties receive average ranks, so exchanging tied samples never changes the
/// result. Errors if only one class is present.
///
/// # Examples
///
/// ```
/// use otf::metrics::auc;
///
/// // Every positive outranks every negative.
/// let perfect = auc(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap();
/// assert!((perfect - 1.0).abs() < 1e-12);
///
/// // Positives and negatives interleave evenly.
/// let chance = auc(&[0.9, 0.1, 0.8, 0.2], &[1, 1, 0, 0]).unwrap();
/// assert!((chance - 0.5).abs() < 1e-12);
/// ```
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} scores against {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 {
        return Err(Error::SingleClass("positive"));
    }
    if negatives == 0 {
        return Err(Error::SingleClass("negative"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based average rank of the tied block [start, end).
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        start = end;
    }
    let np = positives as f64;
    let nn = negatives as f64;
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Violation of one fairness notion, with per-column detail.
#[derive(Debug, Clone, Serialize)]
pub struct ViolationReport {
    /// Worst absolute correlation across columns (and label slices).
    pub value: f64,
    /// Per-column worst absolute correlation, in column order.
    pub per_column: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Demographic-parity violation: worst `|corr(scores, S_k)|` over columns.
///
/// # Examples
///
/// ```
/// use ndarray::array;
/// use otf::metrics::pdp_violation;
///
/// // Scores that copy the group indicator correlate with it perfectly.
/// let copied = pdp_violation(&[1.0, 0.0, 1.0, 0.0],
///                            array![[1.0], [0.0], [1.0], [0.0]].view()).unwrap();
/// assert!((copied.value - 1.0).abs() < 1e-12);
///
/// // Pooling a perfectly separating half with a tied half dilutes the
/// // correlation to 1 over sqrt(2).
/// let scores = [0.875, 0.875, 0.625, 0.625, 0.75, 0.75, 0.75, 0.75];
/// let s = array![[1.0], [1.0], [0.0], [0.0], [1.0], [1.0], [0.0], [0.0]];
/// let pooled = pdp_violation(&scores, s.view()).unwrap();
/// assert!((pooled.value - 0.5f64.sqrt()).abs() < 1e-12);
/// ```
pub fn pdp_violation(scores: &[f64], sensitive: ArrayView2<f64>) -> Result<ViolationReport> {
    if scores.len() != sensitive.nrows() {
        return Err(Error::Dimension(format!(
            "{} scores against {} sensitive rows",
            scores.len(),
            sensitive.nrows()
        )));
    }
    let mut per_column = Vec::with_capacity(sensitive.ncols());
    let mut warnings = Vec::new();
    for k in 0..sensitive.ncols() {
        let col = sensitive.column(k).to_vec();
        match pearson(scores, &col) {
            Some(r) => per_column.push(r.abs()),
            None => {
                warnings.push(format!(
                    "column {k} or the scores are constant; correlation treated as zero"
                ));
                per_column.push(0.0);
            }
        }
    }
    let value = per_column.iter().fold(0.0f64, |a, &b| a.max(b));
    Ok(ViolationReport {
        value,
        per_column,
        warnings,
    })
}

/// Equal-opportunity violation: worst within-label correlation.
///
/// # Examples
///
/// ```
/// use ndarray::array;
/// use otf::metrics::peo_violation;
///
/// // The positive slice separates the groups perfectly. The negative slice
/// // is all ties, so it is flagged as constant and counts as zero.
/// let scores = [0.875, 0.875, 0.625, 0.625, 0.75, 0.75, 0.75, 0.75];
/// let s = array![[1.0], [1.0], [0.0], [0.0], [1.0], [1.0], [0.0], [0.0]];
/// let y = [1, 1, 1, 1, 0, 0, 0, 0];
/// let report = peo_violation(&scores, s.view(), &y).unwrap();
/// assert!((report.value - 1.0).abs() < 1e-12);
/// assert_eq!(report.warnings.len(), 1);
/// ```
pub fn peo_violation(
    scores: &[f64],
    sensitive: ArrayView2<f64>,
    labels: &[u8],
) -> Result<ViolationReport> {
    if scores.len() != sensitive.nrows() || scores.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} scores, {} sensitive rows, {} labels",
            scores.len(),
            sensitive.nrows(),
            labels.len()
        )));
    }
    let mut per_column = vec![0.0f64; sensitive.ncols()];
    let mut warnings = Vec::new();
    for label in [0u8, 1u8] {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
        if idx.is_empty() {
            return Err(Error::EmptyLabelSlice(label));
        }
        let sub_scores: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        for k in 0..sensitive.ncols() {
            let sub_col: Vec<f64> = idx.iter().map(|&i| sensitive[[i, k]]).collect();
            match pearson(&sub_scores, &sub_col) {
                Some(r) => per_column[k] = per_column[k].max(r.abs()),
                None => warnings.push(format!(
                    "column {k} or the scores are constant within label {label}; \
                     correlation treated as zero"
                )),
            }
        }
    }
    let value = per_column.iter().fold(0.0f64, |a, &b| a.max(b));
    Ok(ViolationReport {
        value,
        per_column,
        warnings,
    })
}

/// All evaluation numbers for one scored dataset.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub auc: f64,
    pub pdp_violation: f64,
    pub peo_violation: f64,
    pub warnings: Vec<String>,
}

/// Compute AUC plus both violation notions in one shot.
pub fn compute_metrics(
    scores: &[f64],
    sensitive: ArrayView2<f64>,
    labels: &[u8],
) -> Result<MetricsReport> {
    let auc_value = auc(scores, labels)?;
    let pdp = pdp_violation(scores, sensitive)?;
    let peo = peo_violation(scores, sensitive, labels)?;
    let mut warnings = pdp.warnings;
    warnings.extend(peo.warnings);
    Ok(MetricsReport {
        auc: auc_value,
        pdp_violation: pdp.value,
        peo_violation: peo.value,
        warnings,
    })
}

/// One completed training run inside a sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    /// Regularizer name, e.g. "otf", "norm", "none".
    pub method: String,
    pub alpha: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub notion: Notion,
    pub auc: f64,
    pub violation: f64,
}

/// Per-cell aggregate over seeds.
#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub method: String,
    pub alpha: f64,
    pub epsilon: f64,
    pub runs: usize,
    pub auc_mean: f64,
    pub auc_se: f64,
    pub violation_mean: f64,
    pub violation_se: f64,
}

/// Group runs by `(method, alpha, epsilon)` and attach standard errors.
///
/// Every cell needs at least two runs; the standard error of a single seed
/// is undefined and a table quietly built from one run per cell has misled
/// people before. Mixing violation notions in one sweep is rejected because
/// their numbers are not comparable.
///
/// # Examples
///
/// ```
/// use otf::constraints::Notion;
/// use otf::metrics::{aggregate_sweep, RunRecord};
///
/// let run = |seed, auc, violation| RunRecord {
///     method: "otf".into(),
///     alpha: 0.5,
///     epsilon: 1e-3,
///     seed,
///     notion: Notion::Pdp,
///     auc,
///     violation,
/// };
/// let cells = aggregate_sweep(&[run(0, 0.8, 0.2), run(1, 0.9, 0.2)]).unwrap();
/// assert!((cells[0].auc_mean - 0.85).abs() < 1e-12);
/// assert!((cells[0].auc_se - 0.05).abs() < 1e-12);
/// ```
pub fn aggregate_sweep(records: &[RunRecord]) -> Result<Vec<CellSummary>> {
    if records.is_empty() {
        return Err(Error::Config("no runs to aggregate".into()));
    }
    let notion = records[0].notion;
    for r in records {
        if r.notion != notion {
            return Err(Error::MixedNotions(notion.to_string(), r.notion.to_string()));
        }
    }
    let mut cells: BTreeMap<(String, u64, u64), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        cells
            .entry((r.method.clone(), r.alpha.to_bits(), r.epsilon.to_bits()))
            .or_default()
            .push(r);
    }
    let mut out = Vec::with_capacity(cells.len());
    for ((method, _, _), runs) in cells {
        if runs.len() < 2 {
            return Err(Error::Config(format!(
                "cell (method = {method}, alpha = {}, epsilon = {}) has {} run(s); \
                 at least 2 seeds are needed for a standard error",
                runs[0].alpha,
                runs[0].epsilon,
                runs.len()
            )));
        }
        let aucs: Vec<f64> = runs.iter().map(|r| r.auc).collect();
        let violations: Vec<f64> = runs.iter().map(|r| r.violation).collect();
        let (auc_mean, auc_se) = mean_and_se(&aucs);
        let (violation_mean, violation_se) = mean_and_se(&violations);
        out.push(CellSummary {
            method,
            alpha: runs[0].alpha,
            epsilon: runs[0].epsilon,
            runs: runs.len(),
            auc_mean,
            auc_se,
            violation_mean,
            violation_se,
        });
    }
    Ok(out)
}

/// Sample mean and standard error (sample standard deviation over sqrt k).
fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, var.sqrt() / k.sqrt())
}

/// `None` when either side is (numerically) constant.
fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va.sqrt() < CONSTANT_TOL * n.sqrt() || vb.sqrt() < CONSTANT_TOL * n.sqrt() {
        return None;
    }
    Some(cov / (va.sqrt() * vb.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn auc_of_interleaved_scores_is_one_half() {
        let value = auc(&[0.9, 0.1, 0.8, 0.2], &[1, 1, 0, 0]).unwrap();
        assert!((value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn auc_extremes_and_ties() {
        let perfect = auc(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap();
        assert_eq!(perfect, 1.0);
        let inverted = auc(&[0.1, 0.2, 0.8, 0.9], &[1, 1, 0, 0]).unwrap();
        assert_eq!(inverted, 0.0);
        let tied = auc(&[0.5, 0.5], &[1, 0]).unwrap();
        assert!((tied - 0.5).abs() < 1e-12);
    }

    #[test]
    fn auc_rejects_single_class() {
        assert!(matches!(
            auc(&[0.1, 0.2], &[1, 1]),
            Err(Error::SingleClass("negative"))
        ));
        assert!(matches!(
            auc(&[0.1, 0.2], &[0, 0]),
            Err(Error::SingleClass("positive"))
        ));
    }

    #[test]
    fn auc_is_invariant_under_monotone_transforms() {
        let scores = [0.13, 0.82, 0.4, 0.77, 0.5, 0.31];
        let labels = [0, 1, 0, 1, 1, 0];
        let base = auc(&scores, &labels).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|s| (5.0 * s).tanh()).collect();
        let shifted: Vec<f64> = scores.iter().map(|s| 3.0 * s + 11.0).collect();
        assert_eq!(base, auc(&squashed, &labels).unwrap());
        assert_eq!(base, auc(&shifted, &labels).unwrap());
    }

    #[test]
    fn parity_violation_is_the_worst_column_correlation() {
        // First column correlates perfectly, second is balanced against the
        // scores' symmetric pattern.
        let scores = [0.9, 0.1, 0.9, 0.1];
        let s = array![[1.0, 1.0], [0.0, 1.0], [1.0, 0.0], [0.0, 0.0]];
        let report = pdp_violation(&scores, s.view()).unwrap();
        assert!((report.per_column[0] - 1.0).abs() < 1e-12);
        assert!(report.per_column[1].abs() < 1e-12);
        assert!((report.value - 1.0).abs() < 1e-12);
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn constant_column_warns_and_counts_as_zero() {
        let scores = [0.9, 0.1, 0.4];
        let s = array![[1.0], [1.0], [1.0]];
        let report = pdp_violation(&scores, s.view()).unwrap();
        assert_eq!(report.value, 0.0);
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn opportunity_violation_sees_within_label_structure() {
        // Balanced overall (parity = 0) but perfectly separating inside each
        // label slice, so the opportunity notion maxes out.
        let scores = [0.8, 0.6, 0.3, 0.5];
        let s = array![[1.0], [0.0], [1.0], [0.0]];
        let y = [1, 1, 0, 0];
        let pdp = pdp_violation(&scores, s.view()).unwrap();
        let peo = peo_violation(&scores, s.view(), &y).unwrap();
        assert!(pdp.value.abs() < 1e-12, "pdp = {}", pdp.value);
        assert!((peo.value - 1.0).abs() < 1e-12, "peo = {}", peo.value);
    }

    #[test]
    fn opportunity_violation_requires_both_labels() {
        let scores = [0.8, 0.6];
        let s = array![[1.0], [0.0]];
        assert!(matches!(
            peo_violation(&scores, s.view(), &[1, 1]),
            Err(Error::EmptyLabelSlice(0))
        ));
    }

    #[test]
    fn correlation_is_invariant_under_affine_score_maps() {
        let scores = [0.3, 0.9, 0.5, 0.2, 0.7];
        let rescaled: Vec<f64> = scores.iter().map(|v| 4.0 * v - 1.0).collect();
        let s = array![[1.0], [0.0], [1.0], [0.0], [1.0]];
        let a = pdp_violation(&scores, s.view()).unwrap().value;
        let b = pdp_violation(&rescaled, s.view()).unwrap().value;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn aggregate_attaches_sample_standard_errors() {
        let record = |method: &str, seed: u64, auc: f64, violation: f64| RunRecord {
            method: method.into(),
            alpha: 0.5,
            epsilon: 1e-3,
            seed,
            notion: Notion::Pdp,
            auc,
            violation,
        };
        let records = vec![
            record("otf", 0, 0.8, 0.1),
            record("otf", 1, 0.9, 0.3),
            record("none", 0, 0.7, 0.2),
            record("none", 1, 0.7, 0.2),
        ];
        let cells = aggregate_sweep(&records).unwrap();
        assert_eq!(cells.len(), 2);
        let otf = cells.iter().find(|c| c.method == "otf").unwrap();
        assert!((otf.auc_mean - 0.85).abs() < 1e-12);
        assert!((otf.auc_se - 0.05).abs() < 1e-12);
        assert!((otf.violation_mean - 0.2).abs() < 1e-12);
        assert!((otf.violation_se - 0.1).abs() < 1e-12);
        let none = cells.iter().find(|c| c.method == "none").unwrap();
        assert_eq!(none.auc_se, 0.0);
    }

    #[test]
    fn aggregate_rejects_lonely_cells_and_mixed_notions() {
        let base = RunRecord {
            method: "otf".into(),
            alpha: 0.5,
            epsilon: 1e-3,
            seed: 0,
            notion: Notion::Pdp,
            auc: 0.8,
            violation: 0.1,
        };
        let lonely = vec![base.clone()];
        assert!(matches!(aggregate_sweep(&lonely), Err(Error::Config(_))));

        let mut peo_run = base.clone();
        peo_run.seed = 1;
        peo_run.notion = Notion::Peo;
        let mixed = vec![base, peo_run];
        assert!(matches!(
            aggregate_sweep(&mixed),
            Err(Error::MixedNotions(_, _))
        ));
    }

    #[test]
    fn full_report_combines_all_three_numbers() {
        let scores = [0.8, 0.6, 0.3, 0.5];
        let s = array![[1.0], [0.0], [1.0], [0.0]];
        let y = [1, 1, 0, 0];
        let report = compute_metrics(&scores, s.view(), &y).unwrap();
        assert!((report.auc - 1.0).abs() < 1e-12);
        assert!(report.pdp_violation.abs() < 1e-12);
        assert!((report.peo_violation - 1.0).abs() < 1e-12);
    }
}
