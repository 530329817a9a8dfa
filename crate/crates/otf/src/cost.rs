//! Pairwise transport costs between samples.
//!
//! The unfairness cost prices moving score mass from one sample onto another,
//! so "similar individuals are cheap to exchange" has to be encoded somewhere:
//! here, as plain Euclidean distance on the preprocessed, non-sensitive
//! feature rows. Sensitive columns never enter the feature matrix (see
//! [`crate::data`]), so they cannot leak into the cost.

use ndarray::{Array2, ArrayView2};

use crate::{Error, Result};

/// How a finished cost matrix is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Raw distances.
    None,
    /// Distances divided by the mean entry of the matrix, so the average
    /// exchange costs 1. Useful when comparing runs across feature scales.
    MeanScaled,
}

/// Dense pairwise cost matrix between samples.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    values: Array2<f64>,
    normalization: Normalization,
}

impl CostMatrix {
    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Largest entry; the solver reports it when diagnosing overflow.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
    }

    /// Wrap an explicit square matrix (tests, snippets, the LP debug path).
    pub fn from_raw(values: Array2<f64>, normalization: Normalization) -> CostMatrix {
        assert_eq!(
            values.nrows(),
            values.ncols(),
            "cost matrix must be square"
        );
        let mut values = values;
        apply_normalization(&mut values, normalization);
        CostMatrix {
            values,
            normalization,
        }
    }
}

/// Full pairwise Euclidean cost over all rows of `x`.
pub fn euclidean_cost(x: ArrayView2<'_, f64>, normalization: Normalization) -> Result<CostMatrix> {
    check_finite(x)?;
    let n = x.nrows();
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d = row_distance(x, i, j);
            values[[i, j]] = d;
            values[[j, i]] = d;
        }
    }
    apply_normalization(&mut values, normalization);
    Ok(CostMatrix {
        values,
        normalization,
    })
}

/// Pairwise Euclidean cost among `indices` only.
///
/// Builds the b x b block directly from the selected rows; the full n x n
/// matrix is never materialized, which is what makes minibatch training
/// affordable. Entries match the corresponding entries of
/// [`euclidean_cost`] exactly (before normalization, which here rescales by
/// the mean of the *batch* block).
pub fn batch_cost(
    x: ArrayView2<'_, f64>,
    indices: &[usize],
    normalization: Normalization,
) -> Result<CostMatrix> {
    let n = x.nrows();
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
    for &idx in indices {
        if x.row(idx).iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature(idx));
        }
    }

    let b = indices.len();
    let mut values = Array2::zeros((b, b));
    for (bi, &i) in indices.iter().enumerate() {
        for (bj, &j) in indices.iter().enumerate().skip(bi + 1) {
            let d = row_distance(x, i, j);
            values[[bi, bj]] = d;
            values[[bj, bi]] = d;
        }
    }
    apply_normalization(&mut values, normalization);
    Ok(CostMatrix {
        values,
        normalization,
    })
}

fn row_distance(x: ArrayView2<'_, f64>, i: usize, j: usize) -> f64 {
    let (ri, rj) = (x.row(i), x.row(j));
    ri.iter()
        .zip(rj.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn apply_normalization(values: &mut Array2<f64>, normalization: Normalization) {
    if normalization == Normalization::MeanScaled {
        let mean = values.mean().unwrap_or(0.0);
        if mean > 0.0 {
            values.mapv_inplace(|v| v / mean);
        }
    }
}

fn check_finite(x: ArrayView2<'_, f64>) -> Result<()> {
    for (i, row) in x.rows().into_iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature(i));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn three_four_five_triangle() {
        let x = array![[0.0, 0.0], [3.0, 4.0]];
        let c = euclidean_cost(x.view(), Normalization::None).unwrap();
        assert_eq!(c.values()[[0, 0]], 0.0);
        assert_eq!(c.values()[[1, 1]], 0.0);
        assert_abs_diff_eq!(c.values()[[0, 1]], 5.0);
        assert_abs_diff_eq!(c.values()[[1, 0]], 5.0);
    }

    #[test]
    fn mean_scaling_divides_by_mean() {
        let x = array![[0.0, 0.0], [3.0, 4.0]];
        let c = euclidean_cost(x.view(), Normalization::MeanScaled).unwrap();
        // mean of [[0,5],[5,0]] is 2.5
        assert_abs_diff_eq!(c.values()[[0, 1]], 2.0);
    }

    #[test]
    fn batch_matches_full_block() {
        let x = array![
            [0.2, -1.0, 0.4],
            [1.5, 0.3, -0.2],
            [-0.7, 0.9, 2.2],
            [0.0, 0.0, 0.0],
        ];
        let full = euclidean_cost(x.view(), Normalization::None).unwrap();
        let idx = [3usize, 1];
        let batch = batch_cost(x.view(), &idx, Normalization::None).unwrap();
        for (bi, &i) in idx.iter().enumerate() {
            for (bj, &j) in idx.iter().enumerate() {
                assert_eq!(batch.values()[[bi, bj]], full.values()[[i, j]]);
            }
        }
    }

    #[test]
    fn rejects_bad_indices() {
        let x = array![[0.0], [1.0]];
        assert!(matches!(
            batch_cost(x.view(), &[0, 2], Normalization::None),
            Err(Error::BatchIndexRange { index: 2, n: 2 })
        ));
        assert!(matches!(
            batch_cost(x.view(), &[1, 1], Normalization::None),
            Err(Error::BatchIndexDuplicate(1))
        ));
    }

    #[test]
    fn rejects_non_finite_rows() {
        let x = array![[0.0], [f64::NAN]];
        assert!(matches!(
            euclidean_cost(x.view(), Normalization::None),
            Err(Error::NonFiniteFeature(1))
        ));
    }
}
