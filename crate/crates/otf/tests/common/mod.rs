//! Shared fixtures for the integration suites: seeded random instances small
//! enough for the exact simplex oracle, and an exact projector onto the fair
//! set for building zero-cost inputs.

#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use otf::constraints::{ConstraintMatrix, Notion};
use otf::cost::{euclidean_cost, CostMatrix, Normalization};
use otf::solver::ScoreVector;

/// One randomized solvable instance with unit-scale Euclidean costs and
/// centered parity-style constraint rows.
pub struct OracleInstance {
    pub scores: Vec<f64>,
    pub cost: CostMatrix,
    pub constraints: ConstraintMatrix,
}

impl OracleInstance {
    pub fn n(&self) -> usize {
        self.scores.len()
    }

    pub fn score_vector(&self) -> ScoreVector {
        ScoreVector::new(self.scores.clone()).unwrap()
    }
}

/// Draw an instance with `2..=max_n` samples and `1..=max_rows` constraint
/// rows.
pub fn draw_instance(rng: &mut ChaCha8Rng, max_n: usize, max_rows: usize) -> OracleInstance {
    let n = rng.gen_range(2..=max_n);
    let d_f = rng.gen_range(1..=max_rows);
    draw_instance_sized(rng, n, d_f)
}

/// Draw an instance with exactly `n` samples and `d_f` constraint rows. Rows
/// follow the parity pattern `b / mean(b) - 1`, which is centered by
/// construction, and each row is pinned to carry both signs so a strictly
/// positive fair target always exists.
pub fn draw_instance_sized(rng: &mut ChaCha8Rng, n: usize, d_f: usize) -> OracleInstance {
    let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let x = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0..1.0));
    let cost = euclidean_cost(x.view(), Normalization::MeanScaled).unwrap();

    let mut g = Array2::zeros((d_f, n));
    let mut labels = Vec::with_capacity(d_f);
    for r in 0..d_f {
        let mut bits: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        bits[r % n] = true;
        bits[(r + 1) % n] = false;
        let mean = bits.iter().filter(|b| **b).count() as f64 / n as f64;
        for (j, &b) in bits.iter().enumerate() {
            g[[r, j]] = if b { 1.0 / mean - 1.0 } else { -1.0 };
        }
        labels.push(format!("row{r}"));
    }
    let constraints = ConstraintMatrix::from_parts(g, Notion::Pdp, labels).unwrap();

    OracleInstance {
        scores,
        cost,
        constraints,
    }
}

/// Solve the d x d system `m z = rhs` by Gaussian elimination (tiny d).
fn solve_dense(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
    let d = rhs.len();
    for k in 0..d {
        let pivot = (k..d)
            .max_by(|&a, &b| m[a][k].abs().total_cmp(&m[b][k].abs()))
            .unwrap();
        m.swap(k, pivot);
        rhs.swap(k, pivot);
        let p = m[k][k];
        for r in k + 1..d {
            let f = m[r][k] / p;
            for c in k..d {
                m[r][c] -= f * m[k][c];
            }
            rhs[r] -= f * rhs[k];
        }
    }
    let mut z = vec![0.0; d];
    for k in (0..d).rev() {
        let mut v = rhs[k];
        for c in k + 1..d {
            v -= m[k][c] * z[c];
        }
        z[k] = v / m[k][k];
    }
    z
}

/// Project `h` onto the null-space of the constraint rows:
/// `h - g' (g g')^-1 g h`. Returns non-finite entries when the rows are
/// linearly dependent; callers should filter such draws.
pub fn project_to_fair(cm: &ConstraintMatrix, h: &[f64]) -> Vec<f64> {
    let g = cm.g();
    let d = cm.d_f();
    let gh = cm.residual(h).unwrap();
    let mut gram = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in 0..d {
            gram[a][b] = g.row(a).dot(&g.row(b));
        }
    }
    let z = solve_dense(gram, gh);
    let mut out = h.to_vec();
    for (j, v) in out.iter_mut().enumerate() {
        for (c, zc) in z.iter().enumerate() {
            *v -= g[[c, j]] * zc;
        }
    }
    out
}

/// True when every projected entry survived inside the open score box.
pub fn inside_score_box(fair: &[f64]) -> bool {
    fair.iter().all(|v| v.is_finite() && *v > 0.02 && *v <= 1.0)
}
