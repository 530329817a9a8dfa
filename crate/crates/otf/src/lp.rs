//! Exact small-scale oracle for the transport programs.
//!
//! Solves the unsmoothed problem as a dense linear program over the n^2
//! coupling entries with a two-phase simplex. Bland's rule everywhere, so the
//! iteration provably terminates; no effort is spent on sparsity or scale
//! because the whole point of this module is to be an *independent* check on
//! the entropic solver at sizes where exactness is cheap (n <= 16).
//!
//! The strict variant enforces `G P' 1 = 0`; the relaxed variant replaces it
//! with `|G P' 1| <= gamma` (two one-sided rows per constraint), where
//! `gamma = |G h|` is the violation of the input scores themselves.

use ndarray::Array2;

use crate::constraints::ConstraintMatrix;
use crate::cost::CostMatrix;
use crate::{Error, Result};

/// Largest instance the oracle accepts.
pub const LP_MAX_N: usize = 16;

/// Reduced costs and pivots below this are treated as zero.
const PIVOT_TOL: f64 = 1e-9;

/// One transport program, ready to hand to [`solve_lp`].
#[derive(Debug, Clone)]
pub struct LpInstance {
    cost: CostMatrix,
    scores: Vec<f64>,
    constraints: ConstraintMatrix,
    relaxed: bool,
}

impl LpInstance {
    pub fn new(
        cost: CostMatrix,
        scores: Vec<f64>,
        constraints: ConstraintMatrix,
        relaxed: bool,
    ) -> Result<Self> {
        let n = scores.len();
        if n > LP_MAX_N {
            return Err(Error::LpTooLarge { n, limit: LP_MAX_N });
        }
        if cost.n() != n || constraints.n() != n {
            return Err(Error::Dimension(format!(
                "lp instance with {} scores, {}x{} cost, {} constraint columns",
                n,
                cost.n(),
                cost.n(),
                constraints.n()
            )));
        }
        if scores.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Config(
                "lp scores must be finite and strictly positive".into(),
            ));
        }
        Ok(LpInstance {
            cost,
            scores,
            constraints,
            relaxed,
        })
    }

    pub fn n(&self) -> usize {
        self.scores.len()
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub objective: f64,
    pub coupling: Array2<f64>,
}

#[derive(Clone, Copy, PartialEq)]
enum RelOp {
    Eq,
    Le,
}

/// Solve the transport program exactly.
pub fn solve_lp(instance: &LpInstance) -> Result<LpSolution> {
    let n = instance.n();
    let d_f = instance.constraints.d_f();
    let g = instance.constraints.g();
    let c = instance.cost.values();

    let n_vars = n * n;
    let var = |i: usize, j: usize| i * n + j;

    let mut rows: Vec<(Vec<f64>, RelOp, f64)> = Vec::new();
    for i in 0..n {
        let mut coeffs = vec![0.0; n_vars];
        for j in 0..n {
            coeffs[var(i, j)] = 1.0;
        }
        rows.push((coeffs, RelOp::Eq, instance.scores[i]));
    }
    let gamma = instance.constraints.residual(&instance.scores)?;
    for cidx in 0..d_f {
        let mut coeffs = vec![0.0; n_vars];
        for i in 0..n {
            for j in 0..n {
                coeffs[var(i, j)] = g[[cidx, j]];
            }
        }
        if instance.relaxed {
            let bound = gamma[cidx].abs();
            let neg: Vec<f64> = coeffs.iter().map(|v| -v).collect();
            rows.push((coeffs, RelOp::Le, bound));
            rows.push((neg, RelOp::Le, bound));
        } else {
            rows.push((coeffs, RelOp::Eq, 0.0));
        }
    }

    let mut costs = vec![0.0; n_vars];
    for i in 0..n {
        for j in 0..n {
            costs[var(i, j)] = c[[i, j]];
        }
    }

    let x = simplex(rows, &costs)?;
    let mut coupling = Array2::zeros((n, n));
    let mut objective = 0.0;
    for i in 0..n {
        for j in 0..n {
            coupling[[i, j]] = x[var(i, j)];
            objective += c[[i, j]] * x[var(i, j)];
        }
    }
    Ok(LpSolution {
        objective,
        coupling,
    })
}

/// Minimize `costs . x` subject to the rows, `x >= 0`. Dense two-phase
/// simplex with Bland's rule.
fn simplex(mut rows: Vec<(Vec<f64>, RelOp, f64)>, costs: &[f64]) -> Result<Vec<f64>> {
    let n_struct = costs.len();

    // Negative right-hand sides flip; Le with negated coefficients would
    // become Ge, which we encode as Le with an extra artificial below, so
    // track a per-row "needs artificial" flag instead of a Ge variant.
    let mut needs_surplus = Vec::with_capacity(rows.len());
    for (coeffs, op, rhs) in &mut rows {
        if *rhs < 0.0 {
            for v in coeffs.iter_mut() {
                *v = -*v;
            }
            *rhs = -*rhs;
            // A flipped Le is a Ge: keep Le marker but remember the slack
            // enters with -1 and an artificial carries the basis.
            needs_surplus.push(*op == RelOp::Le);
        } else {
            needs_surplus.push(false);
        }
    }

    let m = rows.len();
    let n_slack = rows
        .iter()
        .filter(|(_, op, _)| *op == RelOp::Le)
        .count();
    // Artificials: every Eq row and every flipped (surplus) row.
    let n_art = rows
        .iter()
        .zip(&needs_surplus)
        .filter(|((_, op, _), &surplus)| *op == RelOp::Eq || surplus)
        .count();
    let width = n_struct + n_slack + n_art + 1; // last column = rhs
    let rhs_col = width - 1;

    let mut tab = vec![vec![0.0; width]; m];
    let mut basis = vec![usize::MAX; m];
    let mut slack_cursor = n_struct;
    let mut art_cursor = n_struct + n_slack;
    let art_start = n_struct + n_slack;

    for (r, (coeffs, op, rhs)) in rows.iter().enumerate() {
        tab[r][..n_struct].copy_from_slice(coeffs);
        tab[r][rhs_col] = *rhs;
        match (op, needs_surplus[r]) {
            (RelOp::Le, false) => {
                tab[r][slack_cursor] = 1.0;
                basis[r] = slack_cursor;
                slack_cursor += 1;
            }
            (RelOp::Le, true) => {
                tab[r][slack_cursor] = -1.0;
                slack_cursor += 1;
                tab[r][art_cursor] = 1.0;
                basis[r] = art_cursor;
                art_cursor += 1;
            }
            (RelOp::Eq, _) => {
                tab[r][art_cursor] = 1.0;
                basis[r] = art_cursor;
                art_cursor += 1;
            }
        }
    }

    // Phase 1: minimize the sum of artificials.
    let mut obj = vec![0.0; width];
    for j in art_start..width - 1 {
        obj[j] = 1.0;
    }
    for r in 0..m {
        if basis[r] >= art_start {
            for j in 0..width {
                obj[j] -= tab[r][j];
            }
        }
    }
    let mut banned = vec![false; width - 1];
    iterate(&mut tab, &mut obj, &mut basis, &banned)?;
    let phase1 = -obj[rhs_col];
    let scale: f64 = rows.iter().map(|(_, _, b)| b.abs()).sum::<f64>().max(1.0);
    if phase1 > 1e-7 * scale {
        return Err(Error::LpInfeasible { residual: phase1 });
    }

    // Pivot artificials out of the basis; rows that cannot pivot are
    // redundant and get dropped.
    let mut r = 0;
    while r < tab.len() {
        if basis[r] >= art_start {
            match (0..art_start).find(|&j| tab[r][j].abs() > PIVOT_TOL) {
                Some(j) => pivot(&mut tab, &mut obj, &mut basis, r, j),
                None => {
                    tab.remove(r);
                    basis.remove(r);
                    continue;
                }
            }
        }
        r += 1;
    }
    for b in banned.iter_mut().skip(art_start) {
        *b = true;
    }

    // Phase 2: original objective.
    obj = vec![0.0; width];
    obj[..n_struct].copy_from_slice(costs);
    for r in 0..tab.len() {
        let cb = if basis[r] < n_struct {
            costs[basis[r]]
        } else {
            0.0
        };
        if cb != 0.0 {
            for j in 0..width {
                obj[j] -= cb * tab[r][j];
            }
        }
    }
    iterate(&mut tab, &mut obj, &mut basis, &banned)?;

    let mut x = vec![0.0; n_struct];
    for (r, &b) in basis.iter().enumerate() {
        if b < n_struct {
            x[b] = tab[r][rhs_col];
        }
    }
    Ok(x)
}

/// Run simplex iterations until optimal (Bland's rule on both choices).
fn iterate(
    tab: &mut Vec<Vec<f64>>,
    obj: &mut [f64],
    basis: &mut [usize],
    banned: &[bool],
) -> Result<()> {
    let width = obj.len();
    let rhs_col = width - 1;
    loop {
        let entering = (0..width - 1).find(|&j| !banned[j] && obj[j] < -PIVOT_TOL);
        let Some(col) = entering else {
            return Ok(());
        };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..tab.len() {
            let a = tab[r][col];
            if a > PIVOT_TOL {
                let ratio = tab[r][rhs_col] / a;
                let better = match leave {
                    None => true,
                    Some((lr, lratio)) => {
                        ratio < lratio - PIVOT_TOL
                            || (ratio < lratio + PIVOT_TOL && basis[r] < basis[lr])
                    }
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        let Some((row, _)) = leave else {
            return Err(Error::LpUnbounded);
        };
        pivot(tab, obj, basis, row, col);
    }
}

fn pivot(tab: &mut [Vec<f64>], obj: &mut [f64], basis: &mut [usize], row: usize, col: usize) {
    let width = obj.len();
    let p = tab[row][col];
    for v in tab[row].iter_mut() {
        *v /= p;
    }
    for r in 0..tab.len() {
        if r != row {
            let factor = tab[r][col];
            if factor != 0.0 {
                for j in 0..width {
                    tab[r][j] -= factor * tab[row][j];
                }
            }
        }
    }
    let factor = obj[col];
    if factor != 0.0 {
        for j in 0..width {
            obj[j] -= factor * tab[row][j];
        }
    }
    basis[row] = col;
}
