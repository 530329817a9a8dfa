//! Entropic transport solvers for fairness-constrained score repair.
//!
//! Given scores `h` (one positive mass per sample), a cost matrix `C`, and a
//! fairness constraint matrix `G`, the strict problem moves the score mass
//! onto a fair target at minimal transport cost, with an entropy term that
//! makes the problem smooth and its value differentiable in `h`:
//!
//! ```text
//!     E(h)  =  min_{P >= 0}  <C, P> - eps * H(P)
//!              s.t.  P 1 = h,   G P' 1 = 0
//! ```
//!
//! where `H(P) = -sum_ij P_ij (log P_ij - 1)`. The relaxed problem replaces
//! the hard fairness constraint by `|G P' 1| <= |G h|`, which is always
//! satisfiable (by not moving anything), so the difference `E(h) - R(h)` is
//! a nonnegative penalty that vanishes exactly when `h` is already fair.
//! [`adjusted_otf`] computes that difference and its score gradient.
//!
//! Both problems are solved in the dual, which is smooth, concave, and
//! unconstrained in the sample potentials:
//!
//! ```text
//!     L(lambda, mu) = sum_i lambda_i h_i
//!                     - eps * sum_ij exp((-C_ij + lambda_i + m_j) / eps),
//!     m_j = sum_c mu_c G_cj
//! ```
//!
//! The ascent is exact coordinate maximization. `L` is separable in the
//! sample potentials, so the whole `lambda` block updates in closed form:
//!
//! ```text
//!     lambda_i = eps * (log h_i - LSE_j((m_j - C_ij) / eps))
//! ```
//!
//! after which the coupling's row sums equal `h` to machine precision. Each
//! constraint multiplier is then maximized exactly by the 1-D Newton solve
//! in [`scalar`]; its residual is the constraint moment of the current
//! coupling, so `inner_tol` is a bound on fairness-residual units. Every
//! block update increases `L`, which gives the convergence tests something
//! sharp to check. The relaxed dual is identical except that each constraint
//! carries a pair of nonpositive multipliers (one per inequality side) and a
//! linear reward `gamma_c = |G h|_c` for slack.
//!
//! All exponentials run through max-shifted log-sum-exp, so the solvers
//! tolerate `eps` down to 1e-4 and cost scales far above `eps` without
//! overflow. Iteration cost is `O(n^2 + d n)` per sweep with no allocation
//! inside the loop.

mod scalar;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintMatrix;
use crate::cost::CostMatrix;
use crate::{Error, Result};
use scalar::Scalar1d;

/// Epsilon above which the entropy term dominates the transport signal and
/// the adjusted cost is driven toward zero regardless of fairness.
pub const LARGE_EPSILON_WARNING: f64 = 0.1;

/// Tuning knobs shared by the strict and relaxed solvers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Entropy regularization strength.
    pub epsilon: f64,
    /// Stop when no dual variable, potential or multiplier, changed by more
    /// than this over one sweep.
    pub outer_tol: f64,
    /// Residual tolerance of the 1-D multiplier solves, in units of the
    /// fairness moment `|sum_j G_cj f_j|`.
    pub inner_tol: f64,
    pub max_outer_sweeps: usize,
    pub max_inner_iters: usize,
    /// Raw scores are clamped into `[score_floor, 1]` before solving; the
    /// dual needs strictly positive masses.
    pub score_floor: f64,
    /// Extend the displacement of a non-contracting sweep by a doubling line
    /// search. Rescues the creep that sets in when meeting the constraint
    /// requires transport along routes the kernel suppresses; turn it off for
    /// deliberately budget-capped solves whose dual state should average
    /// across successive problems rather than chase each one.
    pub stall_extrapolation: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: 1e-3,
            outer_tol: 1e-8,
            inner_tol: 1e-10,
            max_outer_sweeps: 1000,
            max_inner_iters: 100,
            score_floor: 1e-6,
            stall_extrapolation: true,
        }
    }
}

impl SolverConfig {
    /// Check the configuration, returning advisory warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::Config(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        if !self.outer_tol.is_finite() || self.outer_tol <= 0.0 {
            return Err(Error::Config("outer_tol must be positive".into()));
        }
        if !self.inner_tol.is_finite() || self.inner_tol <= 0.0 {
            return Err(Error::Config("inner_tol must be positive".into()));
        }
        if self.max_outer_sweeps == 0 {
            return Err(Error::Config("max_outer_sweeps must be at least 1".into()));
        }
        if self.max_inner_iters == 0 {
            return Err(Error::Config("max_inner_iters must be at least 1".into()));
        }
        if !(self.score_floor > 0.0 && self.score_floor <= 0.5) {
            return Err(Error::Config(format!(
                "score_floor must lie in (0, 0.5], got {}",
                self.score_floor
            )));
        }
        let mut warnings = Vec::new();
        if self.epsilon > LARGE_EPSILON_WARNING {
            warnings.push(format!(
                "epsilon = {} exceeds {}: the entropy term dominates transport \
                 cost, the strict and relaxed objectives nearly cancel, and the \
                 adjusted cost loses its meaning as a fairness penalty",
                self.epsilon, LARGE_EPSILON_WARNING
            ));
        }
        Ok(warnings)
    }
}

/// Strictly positive per-sample masses, at most 1 each.
#[derive(Debug, Clone)]
pub struct ScoreVector {
    values: Vec<f64>,
}

impl ScoreVector {
    /// Wrap already-valid scores; every entry must lie in `(0, 1]`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Dimension("score vector is empty".into()));
        }
        for (i, &v) in values.iter().enumerate() {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Dimension(format!(
                    "score {i} is {v}, outside (0, 1]"
                )));
            }
        }
        Ok(ScoreVector { values })
    }

    /// Clamp raw model outputs into `[floor, 1]`.
    pub fn clamped(raw: &[f64], floor: f64) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Dimension("score vector is empty".into()));
        }
        let mut values = Vec::with_capacity(raw.len());
        for (i, &v) in raw.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Dimension(format!("score {i} is {v}")));
            }
            values.push(v.clamp(floor, 1.0));
        }
        Ok(ScoreVector { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Optimal duals of the strict problem.
#[derive(Debug, Clone)]
pub struct DualState {
    /// Sample potentials; also the gradient of the strict cost in `h`.
    pub lambda: Vec<f64>,
    /// One multiplier per constraint row.
    pub mu: Vec<f64>,
}

/// Optimal duals of the relaxed problem.
#[derive(Debug, Clone)]
pub struct RelaxedDualState {
    /// Sample potentials.
    pub kappa: Vec<f64>,
    /// Multipliers of the upper inequality sides, each `<= 0`.
    pub phi: Vec<f64>,
    /// Multipliers of the lower inequality sides, each `<= 0`.
    pub psi: Vec<f64>,
    /// Slack bounds `|G h|` the solve was run with.
    pub gamma: Vec<f64>,
    /// Signs of the residual `G h` (zero residuals get sign zero).
    pub gamma_sign: Vec<f64>,
}

/// Anything that determines a Gibbs coupling `exp((-C + a_i + m_j) / eps)`.
pub trait DualPotentials {
    fn sample_potential(&self) -> &[f64];
    /// Column adjustment `m_j` induced by the constraint multipliers.
    fn column_adjustment(&self, g: ArrayView2<f64>) -> Vec<f64>;
}

impl DualPotentials for DualState {
    fn sample_potential(&self) -> &[f64] {
        &self.lambda
    }

    fn column_adjustment(&self, g: ArrayView2<f64>) -> Vec<f64> {
        weighted_columns(g, &self.mu)
    }
}

impl DualPotentials for RelaxedDualState {
    fn sample_potential(&self) -> &[f64] {
        &self.kappa
    }

    fn column_adjustment(&self, g: ArrayView2<f64>) -> Vec<f64> {
        let diff: Vec<f64> = self
            .phi
            .iter()
            .zip(&self.psi)
            .map(|(p, q)| p - q)
            .collect();
        weighted_columns(g, &diff)
    }
}

/// Solution summary common to both solvers.
#[derive(Debug, Clone)]
pub struct SolveResult<D> {
    /// Optimal objective value (dual value at the returned state).
    pub objective: f64,
    pub duals: D,
    /// Gradient of the objective with respect to the scores.
    pub score_gradient: Vec<f64>,
    /// Row sums of the implied coupling; equal to the scores up to float
    /// rounding because the sample potentials are synced last.
    pub row_marginals: Vec<f64>,
    /// Column sums of the implied coupling.
    pub col_marginals: Vec<f64>,
    /// Constraint moments `G f` of the column marginals.
    pub fairness_residual: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
}

/// Progress callbacks, emitted only when a trace sink is supplied.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    /// After the closed-form sample-potential block update. `max_delta` is
    /// the sup-norm potential change of that update alone.
    RowUpdate {
        sweep: usize,
        dual_value: f64,
        max_delta: f64,
    },
    /// After one exact 1-D multiplier maximization.
    MultiplierUpdate {
        sweep: usize,
        coordinate: usize,
        dual_value: f64,
    },
    /// End-of-sweep summary. `max_delta` is the largest change any dual
    /// variable, potential or multiplier, made during the sweep; the sweep
    /// that drops it below the outer tolerance is the converging one.
    SweepEnd {
        sweep: usize,
        dual_value: f64,
        max_delta: f64,
        fairness_residual: f64,
    },
}

/// Sweep-over-sweep contraction above which the ascent counts as stalled.
///
/// When the regularization is far below the cost scale and the constraint can
/// only be met by routing mass through a high-cost pair, the potential update
/// cancels almost everything the multiplier update just did: the iterate then
/// creeps along a flat ascent ray in near-constant steps of order `eps`, and
/// the per-sweep change stops contracting. Watching the contraction ratio
/// catches exactly that regime.
const STALL_RATIO: f64 = 0.75;

/// Cap on the doubling line search along a stalled sweep's displacement.
const MAX_DOUBLINGS: usize = 60;

/// Strict solver: bisection-free exact coordinate ascent on the dual.
pub fn solve_otfe(
    scores: &ScoreVector,
    cost: &CostMatrix,
    constraints: &ConstraintMatrix,
    config: &SolverConfig,
    warm: Option<&DualState>,
    mut trace: Option<&mut dyn FnMut(&TraceEvent)>,
) -> Result<SolveResult<DualState>> {
    config.validate()?;
    let n = scores.len();
    check_dimensions(n, cost, constraints)?;
    constraints.check_positive_feasibility()?;

    let eps = config.epsilon;
    let inv = 1.0 / eps;
    let h = scores.values();
    let c = cost.values();
    let g = constraints.g();
    let d = constraints.d_f();
    let log_h: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let numeric = |context: &'static str| Error::Numeric {
        context,
        epsilon: eps,
        cost_scale: cost.max_abs(),
    };

    let mut mu = match warm {
        Some(w) if w.mu.len() == d => w.mu.clone(),
        _ => vec![0.0; d],
    };
    let mut lambda = match warm {
        Some(w) if w.lambda.len() == n => w.lambda.clone(),
        _ => vec![0.0; n],
    };
    let mut z = vec![0.0; n];
    let mut log_eta = vec![f64::NEG_INFINITY; n];
    let mut m = weighted_columns(g, &mu);
    let mut base_mu = mu.clone();
    let mut sweeps = 0;
    let mut converged = false;
    let mut prev_delta = f64::INFINITY;

    loop {
        sweeps += 1;
        let mut max_delta = update_sample_potentials(c, &m, inv, eps, &log_h, &mut lambda, &mut z)
            .ok_or_else(|| numeric("sample potential update"))?;
        update_log_eta(c, &lambda, inv, &mut log_eta);
        if trace.is_some() {
            let value =
                dual_value(&lambda, h, &log_eta, &m, inv, eps, 0.0).ok_or_else(|| numeric("dual value"))?;
            emit(
                &mut trace,
                TraceEvent::RowUpdate {
                    sweep: sweeps,
                    dual_value: value,
                    max_delta,
                },
            );
        }
        base_mu.copy_from_slice(&mu);

        for cidx in 0..d {
            let row = g.row(cidx);
            let coeff: Vec<f64> = row.to_vec();
            let u: Vec<f64> = (0..n)
                .map(|j| log_eta[j] + (m[j] - mu[cidx] * coeff[j]) * inv)
                .collect();
            let problem = Scalar1d {
                gamma: 0.0,
                coeff: &coeff,
                log_weight: &u,
                eps,
                upper: None,
                tol: config.inner_tol,
                max_iter: config.max_inner_iters,
            };
            let next = problem.maximize(mu[cidx])?;
            if next != mu[cidx] {
                let shift = next - mu[cidx];
                max_delta = max_delta.max(shift.abs());
                mu[cidx] = next;
                for j in 0..n {
                    m[j] += shift * coeff[j];
                }
            }
            if trace.is_some() {
                let value = dual_value(&lambda, h, &log_eta, &m, inv, eps, 0.0)
                    .ok_or_else(|| numeric("dual value"))?;
                emit(
                    &mut trace,
                    TraceEvent::MultiplierUpdate {
                        sweep: sweeps,
                        coordinate: cidx,
                        dual_value: value,
                    },
                );
            }
        }

        if config.stall_extrapolation
            && max_delta > config.outer_tol
            && max_delta > STALL_RATIO * prev_delta
        {
            if let Some(shift) = extrapolate_multipliers(
                c,
                g,
                inv,
                eps,
                &log_h,
                h,
                &base_mu,
                &mut mu,
                &mut m,
                &mut lambda,
                &mut z,
                &mut log_eta,
            ) {
                max_delta = max_delta.max(shift);
            }
        }
        prev_delta = max_delta;

        if trace.is_some() {
            let value =
                dual_value(&lambda, h, &log_eta, &m, inv, eps, 0.0).ok_or_else(|| numeric("dual value"))?;
            let f = column_marginals(&log_eta, &m, inv);
            let resid = constraint_moments(g, &f);
            emit(
                &mut trace,
                TraceEvent::SweepEnd {
                    sweep: sweeps,
                    dual_value: value,
                    max_delta,
                    fairness_residual: max_abs(&resid),
                },
            );
        }

        if max_delta <= config.outer_tol {
            converged = true;
            break;
        }
        if sweeps >= config.max_outer_sweeps {
            break;
        }
    }

    // Final sync: one more closed-form potential update makes the row sums
    // exact for the multipliers being returned.
    update_sample_potentials(c, &m, inv, eps, &log_h, &mut lambda, &mut z)
        .ok_or_else(|| numeric("sample potential update"))?;
    update_log_eta(c, &lambda, inv, &mut log_eta);

    let col_marginals = column_marginals(&log_eta, &m, inv);
    let fairness_residual = constraint_moments(g, &col_marginals);
    let row_marginals: Vec<f64> = (0..n).map(|i| (lambda[i] * inv + z[i]).exp()).collect();
    let objective =
        dual_value(&lambda, h, &log_eta, &m, inv, eps, 0.0).ok_or_else(|| numeric("dual value"))?;
    let score_gradient = lambda.clone();

    Ok(SolveResult {
        objective,
        duals: DualState { lambda, mu },
        score_gradient,
        row_marginals,
        col_marginals,
        fairness_residual,
        converged,
        sweeps,
    })
}

/// Relaxed solver: same ascent with paired one-sided multipliers.
pub fn solve_otfre(
    scores: &ScoreVector,
    cost: &CostMatrix,
    constraints: &ConstraintMatrix,
    config: &SolverConfig,
    warm: Option<&RelaxedDualState>,
    mut trace: Option<&mut dyn FnMut(&TraceEvent)>,
) -> Result<SolveResult<RelaxedDualState>> {
    config.validate()?;
    let n = scores.len();
    check_dimensions(n, cost, constraints)?;

    let eps = config.epsilon;
    let inv = 1.0 / eps;
    let h = scores.values();
    let c = cost.values();
    let g = constraints.g();
    let d = constraints.d_f();
    let log_h: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let numeric = |context: &'static str| Error::Numeric {
        context,
        epsilon: eps,
        cost_scale: cost.max_abs(),
    };

    let signed = constraints.residual(h)?;
    let gamma: Vec<f64> = signed.iter().map(|r| r.abs()).collect();
    let gamma_sign: Vec<f64> = signed
        .iter()
        .map(|&r| if r == 0.0 { 0.0 } else { r.signum() })
        .collect();
    let mut phi = match warm {
        Some(w) if w.phi.len() == d => w.phi.iter().map(|v| v.min(0.0)).collect(),
        _ => vec![0.0; d],
    };
    let mut psi = match warm {
        Some(w) if w.psi.len() == d => w.psi.iter().map(|v| v.min(0.0)).collect(),
        _ => vec![0.0; d],
    };
    let mut kappa = match warm {
        Some(w) if w.kappa.len() == n => w.kappa.clone(),
        _ => vec![0.0; n],
    };
    let mut z = vec![0.0; n];
    let mut log_eta = vec![f64::NEG_INFINITY; n];
    let mut m = two_sided_columns(g, &phi, &psi);
    let mut base_phi = phi.clone();
    let mut base_psi = psi.clone();
    let mut sweeps = 0;
    let mut converged = false;
    let mut prev_delta = f64::INFINITY;

    loop {
        sweeps += 1;
        let mut max_delta = update_sample_potentials(c, &m, inv, eps, &log_h, &mut kappa, &mut z)
            .ok_or_else(|| numeric("sample potential update"))?;
        update_log_eta(c, &kappa, inv, &mut log_eta);
        let slack_reward = |phi: &[f64], psi: &[f64]| -> f64 {
            gamma
                .iter()
                .zip(phi.iter().zip(psi))
                .map(|(gm, (p, q))| gm * (p + q))
                .sum()
        };
        if trace.is_some() {
            let value = dual_value(&kappa, h, &log_eta, &m, inv, eps, slack_reward(&phi, &psi))
                .ok_or_else(|| numeric("dual value"))?;
            emit(
                &mut trace,
                TraceEvent::RowUpdate {
                    sweep: sweeps,
                    dual_value: value,
                    max_delta,
                },
            );
        }
        base_phi.copy_from_slice(&phi);
        base_psi.copy_from_slice(&psi);

        for cidx in 0..d {
            let row = g.row(cidx);
            let coeff: Vec<f64> = row.to_vec();

            // Upper side: multiplier of  G f <= gamma.
            let u: Vec<f64> = (0..n)
                .map(|j| log_eta[j] + (m[j] - phi[cidx] * coeff[j]) * inv)
                .collect();
            let problem = Scalar1d {
                gamma: gamma[cidx],
                coeff: &coeff,
                log_weight: &u,
                eps,
                upper: Some(0.0),
                tol: config.inner_tol,
                max_iter: config.max_inner_iters,
            };
            let next = problem.maximize(phi[cidx])?;
            if next != phi[cidx] {
                let shift = next - phi[cidx];
                max_delta = max_delta.max(shift.abs());
                phi[cidx] = next;
                for j in 0..n {
                    m[j] += shift * coeff[j];
                }
            }

            // Lower side: multiplier of  -G f <= gamma.
            let neg: Vec<f64> = coeff.iter().map(|v| -v).collect();
            let u: Vec<f64> = (0..n)
                .map(|j| log_eta[j] + (m[j] + psi[cidx] * coeff[j]) * inv)
                .collect();
            let problem = Scalar1d {
                gamma: gamma[cidx],
                coeff: &neg,
                log_weight: &u,
                eps,
                upper: Some(0.0),
                tol: config.inner_tol,
                max_iter: config.max_inner_iters,
            };
            let next = problem.maximize(psi[cidx])?;
            if next != psi[cidx] {
                let shift = psi[cidx] - next;
                max_delta = max_delta.max(shift.abs());
                psi[cidx] = next;
                for j in 0..n {
                    m[j] += shift * coeff[j];
                }
            }

            if trace.is_some() {
                let value = dual_value(&kappa, h, &log_eta, &m, inv, eps, slack_reward(&phi, &psi))
                    .ok_or_else(|| numeric("dual value"))?;
                emit(
                    &mut trace,
                    TraceEvent::MultiplierUpdate {
                        sweep: sweeps,
                        coordinate: cidx,
                        dual_value: value,
                    },
                );
            }
        }

        if config.stall_extrapolation
            && max_delta > config.outer_tol
            && max_delta > STALL_RATIO * prev_delta
        {
            if let Some(shift) = extrapolate_bounded_multipliers(
                c,
                g,
                inv,
                eps,
                &log_h,
                h,
                &gamma,
                &base_phi,
                &base_psi,
                &mut phi,
                &mut psi,
                &mut m,
                &mut kappa,
                &mut z,
                &mut log_eta,
            ) {
                max_delta = max_delta.max(shift);
            }
        }
        prev_delta = max_delta;

        if trace.is_some() {
            let value = dual_value(&kappa, h, &log_eta, &m, inv, eps, slack_reward(&phi, &psi))
                .ok_or_else(|| numeric("dual value"))?;
            let f = column_marginals(&log_eta, &m, inv);
            let resid = constraint_moments(g, &f);
            emit(
                &mut trace,
                TraceEvent::SweepEnd {
                    sweep: sweeps,
                    dual_value: value,
                    max_delta,
                    fairness_residual: max_abs(&resid),
                },
            );
        }

        if max_delta <= config.outer_tol {
            converged = true;
            break;
        }
        if sweeps >= config.max_outer_sweeps {
            break;
        }
    }

    update_sample_potentials(c, &m, inv, eps, &log_h, &mut kappa, &mut z)
        .ok_or_else(|| numeric("sample potential update"))?;
    update_log_eta(c, &kappa, inv, &mut log_eta);

    let col_marginals = column_marginals(&log_eta, &m, inv);
    let fairness_residual = constraint_moments(g, &col_marginals);
    let row_marginals: Vec<f64> = (0..n).map(|i| (kappa[i] * inv + z[i]).exp()).collect();
    let slack: f64 = gamma
        .iter()
        .zip(phi.iter().zip(&psi))
        .map(|(gm, (p, q))| gm * (p + q))
        .sum();
    let objective =
        dual_value(&kappa, h, &log_eta, &m, inv, eps, slack).ok_or_else(|| numeric("dual value"))?;

    // Envelope gradient: the slack bounds gamma_c = |G h|_c depend on h, so
    // each inequality contributes (phi + psi) * sign(G h) * G through them.
    let mut score_gradient = kappa.clone();
    for cidx in 0..d {
        let w = (phi[cidx] + psi[cidx]) * gamma_sign[cidx];
        if w != 0.0 {
            let row = g.row(cidx);
            for i in 0..n {
                score_gradient[i] += w * row[i];
            }
        }
    }

    Ok(SolveResult {
        objective,
        duals: RelaxedDualState {
            kappa,
            phi,
            psi,
            gamma,
            gamma_sign,
        },
        score_gradient,
        row_marginals,
        col_marginals,
        fairness_residual,
        converged,
        sweeps,
    })
}

/// Adjusted cost `E(h) - R(h)` with its envelope gradient.
#[derive(Debug, Clone)]
pub struct AdjustedCost {
    /// Nonnegative fairness penalty (up to solver tolerance).
    pub value: f64,
    pub score_gradient: Vec<f64>,
    pub strict: SolveResult<DualState>,
    pub relaxed: SolveResult<RelaxedDualState>,
}

/// Solve both problems and take the difference.
pub fn adjusted_otf(
    scores: &ScoreVector,
    cost: &CostMatrix,
    constraints: &ConstraintMatrix,
    config: &SolverConfig,
    warm_strict: Option<&DualState>,
    warm_relaxed: Option<&RelaxedDualState>,
) -> Result<AdjustedCost> {
    let strict = solve_otfe(scores, cost, constraints, config, warm_strict, None)?;
    let relaxed = solve_otfre(scores, cost, constraints, config, warm_relaxed, None)?;
    let value = strict.objective - relaxed.objective;
    let score_gradient: Vec<f64> = strict
        .score_gradient
        .iter()
        .zip(&relaxed.score_gradient)
        .map(|(a, b)| a - b)
        .collect();
    Ok(AdjustedCost {
        value,
        score_gradient,
        strict,
        relaxed,
    })
}

/// Materialize the Gibbs coupling `P_ij = exp((-C_ij + a_i + m_j) / eps)`.
pub fn recover_coupling(
    duals: &dyn DualPotentials,
    cost: &CostMatrix,
    constraints: &ConstraintMatrix,
    epsilon: f64,
) -> Result<Array2<f64>> {
    let a = duals.sample_potential();
    let n = a.len();
    if cost.n() != n || constraints.n() != n {
        return Err(Error::Dimension(format!(
            "dual state covers {n} samples, cost covers {} and constraints {}",
            cost.n(),
            constraints.n()
        )));
    }
    let m = duals.column_adjustment(constraints.g());
    let c = cost.values();
    let inv = 1.0 / epsilon;
    let mut p = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let v = ((a[i] + m[j] - c[[i, j]]) * inv).exp();
            if !v.is_finite() {
                return Err(Error::Numeric {
                    context: "coupling recovery",
                    epsilon,
                    cost_scale: cost.max_abs(),
                });
            }
            p[[i, j]] = v;
        }
    }
    Ok(p)
}

/// Primal value `<C, P> - eps * H(P)` of an explicit coupling.
pub fn entropic_objective(coupling: ArrayView2<f64>, cost: &CostMatrix, epsilon: f64) -> f64 {
    let c = cost.values();
    let mut total = 0.0;
    for (p, cv) in coupling.iter().zip(c.iter()) {
        if *p > 0.0 {
            total += p * cv + epsilon * p * (p.ln() - 1.0);
        }
    }
    total
}

fn check_dimensions(n: usize, cost: &CostMatrix, constraints: &ConstraintMatrix) -> Result<()> {
    if cost.n() != n {
        return Err(Error::Dimension(format!(
            "cost matrix covers {} samples, scores cover {n}",
            cost.n()
        )));
    }
    if constraints.n() != n {
        return Err(Error::Dimension(format!(
            "constraint matrix covers {} samples, scores cover {n}",
            constraints.n()
        )));
    }
    Ok(())
}

fn emit(trace: &mut Option<&mut dyn FnMut(&TraceEvent)>, event: TraceEvent) {
    if let Some(cb) = trace {
        cb(&event);
    }
}

/// `m_j = sum_c w_c G_cj`.
fn weighted_columns(g: ArrayView2<f64>, w: &[f64]) -> Vec<f64> {
    let n = g.ncols();
    let mut m = vec![0.0; n];
    for (c, &wc) in w.iter().enumerate() {
        if wc != 0.0 {
            let row = g.row(c);
            for j in 0..n {
                m[j] += wc * row[j];
            }
        }
    }
    m
}

fn two_sided_columns(g: ArrayView2<f64>, phi: &[f64], psi: &[f64]) -> Vec<f64> {
    let diff: Vec<f64> = phi.iter().zip(psi).map(|(p, q)| p - q).collect();
    weighted_columns(g, &diff)
}

/// Closed-form potential refresh for a candidate column adjustment followed
/// by the dual evaluation, i.e. the dual restricted to its multiplier block
/// with the potential block eliminated. Returns `None` on overflow.
fn reduced_dual(
    c: ArrayView2<f64>,
    m: &[f64],
    inv: f64,
    eps: f64,
    log_h: &[f64],
    h: &[f64],
    slack: f64,
    potentials: &mut [f64],
    z: &mut [f64],
    log_eta: &mut [f64],
) -> Option<f64> {
    update_sample_potentials(c, m, inv, eps, log_h, potentials, z)?;
    update_log_eta(c, potentials, inv, log_eta);
    dual_value(potentials, h, log_eta, m, inv, eps, slack)
}

/// Accepted state of the doubling line search: everything the outer loop
/// needs to resume from the extended point.
struct RayPoint {
    m: Vec<f64>,
    potentials: Vec<f64>,
    z: Vec<f64>,
    log_eta: Vec<f64>,
}

/// Doubling line search along the last sweep's multiplier displacement.
///
/// The reduced dual is concave along any ray, so extending the displacement
/// while the value improves is always sound, and on a flat ascent ray it
/// covers in one call a distance the plain sweeps would need thousands of
/// iterations to creep across. Commits the furthest improving point and
/// returns the sup-norm potential shift it caused; leaves the state untouched
/// (and returns `None`) when already the first doubling fails to improve.
#[allow(clippy::too_many_arguments)]
fn extrapolate_multipliers(
    c: ArrayView2<f64>,
    g: ArrayView2<f64>,
    inv: f64,
    eps: f64,
    log_h: &[f64],
    h: &[f64],
    base_mu: &[f64],
    mu: &mut [f64],
    m: &mut [f64],
    lambda: &mut [f64],
    z: &mut [f64],
    log_eta: &mut [f64],
) -> Option<f64> {
    let delta: Vec<f64> = mu.iter().zip(base_mu).map(|(a, b)| a - b).collect();
    if delta.iter().all(|v| *v == 0.0) {
        return None;
    }
    let n = h.len();
    let mut pot = lambda.to_vec();
    let mut zz = vec![0.0; n];
    let mut eta = vec![0.0; n];
    let mut best_v = reduced_dual(c, m, inv, eps, log_h, h, 0.0, &mut pot, &mut zz, &mut eta)?;
    let mut best: Option<(Vec<f64>, RayPoint)> = None;
    let mut scale = 2.0;
    for _ in 0..MAX_DOUBLINGS {
        let cand_mu: Vec<f64> = base_mu
            .iter()
            .zip(&delta)
            .map(|(b, dv)| b + scale * dv)
            .collect();
        let cand_m = weighted_columns(g, &cand_mu);
        let mut pot = lambda.to_vec();
        let mut zz = vec![0.0; n];
        let mut eta = vec![0.0; n];
        let Some(v) = reduced_dual(c, &cand_m, inv, eps, log_h, h, 0.0, &mut pot, &mut zz, &mut eta)
        else {
            break;
        };
        if v <= best_v {
            break;
        }
        best_v = v;
        best = Some((
            cand_mu,
            RayPoint {
                m: cand_m,
                potentials: pot,
                z: zz,
                log_eta: eta,
            },
        ));
        scale *= 2.0;
    }
    let (cand_mu, point) = best?;
    let shift = lambda
        .iter()
        .zip(&point.potentials)
        .chain(mu.iter().zip(&cand_mu))
        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
    mu.copy_from_slice(&cand_mu);
    m.copy_from_slice(&point.m);
    lambda.copy_from_slice(&point.potentials);
    z.copy_from_slice(&point.z);
    log_eta.copy_from_slice(&point.log_eta);
    Some(shift)
}

/// The same doubling line search for the sign-constrained multiplier pairs
/// of the relaxed problem. Candidates are clamped back into the nonpositive
/// orthant, and the slack reward moves with them.
#[allow(clippy::too_many_arguments)]
fn extrapolate_bounded_multipliers(
    c: ArrayView2<f64>,
    g: ArrayView2<f64>,
    inv: f64,
    eps: f64,
    log_h: &[f64],
    h: &[f64],
    gamma: &[f64],
    base_phi: &[f64],
    base_psi: &[f64],
    phi: &mut [f64],
    psi: &mut [f64],
    m: &mut [f64],
    kappa: &mut [f64],
    z: &mut [f64],
    log_eta: &mut [f64],
) -> Option<f64> {
    let delta_phi: Vec<f64> = phi.iter().zip(base_phi).map(|(a, b)| a - b).collect();
    let delta_psi: Vec<f64> = psi.iter().zip(base_psi).map(|(a, b)| a - b).collect();
    if delta_phi.iter().chain(&delta_psi).all(|v| *v == 0.0) {
        return None;
    }
    let slack_of = |phi: &[f64], psi: &[f64]| -> f64 {
        gamma
            .iter()
            .zip(phi.iter().zip(psi))
            .map(|(gm, (p, q))| gm * (p + q))
            .sum()
    };
    let n = h.len();
    let mut pot = kappa.to_vec();
    let mut zz = vec![0.0; n];
    let mut eta = vec![0.0; n];
    let mut best_v = reduced_dual(
        c,
        m,
        inv,
        eps,
        log_h,
        h,
        slack_of(phi, psi),
        &mut pot,
        &mut zz,
        &mut eta,
    )?;
    let mut best: Option<(Vec<f64>, Vec<f64>, RayPoint)> = None;
    let mut scale = 2.0;
    for _ in 0..MAX_DOUBLINGS {
        let cand_phi: Vec<f64> = base_phi
            .iter()
            .zip(&delta_phi)
            .map(|(b, dv)| (b + scale * dv).min(0.0))
            .collect();
        let cand_psi: Vec<f64> = base_psi
            .iter()
            .zip(&delta_psi)
            .map(|(b, dv)| (b + scale * dv).min(0.0))
            .collect();
        let cand_m = two_sided_columns(g, &cand_phi, &cand_psi);
        let mut pot = kappa.to_vec();
        let mut zz = vec![0.0; n];
        let mut eta = vec![0.0; n];
        let Some(v) = reduced_dual(
            c,
            &cand_m,
            inv,
            eps,
            log_h,
            h,
            slack_of(&cand_phi, &cand_psi),
            &mut pot,
            &mut zz,
            &mut eta,
        ) else {
            break;
        };
        if v <= best_v {
            break;
        }
        best_v = v;
        best = Some((
            cand_phi,
            cand_psi,
            RayPoint {
                m: cand_m,
                potentials: pot,
                z: zz,
                log_eta: eta,
            },
        ));
        scale *= 2.0;
    }
    let (cand_phi, cand_psi, point) = best?;
    let shift = kappa
        .iter()
        .zip(&point.potentials)
        .chain(phi.iter().zip(&cand_phi))
        .chain(psi.iter().zip(&cand_psi))
        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
    phi.copy_from_slice(&cand_phi);
    psi.copy_from_slice(&cand_psi);
    m.copy_from_slice(&point.m);
    kappa.copy_from_slice(&point.potentials);
    z.copy_from_slice(&point.z);
    log_eta.copy_from_slice(&point.log_eta);
    Some(shift)
}

/// Closed-form sample-potential block update. Returns the sup-norm change,
/// or `None` if a potential left the representable range.
fn update_sample_potentials(
    c: ArrayView2<f64>,
    m: &[f64],
    inv: f64,
    eps: f64,
    log_h: &[f64],
    potentials: &mut [f64],
    z: &mut [f64],
) -> Option<f64> {
    let n = log_h.len();
    let mut max_delta = 0.0f64;
    for i in 0..n {
        let row = c.row(i);
        let mut shift = f64::NEG_INFINITY;
        for j in 0..n {
            let v = (m[j] - row[j]) * inv;
            if v > shift {
                shift = v;
            }
        }
        let mut sum = 0.0;
        for j in 0..n {
            sum += ((m[j] - row[j]) * inv - shift).exp();
        }
        let zi = shift + sum.ln();
        let next = eps * (log_h[i] - zi);
        if !next.is_finite() {
            return None;
        }
        let delta = (next - potentials[i]).abs();
        if delta > max_delta {
            max_delta = delta;
        }
        potentials[i] = next;
        z[i] = zi;
    }
    Some(max_delta)
}

/// Streaming column log-sum-exp: `log_eta_j = LSE_i((a_i - C_ij) / eps)`.
/// Row-major single pass keeps the access pattern cache-friendly.
fn update_log_eta(c: ArrayView2<f64>, potentials: &[f64], inv: f64, out: &mut [f64]) {
    let n = potentials.len();
    let mut running_max = vec![f64::NEG_INFINITY; n];
    let mut running_sum = vec![0.0f64; n];
    for i in 0..n {
        let row = c.row(i);
        let ai = potentials[i];
        for j in 0..n {
            let v = (ai - row[j]) * inv;
            if v <= running_max[j] {
                running_sum[j] += (v - running_max[j]).exp();
            } else {
                running_sum[j] = running_sum[j] * (running_max[j] - v).exp() + 1.0;
                running_max[j] = v;
            }
        }
    }
    for j in 0..n {
        out[j] = running_max[j] + running_sum[j].ln();
    }
}

/// Column marginals `f_j = eta_j * exp(m_j / eps)`.
fn column_marginals(log_eta: &[f64], m: &[f64], inv: f64) -> Vec<f64> {
    log_eta
        .iter()
        .zip(m)
        .map(|(le, mj)| (le + mj * inv).exp())
        .collect()
}

fn constraint_moments(g: ArrayView2<f64>, f: &[f64]) -> Vec<f64> {
    (0..g.nrows())
        .map(|c| {
            let row = g.row(c);
            f.iter().enumerate().map(|(j, fj)| row[j] * fj).sum()
        })
        .collect()
}

fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Dual value `sum a h + slack - eps * sum_j exp(log_eta_j + m_j / eps)`.
/// Returns `None` on overflow.
fn dual_value(
    potentials: &[f64],
    h: &[f64],
    log_eta: &[f64],
    m: &[f64],
    inv: f64,
    eps: f64,
    slack: f64,
) -> Option<f64> {
    let linear: f64 = potentials.iter().zip(h).map(|(a, b)| a * b).sum();
    let mut shift = f64::NEG_INFINITY;
    for (le, mj) in log_eta.iter().zip(m) {
        let v = le + mj * inv;
        if v > shift {
            shift = v;
        }
    }
    let total = if shift == f64::NEG_INFINITY {
        0.0
    } else {
        let sum: f64 = log_eta
            .iter()
            .zip(m)
            .map(|(le, mj)| (le + mj * inv - shift).exp())
            .sum();
        shift.exp() * sum
    };
    let value = linear + slack - eps * total;
    value.is_finite().then_some(value)
}
