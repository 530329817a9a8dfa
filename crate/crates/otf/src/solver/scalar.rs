//! Exact 1-D maximization for constraint multipliers.
//!
//! Every multiplier update in the dual ascent is the same scalar problem:
//! maximize the concave function
//!
//! ```text
//!     zeta(t) = gamma * t - eps * sum_j exp(u_j + a_j * t / eps)
//! ```
//!
//! optionally subject to `t <= upper` (the one-sided multipliers of the
//! relaxed problem live on the nonpositive half-line). Its derivative
//!
//! ```text
//!     R(t) = gamma - sum_j a_j exp(u_j + a_j * t / eps)
//! ```
//!
//! is strictly decreasing, and `gamma - R(t)` is exactly the constraint
//! moment of the current coupling, so driving `|R|` below the tolerance
//! bounds the fairness residual directly.
//!
//! Newton applied to `R` itself is useless here: `R` is a difference of
//! exponentials in `t / eps`, so a step started on one of its cliffs moves
//! `t` by about `eps` no matter how far the root is. The iteration instead
//! solves `D(t) = ln N(t) - ln M(t) = 0`, where `N` collects the
//! positive-coefficient exponentials and `M` the linear coefficient `gamma`
//! plus the negative-coefficient ones. `D` is strictly increasing with the
//! same root, asymptotically affine in `t` (its slope sits between
//! `min |a| / eps` and `max |a| / eps`), and Newton on `D` lands within a
//! handful of steps at any `eps`. A sign-change bracket guards every step
//! and bisection takes over when Newton leaves it.
//!
//! All exponentials are evaluated under per-group max shifts, so nothing
//! overflows regardless of how far the iterate is from the root; the raw
//! residual `R` is reconstructed for the stopping test whenever it is
//! representable, which is always the case near a root with bounded column
//! masses.
//!
//! With `gamma = 0` and coefficients all of one sign the supremum is an
//! asymptote: `zeta -> 0` as `t` runs to one infinity without attaining it.
//! The solve then returns the first point whose residual is inside the
//! tolerance rather than an error; genuinely single-signed constraint rows
//! are rejected up front by the feasibility precheck on the full matrix.

use crate::{Error, Result};

pub(crate) struct Scalar1d<'a> {
    /// Linear coefficient; zero for equality multipliers, the constraint
    /// slack bound for relaxed ones. Never negative.
    pub gamma: f64,
    /// Per-sample coefficients `a_j` (a constraint row, possibly negated).
    pub coeff: &'a [f64],
    /// Log-domain weights `u_j`; `-inf` entries contribute nothing.
    pub log_weight: &'a [f64],
    pub eps: f64,
    /// Optional upper bound on `t`.
    pub upper: Option<f64>,
    /// Stop once `|R(t)| <= tol`.
    pub tol: f64,
    pub max_iter: usize,
}

/// `R`, its log-domain transform and the transform's slope at one point.
struct Probe {
    /// `D(t) = ln N - ln M`; `R > 0` iff `D < 0`. Infinite when one side has
    /// no terms, NaN only when both are empty and `gamma = 0` (then `r`
    /// below is `Some(0.0)` and decides first).
    d: f64,
    /// `dD/dt`, positive wherever `d` is finite.
    dp: f64,
    /// The exact residual `R(t)` whenever no exponential overflows.
    r: Option<f64>,
}

impl Probe {
    fn converged(&self, tol: f64) -> bool {
        matches!(self.r, Some(r) if r.abs() <= tol)
    }

    /// Whether the root lies above `t` (`R(t) > 0`).
    fn root_above(&self) -> bool {
        match self.r {
            Some(r) => r > 0.0,
            None => self.d < 0.0,
        }
    }
}

/// `ln(e^a + e^b)` without overflow; `-inf` inputs drop out.
fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

impl Scalar1d<'_> {
    fn probe(&self, t: f64) -> Probe {
        let inv = 1.0 / self.eps;
        let mut s_pos = f64::NEG_INFINITY;
        let mut s_neg = f64::NEG_INFINITY;
        for (&a, &u) in self.coeff.iter().zip(self.log_weight) {
            if a == 0.0 || u == f64::NEG_INFINITY {
                continue;
            }
            let w = u + a * t * inv;
            if a > 0.0 {
                s_pos = s_pos.max(w);
            } else {
                s_neg = s_neg.max(w);
            }
        }
        let (mut n0, mut n1, mut m0, mut m1) = (0.0, 0.0, 0.0, 0.0);
        for (&a, &u) in self.coeff.iter().zip(self.log_weight) {
            if a == 0.0 || u == f64::NEG_INFINITY {
                continue;
            }
            let w = u + a * t * inv;
            if a > 0.0 {
                let e = (w - s_pos).exp();
                n0 += a * e;
                n1 += a * a * e;
            } else {
                let e = (w - s_neg).exp();
                m0 += -a * e;
                m1 += a * a * e;
            }
        }
        let ln_gamma = if self.gamma > 0.0 {
            self.gamma.ln()
        } else {
            f64::NEG_INFINITY
        };
        let ln_n = if s_pos == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            s_pos + n0.ln()
        };
        let ln_m_neg = if s_neg == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            s_neg + m0.ln()
        };
        let ln_m = log_add_exp(ln_gamma, ln_m_neg);
        // N'/N and -M'/M; the shifts cancel inside each ratio, and
        // exp(s_neg - ln_m) <= 1/m0 keeps the M part overflow-free.
        let dp_n = if ln_n == f64::NEG_INFINITY {
            0.0
        } else {
            n1 * inv / n0
        };
        let dp_m = if ln_m_neg == f64::NEG_INFINITY {
            0.0
        } else {
            m1 * inv * (s_neg - ln_m).exp()
        };
        let r = if s_pos <= 700.0 && s_neg <= 700.0 {
            let n = if s_pos == f64::NEG_INFINITY {
                0.0
            } else {
                s_pos.exp() * n0
            };
            let m_neg = if s_neg == f64::NEG_INFINITY {
                0.0
            } else {
                s_neg.exp() * m0
            };
            Some(self.gamma + m_neg - n)
        } else {
            None
        };
        Probe {
            d: ln_n - ln_m,
            dp: dp_n + dp_m,
            r,
        }
    }

    /// Maximize `zeta`, starting from `t0`.
    pub(crate) fn maximize(&self, t0: f64) -> Result<f64> {
        debug_assert!(self.gamma >= 0.0);
        if self.coeff.iter().all(|&a| a == 0.0) {
            // zeta reduces to gamma * t: flat for gamma = 0 (keep the
            // current value), otherwise push to the bound.
            return Ok(match self.upper {
                Some(ub) if self.gamma > 0.0 => ub,
                Some(ub) => t0.min(ub),
                None => t0,
            });
        }

        if let Some(ub) = self.upper {
            // R is decreasing: still nonnegative (or within tol) at the
            // bound means the unconstrained maximizer lies at or beyond it.
            let e = self.probe(ub);
            let clip = match e.r {
                Some(r) => r >= -self.tol,
                None => e.d <= 0.0,
            };
            if clip {
                return Ok(ub);
            }
        }

        let start = match self.upper {
            Some(ub) => t0.min(ub),
            None => t0,
        };
        let e0 = self.probe(start);
        if e0.converged(self.tol) {
            return Ok(start);
        }

        // Geometric expansion until the residual changes sign. An asymptote
        // (gamma = 0 with one-signed terms) never crosses but decays, so the
        // in-tolerance exit fires along the way.
        let mut lo;
        let mut hi;
        let mut step = 1.0_f64.max(0.5 * start.abs());
        if e0.root_above() {
            lo = start;
            loop {
                let cand = match self.upper {
                    Some(ub) => (lo + step).min(ub),
                    None => lo + step,
                };
                let e = self.probe(cand);
                if e.converged(self.tol) {
                    return Ok(cand);
                }
                if !e.root_above() {
                    hi = cand;
                    break;
                }
                lo = cand;
                step *= 2.0;
                if step > 1e300 {
                    return Err(Error::Infeasible(
                        "constraint multiplier diverges upward".into(),
                    ));
                }
            }
        } else {
            hi = start;
            loop {
                let cand = hi - step;
                let e = self.probe(cand);
                if e.converged(self.tol) {
                    return Ok(cand);
                }
                if e.root_above() {
                    lo = cand;
                    break;
                }
                hi = cand;
                step *= 2.0;
                if step > 1e300 {
                    return Err(Error::Infeasible(
                        "constraint multiplier diverges downward".into(),
                    ));
                }
            }
        }

        // Newton on D within the bracket, bisection when a step leaves it.
        // If the bracket collapses to f64 resolution before |R| reaches tol,
        // the midpoint is as good as the arithmetic allows.
        let mut t = 0.5 * (lo + hi);
        for _ in 0..self.max_iter {
            let e = self.probe(t);
            if e.converged(self.tol) {
                return Ok(t);
            }
            if e.root_above() {
                lo = t;
            } else {
                hi = t;
            }
            if hi - lo <= f64::EPSILON * (1.0 + lo.abs() + hi.abs()) {
                return Ok(0.5 * (lo + hi));
            }
            let mut next = t - e.d / e.dp;
            if !next.is_finite() || next <= lo || next >= hi {
                next = 0.5 * (lo + hi);
            }
            t = next;
        }
        Ok(t)
    }
}
