//! Route agreement between the exact simplex oracle and the smoothed dual
//! ascent on instances small enough to afford both.
//!
//! The two implementations share nothing beyond the instance types: the
//! oracle pivots over the n^2 coupling entries while the solvers climb the
//! smoothed dual in potential-multiplier coordinates. Agreement between them
//! is therefore evidence about the solutions, not about a shared bug. All
//! instances are drawn from a fixed-seed generator so failures replay
//! exactly.

mod common;

use common::{draw_instance, inside_score_box, project_to_fair};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use otf::lp::{solve_lp, LpInstance, LpSolution};
use otf::solver::{adjusted_otf, solve_otfe, solve_otfre, ScoreVector, SolverConfig};

/// Smoothing levels from mild to sharp; the exact value is the limit.
const EPS_GRID: [f64; 3] = [1e-1, 1e-2, 1e-3];

fn tight(eps: f64) -> SolverConfig {
    SolverConfig {
        epsilon: eps,
        outer_tol: 1e-10,
        inner_tol: 1e-12,
        max_outer_sweeps: 20_000,
        ..SolverConfig::default()
    }
}

fn exact(inst: &common::OracleInstance, relaxed: bool) -> LpSolution {
    let lp = LpInstance::new(
        inst.cost.clone(),
        inst.scores.clone(),
        inst.constraints.clone(),
        relaxed,
    )
    .unwrap();
    solve_lp(&lp).unwrap()
}

#[test]
fn exact_couplings_are_feasible_and_price_their_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..20 {
        let inst = draw_instance(&mut rng, 6, 2);
        let n = inst.n();
        let gamma = inst.constraints.residual(&inst.scores).unwrap();
        let mut objectives = [0.0; 2];
        for (which, relaxed) in [false, true].into_iter().enumerate() {
            let sol = exact(&inst, relaxed);
            objectives[which] = sol.objective;
            for &p in sol.coupling.iter() {
                assert!(p >= -1e-9, "trial {trial}: negative coupling entry {p}");
            }
            for (i, &h) in inst.scores.iter().enumerate() {
                let row: f64 = sol.coupling.row(i).sum();
                assert!(
                    (row - h).abs() <= 1e-8,
                    "trial {trial}: row {i} carries {row} instead of {h}"
                );
            }
            let cols: Vec<f64> = (0..n).map(|j| sol.coupling.column(j).sum()).collect();
            let moments = inst.constraints.residual(&cols).unwrap();
            for (r, (m, g)) in moments.iter().zip(&gamma).enumerate() {
                let bound = if relaxed { g.abs() + 1e-8 } else { 1e-8 };
                assert!(
                    m.abs() <= bound,
                    "trial {trial}: constraint {r} moment {m} exceeds {bound}"
                );
            }
            let priced: f64 = sol
                .coupling
                .iter()
                .zip(inst.cost.values().iter())
                .map(|(p, c)| p * c)
                .sum();
            assert!(
                (priced - sol.objective).abs() <= 1e-9 * (1.0 + sol.objective.abs()),
                "trial {trial}: objective {} but coupling prices to {priced}",
                sol.objective
            );
        }
        // Widening the feasible set can only lower the optimum.
        assert!(
            objectives[1] <= objectives[0] + 1e-9,
            "trial {trial}: relaxed {} above strict {}",
            objectives[1],
            objectives[0]
        );
    }
}

#[test]
fn smoothed_value_climbs_to_the_exact_value_from_below() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for trial in 0..12 {
        let inst = draw_instance(&mut rng, 6, 2);
        let scores = inst.score_vector();
        let lp = exact(&inst, false);
        // Every coupling entry lies in (0, 1], so the entropy term only
        // subsidizes: the smoothed optimum sits below the exact one and the
        // deficit shrinks as the smoothing does.
        let mut prev_gap = f64::INFINITY;
        for eps in EPS_GRID {
            let sol =
                solve_otfe(&scores, &inst.cost, &inst.constraints, &tight(eps), None, None)
                    .unwrap();
            assert!(sol.converged, "trial {trial}: not converged at eps {eps}");
            let gap = lp.objective - sol.objective;
            assert!(
                gap >= -1e-7 * (1.0 + lp.objective.abs()),
                "trial {trial}: smoothed {} above exact {} at eps {eps}",
                sol.objective,
                lp.objective
            );
            assert!(
                gap <= prev_gap + 1e-6,
                "trial {trial}: gap widened from {prev_gap} to {gap} at eps {eps}"
            );
            prev_gap = gap;
        }
        assert!(
            prev_gap <= 5e-2 * (1.0 + lp.objective.abs()),
            "trial {trial}: gap {prev_gap} still large at the sharpest smoothing"
        );
    }
}

#[test]
fn relaxed_route_shows_the_same_limit_behavior() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for trial in 0..12 {
        let inst = draw_instance(&mut rng, 6, 2);
        let scores = inst.score_vector();
        let lp = exact(&inst, true);
        let mut prev_gap = f64::INFINITY;
        for eps in EPS_GRID {
            let sol =
                solve_otfre(&scores, &inst.cost, &inst.constraints, &tight(eps), None, None)
                    .unwrap();
            assert!(sol.converged, "trial {trial}: not converged at eps {eps}");
            let gap = lp.objective - sol.objective;
            assert!(
                gap >= -1e-7 * (1.0 + lp.objective.abs()),
                "trial {trial}: smoothed {} above exact {} at eps {eps}",
                sol.objective,
                lp.objective
            );
            assert!(
                gap <= prev_gap + 1e-6,
                "trial {trial}: gap widened from {prev_gap} to {gap} at eps {eps}"
            );
            prev_gap = gap;
        }
        assert!(
            prev_gap <= 5e-2 * (1.0 + lp.objective.abs()),
            "trial {trial}: gap {prev_gap} still large at the sharpest smoothing"
        );
    }
}

#[test]
fn penalty_agrees_across_routes() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    for trial in 0..12 {
        let inst = draw_instance(&mut rng, 6, 2);
        let scores = inst.score_vector();
        let exact_penalty = exact(&inst, false).objective - exact(&inst, true).objective;
        assert!(
            exact_penalty >= -1e-9,
            "trial {trial}: exact penalty {exact_penalty} negative"
        );
        let adj = adjusted_otf(
            &scores,
            &inst.cost,
            &inst.constraints,
            &tight(1e-3),
            None,
            None,
        )
        .unwrap();
        // The smoothing deficits of the two routes largely cancel in the
        // difference; what remains must stay well under the cost scale.
        assert!(
            (adj.value - exact_penalty).abs() <= 5e-2 * (1.0 + exact_penalty.abs()),
            "trial {trial}: smoothed penalty {} vs exact {exact_penalty}",
            adj.value
        );
        if exact_penalty > 5e-2 {
            assert!(
                adj.value > 0.0,
                "trial {trial}: exact route sees a {exact_penalty} penalty, smoothed sees none"
            );
        }
    }
}

#[test]
fn fair_scores_cost_nothing_on_either_route() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut used = 0;
    for _ in 0..24 {
        let mut inst = draw_instance(&mut rng, 6, 2);
        let fair = project_to_fair(&inst.constraints, &inst.scores);
        // Projection can leave the score box or hit dependent rows; such
        // draws prove nothing here.
        if !inside_score_box(&fair) {
            continue;
        }
        used += 1;
        inst.scores = fair.clone();
        for relaxed in [false, true] {
            let sol = exact(&inst, relaxed);
            assert!(
                sol.objective.abs() <= 1e-8 * fair.len() as f64,
                "exact objective {} on fair scores (relaxed = {relaxed})",
                sol.objective
            );
        }
        // With no slack earned, the relaxed smoothed program collapses onto
        // the strict one.
        let scores = ScoreVector::new(fair).unwrap();
        let cfg = tight(1e-2);
        let strict = solve_otfe(&scores, &inst.cost, &inst.constraints, &cfg, None, None).unwrap();
        let relaxed = solve_otfre(&scores, &inst.cost, &inst.constraints, &cfg, None, None).unwrap();
        assert!(
            (strict.objective - relaxed.objective).abs()
                <= 1e-8 * (1.0 + strict.objective.abs()),
            "strict {} and relaxed {} diverge on fair scores",
            strict.objective,
            relaxed.objective
        );
    }
    assert!(used >= 8, "only {used} projected draws stayed in the box");
}
