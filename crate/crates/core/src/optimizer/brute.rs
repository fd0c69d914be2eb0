//! Exhaustive grid search, the reference the AL solver is tested against.

use super::check::check_solution;
use super::model::retention;
use super::solve::{infeasibility, schedule_from_theta};
use super::{DecisionSchedule, DemandMode, InfeasibilityReport, OptimizerError, Problem};
use crate::predictor::level_lower_bound;

/// Largest number of grid schedules [`brute_force_solve`] will enumerate.
pub const BRUTE_FORCE_CAP: f64 = 1e8;

/// Relative slack allowed when testing grid points for feasibility.
const GRID_TOL: f64 = 1e-9;

fn grids(p: &Problem, points: usize) -> [Vec<f64>; 4] {
    let caps = p.caps();
    let lows = [0.0, 0.0, p.qmin_irr, 0.0];
    std::array::from_fn(|k| {
        let (lo, hi) = (lows[k], caps[k]);
        if hi <= lo || points < 2 {
            vec![lo]
        } else {
            (0..points)
                .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
                .collect()
        }
    })
}

/// Schedules on the grid; controls with a degenerate range count once.
pub fn grid_combinations(p: &Problem, points: usize) -> f64 {
    let per_step: f64 = grids(p, points).iter().map(|g| g.len() as f64).product();
    per_step.powi(p.horizon() as i32)
}

struct Search<'a> {
    p: &'a Problem,
    grids: [Vec<f64>; 4],
    retention: Vec<f64>,
    penalty: f64,
    theta: Vec<f64>,
    best: Option<(f64, f64, f64, Vec<f64>)>,
}

impl Search<'_> {
    fn visit(&mut self, t: usize, v: f64, objective: f64, eco: f64, spill: f64) {
        let p = self.p;
        if t == p.horizon() {
            let replace = match &self.best {
                None => true,
                Some((o, e, s, _)) => {
                    let close = (objective - o).abs() <= 1e-12 * objective.abs().max(o.abs()).max(1.0);
                    if close {
                        eco > *e || (eco == *e && spill < *s)
                    } else {
                        objective > *o
                    }
                }
            };
            if replace {
                self.best = Some((objective, eco, spill, self.theta.clone()));
            }
            return;
        }
        let plant = &p.plant;
        let f = &p.scenario.forcing[t];
        let floor = if p.level_guard {
            p.qmin_river[t].max(level_lower_bound(v, plant))
        } else {
            p.qmin_river[t]
        };
        let dt_h = plant.dt / 3600.0;
        let floor_tol = GRID_TOL * floor.max(1.0);
        let v_tol = GRID_TOL * plant.v_max;
        let [g0, g1, g2, g3] = self.grids.clone();
        for &qe in &g1 {
            for &qs in &g3 {
                if qe + qs < floor - floor_tol {
                    continue;
                }
                for &qi in &g2 {
                    for &qt in &g0 {
                        let next = self.retention[t] * v + plant.dt * (f.inflow - qt - qe - qi - qs);
                        if next < plant.v_min - v_tol || next > plant.v_max + v_tol {
                            continue;
                        }
                        let power = plant.power_coefficient() * qt * plant.head(0.5 * (v + next));
                        let net = power + p.solar(t) - f.demand;
                        if p.demand_mode == DemandMode::Hard && net < -GRID_TOL * plant.max_power() {
                            continue;
                        }
                        let gain = (f.price * power - self.penalty * (-net).max(0.0)) * dt_h;
                        self.theta[4 * t..4 * t + 4].copy_from_slice(&[qt, qe, qi, qs]);
                        self.visit(t + 1, next, objective + gain, eco + qe, spill + qs);
                    }
                }
            }
        }
    }
}

/// Best schedule on a uniform grid of `points` values per control.
///
/// Each control is gridded over its box (`q_irr` from the irrigation
/// minimum); the soft-demand shortfall is set to its optimal value
/// `max(0, demand - power - solar)`.
pub fn brute_force_solve(p: &Problem, points: usize) -> Result<DecisionSchedule, OptimizerError> {
    if points == 0 {
        return Err(OptimizerError::Contract("grid needs at least one point".into()));
    }
    let required = grid_combinations(p, points);
    if required > BRUTE_FORCE_CAP {
        return Err(OptimizerError::GridTooLarge {
            required,
            cap: BRUTE_FORCE_CAP,
        });
    }
    if let Some(report) = infeasibility(p) {
        return Err(OptimizerError::Infeasible(report));
    }
    let mut search = Search {
        p,
        grids: grids(p, points),
        retention: retention(p),
        penalty: match p.demand_mode {
            DemandMode::Hard => 0.0,
            DemandMode::Soft { penalty } => penalty,
        },
        theta: vec![0.0; p.n_theta()],
        best: None,
    };
    search.visit(0, p.initial_volume, 0.0, 0.0, 0.0);
    match search.best {
        Some((_, _, _, theta)) => {
            let report = check_solution(p, &theta)?;
            Ok(schedule_from_theta(p, &theta, &report))
        }
        None => Err(OptimizerError::Infeasible(InfeasibilityReport {
            budget: "grid".into(),
            first_violating_t: 0,
            required,
            available: 0.0,
            detail: format!("no feasible point among {required} grid schedules"),
        })),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::test_support::{random_problem, small_problem};

    fn objective(p: &Problem, s: &DecisionSchedule) -> f64 {
        check_solution(p, &s.theta()).unwrap().objective
    }

    #[test]
    fn single_step_grid_finds_the_analytic_optimum() {
        let mut p = small_problem(1, 0.0);
        p.scenario.forcing[0].demand = 0.0;
        let s = brute_force_solve(&p, 7).unwrap();
        let u = s.controls[0];
        assert_eq!(
            (u.q_turb, u.q_eco, u.q_irr, u.q_spill),
            (p.plant.q_turb_max, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn refusal_names_the_budget() {
        let p = small_problem(4, 1.0);
        match brute_force_solve(&p, 7) {
            Err(OptimizerError::GridTooLarge { required, cap }) => {
                assert_eq!(cap, BRUTE_FORCE_CAP);
                assert_eq!(required, 7f64.powi(12));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn refining_the_grid_never_hurts() {
        // 3 -> 5 -> 9 points are nested grids
        for seed in 0..4 {
            let mut p = random_problem(seed, 2);
            p.plant.q_irr_max = 0.0;
            p.qmin_irr = 0.0;
            let objs: Vec<f64> = [3, 5, 9]
                .iter()
                .map(|n| objective(&p, &brute_force_solve(&p, *n).unwrap()))
                .collect();
            assert!(objs[0] <= objs[1] + 1e-9 && objs[1] <= objs[2] + 1e-9, "{objs:?}");
        }
    }

    #[test]
    fn lower_floors_never_reduce_the_optimum() {
        for seed in 0..4 {
            let mut p = random_problem(100 + seed, 2);
            p.plant.q_irr_max = 0.0;
            p.qmin_irr = 0.0;
            let high = objective(&p, &brute_force_solve(&p, 7).unwrap());
            for q in p.qmin_river.iter_mut() {
                *q *= 0.5;
            }
            let low = objective(&p, &brute_force_solve(&p, 7).unwrap());
            assert!(low >= high - 1e-6, "{low} < {high}");
        }
    }

    #[test]
    fn grid_points_satisfy_every_constraint() {
        let mut p = random_problem(8, 3);
        p.plant.q_irr_max = 0.0;
        p.qmin_irr = 0.0;
        let s = brute_force_solve(&p, 5).unwrap();
        assert!(check_solution(&p, &s.theta()).unwrap().max_violation() <= 1e-6);
    }
}
