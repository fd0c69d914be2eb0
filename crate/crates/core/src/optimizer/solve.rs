use serde::{Deserialize, Serialize};

use super::band::Band;
use super::check::{check_solution, SlackReport};
use super::model::{al_term, retention, ScaledModel};
use super::projection::Projector;
use super::{DecisionSchedule, InfeasibilityReport, OptimizerError, Problem, SolveDiagnostics};
use crate::hydro::ControlVector;
use crate::predictor::level_lower_bound;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub feas_tol: f64,
    pub stat_tol: f64,
    pub mu0: f64,
    pub mu_growth: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Restart 0 starts from the run-of-river schedule, the rest from
    /// seeded random points.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            feas_tol: 1e-6,
            stat_tol: 1e-5,
            mu0: 10.0,
            mu_growth: 10.0,
            max_outer: 12,
            max_inner: 500,
            restarts: 3,
            seed: 0,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<(), OptimizerError> {
        let ok = self.feas_tol > 0.0
            && self.stat_tol > 0.0
            && self.mu0 > 0.0
            && self.mu_growth >= 1.0
            && self.max_outer > 0
            && self.restarts > 0;
        if !ok {
            return Err(OptimizerError::Contract(format!("invalid solver settings {self:?}")));
        }
        Ok(())
    }
}

const MU_MAX: f64 = 1e12;
/// Barrier weight of the first outer iteration, its reduction per outer
/// iteration and its floor.
const TAU0: f64 = 1e-2;
const TAU_DROP: f64 = 1e-2;
const TAU_MIN: f64 = 1e-12;
/// Fraction of the distance to a bound a step may cover.
const TO_BOUNDARY: f64 = 0.995;
/// Residual floor of the barrier subproblems, above rounding noise.
const INNER_TOL: f64 = 1e-7;
/// Bound multipliers stay within this factor of their central value.
/// Smallest meaningful step of a variable in `[0, 1]`.
const RESOLUTION: f64 = 4.0 * f64::EPSILON;
const DUAL_SPREAD: f64 = 1e10;

/// Bound multipliers of the barrier subproblems.
struct BoxDuals {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

struct InnerOutcome {
    iterations: usize,
}

/// Primal-dual Newton method for `f(., tau)` on the box, with log-barrier
/// weight `tau` on the bounds, following `tau` from `tau_start` down to
/// `tau_end`.
///
/// The Hessian is banded; when it is not positive definite a diagonal
/// shift is added until it is. Each coordinate keeps a fraction of its
/// distance to the bounds and steps are backtracked on the barrier
/// function. `tau` is lowered superlinearly each time the gradient and
/// complementarity residuals drop below `10 tau` (or `tol`).
#[allow(clippy::too_many_arguments)]
fn barrier_newton(
    x: &mut [f64],
    duals: &mut BoxDuals,
    proj: &Projector,
    bandwidth: usize,
    (tau_start, tau_end): (f64, f64),
    (tol, pg_tol): (f64, f64),
    max_iter: usize,
    f: &impl Fn(&[f64], f64, &mut [f64], Option<&mut Band>) -> f64,
) -> InnerOutcome {
    let n = x.len();
    let fixed: Vec<bool> = (0..n).map(|i| proj.lo[i] >= proj.hi[i]).collect();
    let gaps = |x: &[f64], i: usize| (x[i] - proj.lo[i], proj.hi[i] - x[i]);
    let mut tau = tau_start.max(tau_end);
    let merit = |x: &[f64], fx: f64, tau: f64| -> f64 {
        let mut v = fx;
        for i in 0..n {
            if !fixed[i] {
                let (a, b) = gaps(x, i);
                if a <= 0.0 || b <= 0.0 {
                    return f64::INFINITY;
                }
                v -= tau * (a.ln() + b.ln());
            }
        }
        v
    };
    let mut g = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut h = Band::new(n, bandwidth);
    let mut d = vec![0.0; n];
    let mut g_bar = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut shift = vec![0.0; n];
    let mut phi = merit(x, f(x, tau, &mut g, Some(&mut h)), tau);
    let mut iterations = 0;
    while iterations < max_iter {
        let mut error = 0.0f64;
        // distance a multiplier-weighted coordinate is from its bound
        let mut pg = 0.0f64;
        for i in 0..n {
            if fixed[i] {
                for j in i.saturating_sub(bandwidth)..(i + bandwidth + 1).min(n) {
                    h.set(i, j, 0.0);
                }
                h.set(i, i, 1.0);
                g_bar[i] = 0.0;
                continue;
            }
            let (a, b) = gaps(x, i);
            let (zl, zh) = (duals.lo[i], duals.hi[i]);
            h.add(i, i, zl / a + zh / b);
            // a residual whose Newton correction is below the resolution of x
            // cannot be reduced further
            let r = g[i] - zl + zh;
            if r.abs() > RESOLUTION * h.get(i, i) {
                error = error.max(r.abs());
            }
            error = error.max((zl * a - tau).abs()).max((zh * b - tau).abs());
            pg = pg.max(a.min(zl)).max(b.min(zh));
            g_bar[i] = g[i] - tau / a + tau / b;
        }
        if error <= (10.0 * tau).max(tol) {
            if tau > tau_end {
                tau = tau_end.max((0.2 * tau).min(tau.powf(1.5)));
                phi = merit(x, f(x, tau, &mut g, Some(&mut h)), tau);
                continue;
            }
            // near-active bounds with sizeable duals still count as unconverged
            if pg <= pg_tol || error <= 1e-3 * tol {
                break;
            }
        }
        let mut delta = 0.0;
        let factor = loop {
            for i in 0..n {
                shift[i] = if fixed[i] {
                    0.0
                } else {
                    delta * (h.get(i, i).abs() + 1.0)
                };
            }
            if let Some(l) = h.cholesky(&shift) {
                break Some(l);
            }
            delta = if delta == 0.0 { 1e-10 } else { delta * 100.0 };
            if delta > 1e10 {
                break None;
            }
        };
        for i in 0..n {
            d[i] = -g_bar[i];
        }
        match &factor {
            Some(l) => l.solve_factored(&mut d),
            None => {
                for i in 0..n {
                    d[i] /= h.get(i, i).abs() + 1.0;
                }
            }
        }
        iterations += 1;
        let slope: f64 = g_bar.iter().zip(&d).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            break;
        }
        // each coordinate keeps a fraction of its distance to the bounds
        let mut step = 1.0f64;
        let mut accepted = None;
        while step > 1e-16 {
            let mut decrease = 0.0;
            for i in 0..n {
                let (a, b) = gaps(x, i);
                let lo = x[i] - TO_BOUNDARY * a;
                let hi = x[i] + TO_BOUNDARY * b;
                x_new[i] = (x[i] + step * d[i]).clamp(lo, hi);
                decrease += g_bar[i] * (x_new[i] - x[i]);
            }
            let fv = merit(&x_new, f(&x_new, tau, &mut scratch, None), tau);
            // allowance for rounding in phi once decreases reach that level
            let noise = MERIT_NOISE * phi.abs().max(1.0);
            if decrease < 0.0 && fv <= phi + 1e-4 * decrease + noise {
                accepted = Some(fv);
                break;
            }
            step *= 0.5;
        }
        let Some(phi_new) = accepted else {
            break;
        };
        // dual step from the linearised complementarity, kept positive
        let mut step_z = 1.0f64;
        let mut dz = vec![(0.0, 0.0); n];
        for i in 0..n {
            if fixed[i] {
                continue;
            }
            let (a, b) = gaps(x, i);
            let (zl, zh) = (duals.lo[i], duals.hi[i]);
            let dx = x_new[i] - x[i];
            let dl = tau / a - zl - zl / a * dx;
            let dh = tau / b - zh + zh / b * dx;
            if dl < 0.0 {
                step_z = step_z.min(TO_BOUNDARY * zl / -dl);
            }
            if dh < 0.0 {
                step_z = step_z.min(TO_BOUNDARY * zh / -dh);
            }
            dz[i] = (dl, dh);
        }
        x.copy_from_slice(&x_new);
        for i in 0..n {
            if fixed[i] {
                continue;
            }
            let (a, b) = gaps(x, i);
            let zl = duals.lo[i] + step_z * dz[i].0;
            let zh = duals.hi[i] + step_z * dz[i].1;
            duals.lo[i] = zl.clamp(tau / (DUAL_SPREAD * a), DUAL_SPREAD * tau / a);
            duals.hi[i] = zh.clamp(tau / (DUAL_SPREAD * b), DUAL_SPREAD * tau / b);
        }
        phi = phi_new;
        f(x, tau, &mut g, Some(&mut h));
    }
    InnerOutcome { iterations }
}

/// Run-of-river start: meet the floors, pass the rest of the inflow through
/// the turbines, never spill.
pub(crate) fn run_of_river(p: &Problem) -> Vec<f64> {
    let mut theta = Vec::with_capacity(p.n_theta());
    for t in 0..p.horizon() {
        let inflow = p.scenario.forcing[t].inflow;
        let eco = p.qmin_river[t].min(p.plant.q_eco_max);
        let spill = p.qmin_river[t] - eco;
        let turb = (inflow - p.qmin_river[t] - p.qmin_irr).clamp(0.0, p.plant.q_turb_max);
        theta.extend_from_slice(&[turb, eco, p.qmin_irr, spill]);
    }
    theta
}

/// Precheck for budgets no schedule can meet.
///
/// Releasing only the mandated minimum keeps storage as high as possible
/// at every step (and the level guard as low as possible), so if that
/// schedule drops below dead storage, every schedule does.
pub(crate) fn infeasibility(p: &Problem) -> Option<InfeasibilityReport> {
    let plant = &p.plant;
    if let super::DemandMode::Hard = p.demand_mode {
        let cap = plant.max_power();
        for t in 0..p.horizon() {
            let need = p.scenario.forcing[t].demand - p.solar(t);
            if need > cap {
                return Some(InfeasibilityReport {
                    budget: "demand".into(),
                    first_violating_t: t,
                    required: need,
                    available: cap,
                    detail: "net demand (MW) exceeds the plant's maximum output".into(),
                });
            }
        }
    }
    let a = retention(p);
    let dt = plant.dt;
    let mut v = p.initial_volume;
    let mut released = 0.0;
    let mut inflow = 0.0;
    let mut evaporated = 0.0;
    for t in 0..p.horizon() {
        let mut floor = p.qmin_river[t];
        if p.level_guard {
            floor = floor.max(level_lower_bound(v, plant));
        }
        let release = floor + p.qmin_irr;
        let q_in = p.scenario.forcing[t].inflow;
        let next = a[t] * v + dt * (q_in - release);
        released += release * dt;
        inflow += q_in * dt;
        evaporated += (1.0 - a[t]) * v;
        if next < plant.v_min {
            return Some(InfeasibilityReport {
                budget: "water".into(),
                first_violating_t: t,
                required: released + evaporated,
                available: p.initial_volume - plant.v_min + inflow,
                detail: "cumulative mandated releases and evaporation (m³) exceed usable storage plus inflow".into(),
            });
        }
        v = next.min(plant.v_max);
    }
    None
}

/// Releases this close to their floor (m³/s) are set to it.
const RELEASE_SNAP: f64 = 1e-6;
/// Scaled variables this close to a bound they are pushed against are
/// moved onto it.
const MERIT_NOISE: f64 = 1e-13;
const BOUND_SNAP: f64 = 1e-7;

/// Moves near-bound interior-point iterates onto the bounds the Lagrangian
/// gradient holds them at.
fn snap_to_bounds(proj: &Projector, x: &mut [f64], g: &[f64]) {
    for i in 0..x.len() {
        if x[i] - proj.lo[i] <= BOUND_SNAP && g[i] >= 0.0 {
            x[i] = proj.lo[i];
        } else if proj.hi[i] - x[i] <= BOUND_SNAP && g[i] <= 0.0 {
            x[i] = proj.hi[i];
        }
    }
}

/// Small forward fix-up so storage and floors hold to rounding error.
fn repair(p: &Problem, theta: &mut [f64]) {
    let plant = &p.plant;
    let a = retention(p);
    let dt = plant.dt;
    let mut v = p.initial_volume;
    for t in 0..p.horizon() {
        let u = &mut theta[4 * t..4 * t + 4];
        let mut floor = p.qmin_river[t];
        if p.level_guard {
            floor = floor.max(level_lower_bound(v, plant));
        }
        let excess = u[1] + u[3] - floor;
        if excess > 0.0 && excess <= RELEASE_SNAP {
            let cut = excess.min(u[3]);
            u[3] -= cut;
            u[1] -= excess - cut;
        }
        let short = floor - (u[1] + u[3]);
        if short > 0.0 {
            let add = short.min(plant.q_eco_max - u[1]).max(0.0);
            u[1] += add;
            u[3] = (u[3] + short - add).min(p.spill_cap);
        }
        let q_in = p.scenario.forcing[t].inflow;
        let next = |u: &[f64]| a[t] * v + dt * (q_in - u.iter().sum::<f64>());
        let below = (plant.v_min - next(u)) / dt;
        if below > 0.0 {
            let mut cut = below;
            let spare_river = (u[1] + u[3] - floor).max(0.0);
            let room = [u[0], u[2] - p.qmin_irr, spare_river.min(u[3])];
            for (k, r) in [0, 2, 3].into_iter().zip(room) {
                let c = cut.min(r.max(0.0));
                u[k] -= c;
                cut -= c;
            }
            let spare_eco = (u[1] + u[3] - floor).max(0.0).min(u[1]);
            u[1] -= cut.min(spare_eco);
        }
        let above = (next(u) - plant.v_max) / dt;
        if above > 0.0 {
            u[3] = (u[3] + above).min(p.spill_cap);
        }
        v = next(u);
    }
}

/// Random release schedule meeting the floors; storage it would push past
/// a limit is clipped when scaled.
fn random_start(p: &Problem, m: &ScaledModel<'_>, rng: &mut SeededRng) -> Vec<f64> {
    let plant = &p.plant;
    let mut theta = Vec::with_capacity(p.n_theta());
    for t in 0..p.horizon() {
        let floor = p.qmin_river[t];
        let river = floor + rng.uniform() * (plant.q_eco_max - floor).max(0.0);
        let eco = river.min(plant.q_eco_max);
        let irr = p.qmin_irr + rng.uniform() * (plant.q_irr_max - p.qmin_irr);
        theta.extend_from_slice(&[rng.uniform() * plant.q_turb_max, eco, irr, river - eco]);
    }
    let slack: Vec<f64> = m.slack_caps.iter().map(|c| rng.uniform() * c).collect();
    m.to_scaled(&theta, &slack)
}

struct Candidate {
    theta: Vec<f64>,
    report: SlackReport,
    outer: usize,
    inner: usize,
    stationarity: f64,
}

fn solve_from(
    m: &ScaledModel<'_>,
    proj: &Projector,
    start: Vec<f64>,
    cfg: &SolverConfig,
) -> Result<Candidate, OptimizerError> {
    let n_c = m.n_constraints();
    let mut x = start;
    let n = x.len();
    for i in 0..n {
        let (lo, hi) = (proj.lo[i], proj.hi[i]);
        x[i] = if lo >= hi {
            lo
        } else {
            x[i].clamp(lo + 1e-3 * (hi - lo), hi - 1e-3 * (hi - lo))
        };
    }
    let mut duals = BoxDuals {
        lo: (0..n).map(|i| TAU0 / (x[i] - proj.lo[i]).max(1e-12)).collect(),
        hi: (0..n).map(|i| TAU0 / (proj.hi[i] - x[i]).max(1e-12)).collect(),
    };
    let mut lambda = vec![0.0; n_c];
    let mut mu = cfg.mu0;
    let mut prev_viol = f64::INFINITY;
    let mut inner = 0;
    let mut outer = 0;
    let mut g = vec![0.0; x.len()];
    let mut tau_prev = TAU0;
    for k in 0..cfg.max_outer {
        outer = k + 1;
        let tau = (TAU0 * TAU_DROP.powi(k as i32)).max(TAU_MIN);
        let al = |x: &[f64], tau: f64, g: &mut [f64], h: Option<&mut Band>| {
            m.value_grad(
                x,
                |i, c| {
                    let (v, d1, d2, _) = al_term(c, lambda[i], mu, tau);
                    (v, d1, d2)
                },
                g,
                h,
            )
        };
        let out = barrier_newton(
            &mut x,
            &mut duals,
            proj,
            m.bandwidth(),
            (tau_prev, tau),
            (INNER_TOL, 0.1 * cfg.stat_tol),
            cfg.max_inner,
            &al,
        );
        tau_prev = tau;
        inner += out.iterations;
        let (_, c) = m.evaluate(&x);
        let viol = c.iter().fold(0.0f64, |a, ci| a.max(-ci));
        for (l, ci) in lambda.iter_mut().zip(&c) {
            *l = al_term(*ci, *l, mu, tau).3;
        }
        let stationarity = lagrangian_stationarity(m, proj, &x, &lambda, &mut g);
        if viol <= cfg.feas_tol && stationarity <= cfg.stat_tol && tau <= TAU_MIN {
            // repair can leave residuals that undo stationarity; keep iterating if so
            let c = finish(m, proj, &x, &lambda, outer, inner)?;
            if c.report.max_violation() <= cfg.feas_tol && c.stationarity <= cfg.stat_tol {
                return Ok(c);
            }
        }
        if viol > 0.25 * prev_viol {
            mu = (mu * cfg.mu_growth).min(MU_MAX);
        }
        prev_viol = viol;
    }
    finish(m, proj, &x, &lambda, outer, inner)
}

/// Snaps and repairs the iterate `x` into a feasible schedule.
fn finish(
    m: &ScaledModel<'_>,
    proj: &Projector,
    x: &[f64],
    lambda: &[f64],
    outer: usize,
    inner: usize,
) -> Result<Candidate, OptimizerError> {
    let mut x = x.to_vec();
    let mut g = vec![0.0; x.len()];
    lagrangian_stationarity(m, proj, &x, lambda, &mut g);
    snap_to_bounds(proj, &mut x, &g);
    let mut theta = m.theta(&x);
    repair(m.p, &mut theta);
    let report = check_solution(m.p, &theta)?;
    let x_final = m.to_scaled(&theta, &m.slack(&x));
    let mut refined = lambda.to_vec();
    refine_multipliers(m, proj, &x_final, &mut refined);
    let stationarity = lagrangian_stationarity(m, proj, &x_final, lambda, &mut g)
        .min(lagrangian_stationarity(m, proj, &x_final, &refined, &mut g));
    Ok(Candidate {
        theta,
        report,
        outer,
        inner,
        stationarity,
    })
}

/// Improves `lambda >= 0` as multipliers at a fixed `x` by coordinate
/// descent on the squared projected gradient of the Lagrangian.
fn refine_multipliers(m: &ScaledModel<'_>, proj: &Projector, x: &[f64], lambda: &mut [f64]) {
    const SWEEPS: usize = 30;
    let rows = m.jacobian(x);
    let mut g = vec![0.0; x.len()];
    m.value_grad(x, |_, _| (0.0, 0.0, 0.0), &mut g, None);
    for (row, l) in rows.iter().zip(lambda.iter()) {
        for &(j, d) in row {
            g[j] -= l * d;
        }
    }
    // the projected step of variable j is -clamp(g_j, x_j - hi_j, x_j - lo_j)
    let range: Vec<(f64, f64)> = (0..x.len()).map(|j| (x[j] - proj.hi[j], x[j] - proj.lo[j])).collect();
    let cost = |j: usize, v: f64| v.clamp(range[j].0, range[j].1).powi(2);
    for _ in 0..SWEEPS {
        for (row, l) in rows.iter().zip(lambda.iter_mut()) {
            let (mut slope, mut curv) = (0.0, 0.0);
            for &(j, d) in row {
                let v = g[j];
                if v > range[j].0 && v < range[j].1 {
                    slope -= 2.0 * d * v;
                    curv += 2.0 * d * d;
                }
            }
            if curv <= 0.0 {
                continue;
            }
            let mut step = (-slope / curv).max(-*l);
            let before: f64 = row.iter().map(|&(j, _)| cost(j, g[j])).sum();
            while step.abs() > 0.0 {
                let after: f64 = row.iter().map(|&(j, d)| cost(j, g[j] - step * d)).sum();
                if after < before {
                    break;
                }
                step *= 0.5;
                if step.abs() < 1e-12 * (1.0 + l.abs()) {
                    step = 0.0;
                }
            }
            if step != 0.0 {
                *l += step;
                for &(j, d) in row {
                    g[j] -= step * d;
                }
            }
        }
    }
}

/// Projected gradient of the Lagrangian at `x` for multipliers `lambda`.
fn lagrangian_stationarity(m: &ScaledModel<'_>, proj: &Projector, x: &[f64], lambda: &[f64], g: &mut [f64]) -> f64 {
    m.value_grad(x, |i, c| (-lambda[i] * c, -lambda[i], 0.0), g, None);
    proj.stationarity(x, g)
}

fn totals(theta: &[f64]) -> (f64, f64) {
    let eco = theta.iter().skip(1).step_by(4).sum();
    let spill = theta.iter().skip(3).step_by(4).sum();
    (eco, spill)
}

/// `true` if `a` should replace the incumbent `b`.
fn better(a: &Candidate, b: &Candidate, feas_tol: f64) -> bool {
    let fa = a.report.max_violation() <= feas_tol;
    let fb = b.report.max_violation() <= feas_tol;
    if fa != fb {
        return fa;
    }
    if !fa {
        return a.report.max_violation() < b.report.max_violation();
    }
    let (oa, ob) = (a.report.objective, b.report.objective);
    let close = (oa - ob).abs() <= 1e-9 * oa.abs().max(ob.abs()).max(1.0);
    if !close {
        return oa > ob;
    }
    let ((ea, sa), (eb, sb)) = (totals(&a.theta), totals(&b.theta));
    if ea != eb {
        return ea > eb;
    }
    sa < sb
}

pub fn schedule_from_theta(p: &Problem, theta: &[f64], report: &SlackReport) -> DecisionSchedule {
    DecisionSchedule {
        controls: theta
            .chunks(4)
            .map(|u| ControlVector {
                q_turb: u[0],
                q_eco: u[1],
                q_irr: u[2],
                q_spill: u[3],
            })
            .collect(),
        volumes: report.volumes.clone(),
        power: report.power.clone(),
        qmin_river: p.qmin_river.clone(),
    }
}

/// Maximise revenue (minus the soft-demand penalty) over the horizon.
///
/// Problems that fail the budget precheck return
/// [`OptimizerError::Infeasible`]. Otherwise the best restart is returned;
/// `converged` is set only if every constraint holds within `feas_tol` and
/// the projected Lagrangian gradient is below `stat_tol`.
pub fn solve(p: &Problem, cfg: &SolverConfig) -> Result<(DecisionSchedule, SolveDiagnostics), OptimizerError> {
    cfg.validate()?;
    if let Some(report) = infeasibility(p) {
        return Err(OptimizerError::Infeasible(report));
    }
    let m = ScaledModel::new(p);
    let proj = Projector::new(&m);
    let mut rng = SeededRng::new(cfg.seed);
    let mut best: Option<(usize, Candidate)> = None;
    let mut outer = 0;
    let mut inner = 0;
    for r in 0..cfg.restarts {
        let start = if r == 0 {
            let theta = run_of_river(p);
            let slack = vec![0.0; m.slack_caps.len()];
            m.to_scaled(&theta, &slack)
        } else {
            random_start(p, &m, &mut rng)
        };
        let cand = solve_from(&m, &proj, start, cfg)?;
        outer += cand.outer;
        inner += cand.inner;
        if best.as_ref().is_none_or(|(_, b)| better(&cand, b, cfg.feas_tol)) {
            best = Some((r, cand));
        }
    }
    let (best_restart, c) = best.expect("at least one restart");
    let violation_by_family = c.report.violations();
    let max_violation = c.report.max_violation();
    let diag = SolveDiagnostics {
        objective: c.report.objective,
        revenue: c.report.revenue,
        shortfall_penalty: c.report.shortfall_penalty,
        max_violation,
        violation_by_family,
        outer_iterations: outer,
        inner_iterations: inner,
        converged: max_violation <= cfg.feas_tol && c.stationarity <= cfg.stat_tol,
        stationarity: c.stationarity,
        restarts: cfg.restarts,
        best_restart,
    };
    Ok((schedule_from_theta(p, &c.theta, &c.report), diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::test_support::{random_problem, small_problem};
    use crate::optimizer::{brute_force_solve, DemandMode};

    #[test]
    fn single_step_abundant_water_runs_turbine_flat_out() {
        let mut p = small_problem(1, 0.0);
        p.scenario.forcing[0].demand = 0.0;
        let (s, d) = solve(&p, &SolverConfig::default()).unwrap();
        let u = s.controls[0];
        assert!((u.q_turb - p.plant.q_turb_max).abs() < 1e-9, "{u:?}");
        assert!(
            u.q_eco.abs() < 1e-9 && u.q_irr == 0.0 && u.q_spill.abs() < 1e-9,
            "{u:?}"
        );
        assert!(d.converged, "{d:?}");
    }

    #[test]
    fn single_step_exact_budget_pins_solution() {
        // storage at dead volume, inflow equals the floors
        let mut p = small_problem(1, 2.0);
        p.plant.q_irr_max = 1.0;
        p.qmin_irr = 1.0;
        p.initial_volume = p.plant.v_min;
        p.scenario.forcing[0].inflow = 3.0;
        p.scenario.forcing[0].demand = 0.0;
        let (s, d) = solve(&p, &SolverConfig::default()).unwrap();
        let u = s.controls[0];
        assert!(u.q_turb.abs() < 1e-6, "{u:?}");
        assert!((u.q_eco + u.q_spill - 2.0).abs() < 1e-6 && (u.q_irr - 1.0).abs() < 1e-12);
        assert!(d.objective.abs() < 1e-3, "{d:?}");
        assert!(d.max_violation <= 1e-6);
    }

    #[test]
    fn reports_first_step_of_water_shortage() {
        let mut p = small_problem(3, 4.0);
        p.initial_volume = p.plant.v_min + 1000.0;
        match solve(&p, &SolverConfig::default()) {
            Err(OptimizerError::Infeasible(r)) => {
                assert_eq!(r.budget, "water");
                assert_eq!(r.first_violating_t, 0);
                assert!(r.required > r.available);
            }
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn hard_demand_above_capacity_is_infeasible_for_both_solvers() {
        let mut p = small_problem(2, 1.0);
        p.scenario.forcing[1].demand = 10.0;
        let a = solve(&p, &SolverConfig::default()).unwrap_err();
        let b = brute_force_solve(&p, 3).unwrap_err();
        for e in [a, b] {
            match e {
                OptimizerError::Infeasible(r) => assert_eq!((r.budget.as_str(), r.first_violating_t), ("demand", 1)),
                other => panic!("{other}"),
            }
        }
    }

    #[test]
    fn agrees_with_grid_oracle() {
        for seed in 0..6 {
            let mut p = random_problem(seed, 2 + seed as usize % 2);
            p.plant.q_irr_max = 0.0;
            p.qmin_irr = 0.0;
            let oracle = brute_force_solve(&p, 7).unwrap();
            let oracle_obj = check_solution(&p, &oracle.theta()).unwrap().objective;
            let (_, d) = solve(&p, &SolverConfig::default()).unwrap();
            assert!(d.max_violation <= 1e-6, "seed {seed}: {d:?}");
            assert!(
                d.objective >= oracle_obj - 0.01 * oracle_obj.abs(),
                "seed {seed}: {} < {oracle_obj}",
                d.objective
            );
        }
    }

    #[test]
    fn soft_demand_trades_penalty_for_water() {
        let mut p = random_problem(11, 6);
        p.demand_mode = DemandMode::Soft { penalty: 300.0 };
        let (_, d) = solve(&p, &SolverConfig::default()).unwrap();
        assert!(d.max_violation <= 1e-6, "{d:?}");
        assert!(!d.violation_by_family.contains_key("demand"));
    }

    #[test]
    fn fixed_seed_gives_identical_schedules() {
        let p = random_problem(5, 8);
        let cfg = SolverConfig {
            seed: 7,
            ..SolverConfig::default()
        };
        let (a, _) = solve(&p, &cfg).unwrap();
        let (b, _) = solve(&p, &cfg).unwrap();
        let bits = |s: &DecisionSchedule| s.theta().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn level_guard_is_respected() {
        let mut p = random_problem(21, 6);
        p.level_guard = true;
        p.initial_volume = 2e4;
        let (s, d) = solve(&p, &SolverConfig::default()).unwrap();
        assert!(d.max_violation <= 1e-6, "{d:?}");
        for (t, u) in s.controls.iter().enumerate() {
            let l = level_lower_bound(s.volumes[t], &p.plant);
            assert!(u.q_eco + u.q_spill >= l - 1e-6);
        }
    }

    #[test]
    fn refined_multipliers_do_not_worsen_stationarity() {
        let p = random_problem(8, 6);
        let m = ScaledModel::new(&p);
        let proj = Projector::new(&m);
        let theta = run_of_river(&p);
        let x = m.to_scaled(&theta, &vec![0.0; m.slack_caps.len()]);
        let mut g = vec![0.0; x.len()];
        let mut lambda = vec![0.5; m.n_constraints()];
        let before = lagrangian_stationarity(&m, &proj, &x, &lambda, &mut g);
        refine_multipliers(&m, &proj, &x, &mut lambda);
        assert!(lambda.iter().all(|l| *l >= 0.0));
        let after = lagrangian_stationarity(&m, &proj, &x, &lambda, &mut g);
        assert!(after <= before, "{after} > {before}");
    }
}
