//! Multiple-shooting model in scaled variables.
//!
//! Each step owns a block `[q_turb / cap, q_irr / cap, (V_{t+1} - v_min) /
//! (v_max - v_min)]`, plus in soft-demand mode a shortfall slack scaled by
//! the step's net demand. The river release `q_eco + q_spill` is whatever
//! closes the water balance between consecutive storages, and is split into
//! gate flow first and spill only for the remainder. Storage limits are box
//! bounds; release floors, the release cap, demand and the level guard are
//! constraints `c(x) >= 0`. Every term couples only neighbouring blocks, so
//! the Hessian is banded.

use super::band::Band;
use super::{DemandMode, Problem};

/// Sloped branch of the storage-dependent floor, capped but extended
/// above the reference level, with its derivative in storage. Together
/// with the constant safety floor it gives `level_lower_bound` without
/// the kink at the reference level.
pub(crate) fn level_slope_branch(volume: f64, p: &Problem) -> (f64, f64) {
    let plant = &p.plant;
    let raw = plant.q_eco_safety_floor
        * (1.0 + plant.level_gain * (plant.v_ref_recommended - volume) / plant.v_ref_recommended);
    if raw < plant.q_eco_cap {
        (
            raw,
            -plant.q_eco_safety_floor * plant.level_gain / plant.v_ref_recommended,
        )
    } else {
        (plant.q_eco_cap, 0.0)
    }
}

/// Storage retained per step after evaporation, `V_{t+1} = a_t V_t + ...`.
pub(crate) fn retention(p: &Problem) -> Vec<f64> {
    p.scenario
        .forcing
        .iter()
        .map(|f| 1.0 - p.plant.dt * p.plant.k_evap * f.temperature.max(0.0))
        .collect()
}

/// Unclipped storage trajectory (length T + 1) and hydro power.
pub(crate) fn simulate(p: &Problem, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = p.horizon();
    let dt = p.plant.dt;
    let a = retention(p);
    let c = p.plant.power_coefficient();
    let mut v = Vec::with_capacity(n + 1);
    let mut power = Vec::with_capacity(n);
    v.push(p.initial_volume);
    for t in 0..n {
        let u = &theta[4 * t..4 * t + 4];
        let next = a[t] * v[t] + dt * (p.scenario.forcing[t].inflow - u.iter().sum::<f64>());
        power.push(c * u[0] * p.plant.head(0.5 * (v[t] + next)));
        v.push(next);
    }
    (v, power)
}

/// Constraint blocks of the AL, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Family {
    RiverFloor,
    RiverCap,
    Demand,
    LevelFloor,
    LevelSlope,
}

/// Local variables of one step: `[V_t, q_turb, q_irr, V_{t+1}, slack]`.
const LOCAL: usize = 5;

pub(crate) struct ScaledModel<'a> {
    pub p: &'a Problem,
    /// Scales of q_turb and q_irr.
    caps: [f64; 2],
    /// Largest river release, also the scale of release constraints.
    river_cap: f64,
    /// Cap of each shortfall slack (empty in hard-demand mode).
    pub slack_caps: Vec<f64>,
    retention: Vec<f64>,
    /// Revenue of one step at mean price and full power.
    revenue_ref: f64,
    power_ref: f64,
    families: Vec<Family>,
    block: usize,
}

impl<'a> ScaledModel<'a> {
    pub fn new(p: &'a Problem) -> Self {
        let n = p.horizon();
        let c4 = p.caps();
        let slack_caps = match p.demand_mode {
            DemandMode::Hard => Vec::new(),
            DemandMode::Soft { .. } => (0..n)
                .map(|t| (p.scenario.forcing[t].demand - p.solar(t)).max(0.0))
                .collect(),
        };
        let power_ref = p.plant.max_power().max(1e-12);
        let mean_price = p.scenario.mean_price().abs().max(1e-12);
        let mut families = vec![Family::RiverFloor, Family::RiverCap, Family::Demand];
        if p.level_guard {
            families.extend([Family::LevelFloor, Family::LevelSlope]);
        }
        let block = if slack_caps.is_empty() { 3 } else { 4 };
        Self {
            p,
            caps: [c4[0], c4[2]],
            river_cap: c4[1] + c4[3],
            slack_caps,
            retention: retention(p),
            revenue_ref: mean_price * power_ref * p.plant.dt / 3600.0,
            power_ref,
            families,
            block,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.block * self.p.horizon()
    }

    pub fn n_constraints(&self) -> usize {
        self.families.len() * self.p.horizon()
    }

    /// Half bandwidth of the Hessian.
    pub fn bandwidth(&self) -> usize {
        2 * self.block - 3
    }

    fn storage_span(&self) -> f64 {
        self.p.plant.v_max - self.p.plant.v_min
    }

    /// Box bounds of every scaled variable.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let p = self.p;
        let open = |cap: f64| if cap > 0.0 { 1.0 } else { 0.0 };
        let irr_lo = if self.caps[1] > 0.0 {
            (p.qmin_irr / self.caps[1]).min(1.0)
        } else {
            0.0
        };
        let mut lo = Vec::with_capacity(self.n_vars());
        let mut hi = Vec::with_capacity(self.n_vars());
        for t in 0..p.horizon() {
            lo.extend_from_slice(&[0.0, irr_lo, 0.0]);
            hi.extend_from_slice(&[open(self.caps[0]), open(self.caps[1]), 1.0]);
            if let Some(cap) = self.slack_caps.get(t) {
                lo.push(0.0);
                hi.push(open(*cap));
            }
        }
        (lo, hi)
    }

    /// Storage at the start of step `t`.
    fn volume_before(&self, x: &[f64], t: usize) -> f64 {
        if t == 0 {
            self.p.initial_volume
        } else {
            self.p.plant.v_min + self.storage_span() * x[self.block * (t - 1) + 2]
        }
    }

    fn river(&self, x: &[f64], t: usize) -> f64 {
        let k = self.block * t;
        let v_next = self.p.plant.v_min + self.storage_span() * x[k + 2];
        let dt = self.p.plant.dt;
        (self.retention[t] * self.volume_before(x, t) + dt * self.p.scenario.forcing[t].inflow - v_next) / dt
            - self.caps[0] * x[k]
            - self.caps[1] * x[k + 1]
    }

    /// Physical `[q_turb, q_eco, q_irr, q_spill]` per step. A negative
    /// river release (only possible away from feasibility) is clipped.
    pub fn theta(&self, x: &[f64]) -> Vec<f64> {
        let eco_max = self.p.plant.q_eco_max;
        let mut theta = Vec::with_capacity(4 * self.p.horizon());
        for t in 0..self.p.horizon() {
            let k = self.block * t;
            let river = self.river(x, t).max(0.0);
            let eco = river.min(eco_max);
            theta.extend_from_slice(&[x[k] * self.caps[0], eco, x[k + 1] * self.caps[1], river - eco]);
        }
        theta
    }

    /// Scaled point of a physical schedule; storage outside the limits is
    /// clipped to them.
    pub fn to_scaled(&self, theta: &[f64], slack: &[f64]) -> Vec<f64> {
        let scaled = |q: f64, cap: f64| if cap > 0.0 { q / cap } else { 0.0 };
        let (v, _) = simulate(self.p, theta);
        let mut x = Vec::with_capacity(self.n_vars());
        for (t, u) in theta.chunks(4).enumerate() {
            let s = (v[t + 1] - self.p.plant.v_min) / self.storage_span();
            x.extend_from_slice(&[
                scaled(u[0], self.caps[0]),
                scaled(u[2], self.caps[1]),
                s.clamp(0.0, 1.0),
            ]);
            if let Some(cap) = self.slack_caps.get(t) {
                x.push(scaled(slack.get(t).copied().unwrap_or(0.0), *cap));
            }
        }
        x
    }

    pub fn slack(&self, x: &[f64]) -> Vec<f64> {
        self.slack_caps
            .iter()
            .enumerate()
            .map(|(t, cap)| x[self.block * t + 3] * cap)
            .collect()
    }

    fn penalty(&self) -> f64 {
        match self.p.demand_mode {
            DemandMode::Hard => 0.0,
            DemandMode::Soft { penalty } => penalty,
        }
    }

    /// Scaled objective (negated, to be minimised) and constraint values.
    pub fn evaluate(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut c = vec![0.0; self.n_constraints()];
        let f = self.eval_inner(x, &mut c, &|_, _| (0.0, 0.0, 0.0), None, None, None);
        (f, c)
    }

    /// Sparse constraint gradients, one row of `(variable, derivative)`
    /// pairs per constraint.
    pub fn jacobian(&self, x: &[f64]) -> Vec<Vec<(usize, f64)>> {
        let mut c = vec![0.0; self.n_constraints()];
        let mut rows = vec![Vec::new(); self.n_constraints()];
        self.eval_inner(x, &mut c, &|_, _| (0.0, 0.0, 0.0), None, None, Some(&mut rows));
        rows
    }

    /// `f(x) + Σ_i term(i, c_i)` with its gradient and, if requested, its
    /// Hessian. `term` returns the contribution of constraint `i` and its
    /// first and second derivatives in `c_i`; the constraints' own
    /// curvature is included, so the Hessian is exact where `term` is
    /// twice differentiable.
    pub fn value_grad(
        &self,
        x: &[f64],
        term: impl Fn(usize, f64) -> (f64, f64, f64),
        grad: &mut [f64],
        hess: Option<&mut Band>,
    ) -> f64 {
        let mut c = vec![0.0; self.n_constraints()];
        self.eval_inner(x, &mut c, &term, Some(grad), hess, None)
    }

    fn eval_inner(
        &self,
        x: &[f64],
        c: &mut [f64],
        term: &dyn Fn(usize, f64) -> (f64, f64, f64),
        mut grad: Option<&mut [f64]>,
        mut hess: Option<&mut Band>,
        mut rows: Option<&mut [Vec<(usize, f64)>]>,
    ) -> f64 {
        let p = self.p;
        let plant = &p.plant;
        let n = p.horizon();
        let dt = plant.dt;
        let span = self.storage_span();
        let k_f = dt / 3600.0 / self.revenue_ref;
        let pen = self.penalty();
        let cp = plant.power_coefficient();
        let hb = plant.head_b;
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        if let Some(h) = hess.as_deref_mut() {
            h.clear();
        }
        let mut value = 0.0;
        for t in 0..n {
            let fo = &p.scenario.forcing[t];
            let k = self.block * t;
            let idx: [Option<usize>; LOCAL] = [
                (t > 0).then(|| k - self.block + 2),
                Some(k),
                Some(k + 1),
                Some(k + 2),
                (self.block == 4).then_some(k + 3),
            ];
            let v_prev = self.volume_before(x, t);
            let v_next = plant.v_min + span * x[k + 2];
            let turb = self.caps[0] * x[k];
            let s_cap = self.slack_caps.get(t).copied().unwrap_or(0.0);
            let s = if self.block == 4 { s_cap * x[k + 3] } else { 0.0 };
            let river = self.river(x, t);
            let d_river = [
                self.retention[t] * span / dt,
                -self.caps[0],
                -self.caps[1],
                -span / dt,
                0.0,
            ];
            let head = plant.head(0.5 * (v_prev + v_next));
            let power = cp * turb * head;
            let dp_dv = cp * turb * hb * 0.5 * span;
            let d_power = [dp_dv, cp * self.caps[0] * head, 0.0, dp_dv, 0.0];
            // the only second derivatives: q_turb against either storage
            let cross = cp * self.caps[0] * hb * 0.5 * span;

            value -= (fo.price * power - pen * s) * k_f;
            let mut g_loc = [0.0; LOCAL];
            let mut h_loc = [[0.0; LOCAL]; LOCAL];
            for j in 0..LOCAL {
                g_loc[j] = -fo.price * k_f * d_power[j];
            }
            g_loc[4] += pen * k_f * s_cap;
            let mut cross_w = -fo.price * k_f;

            for (fi, fam) in self.families.iter().enumerate() {
                let i = fi * n + t;
                let (ci, dc) = match fam {
                    Family::RiverFloor => (
                        (river - p.qmin_river[t]) / self.river_cap,
                        d_river.map(|d| d / self.river_cap),
                    ),
                    Family::RiverCap => (
                        (self.river_cap - river) / self.river_cap,
                        d_river.map(|d| -d / self.river_cap),
                    ),
                    Family::Demand => {
                        let mut dc = d_power.map(|d| d / self.power_ref);
                        dc[4] = s_cap / self.power_ref;
                        ((power + p.solar(t) + s - fo.demand) / self.power_ref, dc)
                    }
                    Family::LevelFloor => (
                        (river - plant.q_eco_safety_floor.min(plant.q_eco_cap)) / self.river_cap,
                        d_river.map(|d| d / self.river_cap),
                    ),
                    Family::LevelSlope => {
                        let (floor, slope) = level_slope_branch(v_prev, p);
                        let mut dc = d_river.map(|d| d / self.river_cap);
                        dc[0] -= slope * span / self.river_cap;
                        ((river - floor) / self.river_cap, dc)
                    }
                };
                c[i] = ci;
                if let Some(rows) = rows.as_deref_mut() {
                    rows[i] = (0..LOCAL)
                        .filter_map(|j| idx[j].map(|v| (v, dc[j])))
                        .filter(|e| e.1 != 0.0)
                        .collect();
                }
                let (val, d1, d2) = term(i, ci);
                value += val;
                for j in 0..LOCAL {
                    g_loc[j] += d1 * dc[j];
                    for l in 0..LOCAL {
                        h_loc[j][l] += d2 * dc[j] * dc[l];
                    }
                }
                if *fam == Family::Demand {
                    cross_w += d1 / self.power_ref;
                }
            }
            for (a, b) in [(0, 1), (1, 3)] {
                h_loc[a][b] += cross_w * cross;
                h_loc[b][a] += cross_w * cross;
            }

            if let Some(g) = grad.as_deref_mut() {
                for j in 0..LOCAL {
                    if let Some(gj) = idx[j] {
                        g[gj] += g_loc[j];
                    }
                }
            }
            if let Some(h) = hess.as_deref_mut() {
                for j in 0..LOCAL {
                    for l in 0..=j {
                        if let (Some(a), Some(b)) = (idx[j], idx[l]) {
                            let v = h_loc[j][l];
                            if v != 0.0 {
                                h.add(a, b, v);
                            }
                        }
                    }
                }
            }
        }
        value
    }
}

/// Augmented-Lagrangian term for `c >= 0` written as `c - s = 0` over a
/// slack `s > 0` carrying the barrier `-tau ln s`, with `s` at its
/// minimiser. Returns the term's value, its first and second derivatives
/// in `c`, and the updated multiplier `tau / s`. As `tau -> 0` this is the
/// usual `-lambda c + mu c^2 / 2` on `mu c < lambda`, constant beyond.
pub(crate) fn al_term(c: f64, lambda: f64, mu: f64, tau: f64) -> (f64, f64, f64, f64) {
    // s solves mu s^2 - z s - tau = 0 with z = mu c - lambda
    let z = mu * c - lambda;
    let r = (z * z + 4.0 * mu * tau).sqrt();
    let (s, curvature) = if z > 0.0 {
        ((z + r) / (2.0 * mu), 2.0 * mu * tau / (r * (r + z)))
    } else {
        (2.0 * tau / (r - z), 0.5 * (r - z) / r)
    };
    let gap = c - s;
    let value = -lambda * gap + 0.5 * mu * gap * gap - tau * s.ln();
    let d1 = -lambda + mu * gap;
    // curvature above is 1 - ds/dc
    (value, d1, mu * curvature, -d1)
}
