//! Adaptive ecological-discharge scheduling for hydropower reservoirs.
//!
//! A bounded-output neural predictor proposes the minimum river discharge
//! for every timestep; an augmented-Lagrangian scheduler maximises revenue
//! subject to that floor, demand, irrigation and storage constraints; and a
//! harness compares fixed, adaptive and clairvoyant floors on synthetic
//! scenarios.

// `!(x >= 0.0)` deliberately rejects NaN; index loops mirror the maths.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod harness;
pub mod hydro;
pub mod optimizer;
pub mod predictor;
pub mod rng;
pub mod scenario;
