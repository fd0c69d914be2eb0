//! Box bounds on the scaled variables.

use super::model::ScaledModel;

pub(crate) struct Projector {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Projector {
    pub fn new(m: &ScaledModel<'_>) -> Self {
        let (lo, hi) = m.bounds();
        Self { lo, hi }
    }

    /// Infinity norm of `P(x - g) - x`.
    pub fn stationarity(&self, x: &[f64], g: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..x.len() {
            let step = (x[i] - g[i]).clamp(self.lo[i], self.hi[i]) - x[i];
            worst = worst.max(step.abs());
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::test_support::small_problem;

    #[test]
    fn bounds_encode_floors_and_storage() {
        let mut p = small_problem(2, 1.5);
        p.plant.q_irr_max = 2.0;
        p.qmin_irr = 0.5;
        let m = ScaledModel::new(&p);
        let proj = Projector::new(&m);
        let clamp = |v: f64| -> Vec<f64> { (0..m.n_vars()).map(|i| v.clamp(proj.lo[i], proj.hi[i])).collect() };
        let x = clamp(-1.0);
        // everything at its minimum, storage at dead volume
        assert_eq!(&x[..3], &[0.0, 0.25, 0.0]);
        let x = clamp(2.0);
        assert_eq!(&x[..3], &[1.0, 1.0, 1.0]);
        let theta = m.theta(&x);
        assert_eq!(&theta[..3], &[p.plant.q_turb_max, 0.0, 2.0]);
    }
}
