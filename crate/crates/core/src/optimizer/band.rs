//! Symmetric banded matrices and their Cholesky factors.

#[derive(Debug, Clone)]
pub(crate) struct Band {
    n: usize,
    b: usize,
    /// Row-major lower band: `data[i * (b + 1) + (i - j)] = A[i][j]`.
    data: Vec<f64>,
}

impl Band {
    pub fn new(n: usize, b: usize) -> Self {
        Self {
            n,
            b,
            data: vec![0.0; n * (b + 1)],
        }
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    fn at(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(i - j <= self.b, "({i}, {j}) outside band {}", self.b);
        i * (self.b + 1) + (i - j)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        if hi - lo > self.b {
            0.0
        } else {
            self.data[self.at(i, j)]
        }
    }

    /// Adds `v` to `A[i][j]` (and, by symmetry, `A[j][i]`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.at(i, j);
        self.data[k] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.at(i, j);
        self.data[k] = v;
    }

    /// Cholesky factor of `A + diag(shift)`, or `None` if that matrix is
    /// not numerically positive definite.
    pub fn cholesky(&self, shift: &[f64]) -> Option<Band> {
        let (n, b) = (self.n, self.b);
        let mut l = self.clone();
        for i in 0..n {
            let d = l.data[l.at(i, i)] + shift[i];
            l.set(i, i, d);
        }
        for j in 0..n {
            let end = (j + b).min(n - 1);
            let start = j.saturating_sub(b);
            let mut d = l.get(j, j);
            for k in start..j {
                let v = l.get(j, k);
                d -= v * v;
            }
            if !(d > 1e-14 * self.get(j, j).abs().max(f64::MIN_POSITIVE)) || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l.set(j, j, d);
            for i in j + 1..=end {
                let mut s = l.get(i, j);
                for k in i.saturating_sub(b).max(start)..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / d);
            }
        }
        Some(l)
    }

    /// Solves `L Lᵀ x = r` in place, where `self` is a factor from
    /// [`Band::cholesky`].
    pub fn solve_factored(&self, r: &mut [f64]) {
        let (n, b) = (self.n, self.b);
        for i in 0..n {
            let mut s = r[i];
            for k in i.saturating_sub(b)..i {
                s -= self.get(i, k) * r[k];
            }
            r[i] = s / self.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = r[i];
            for k in i + 1..(i + b + 1).min(n) {
                s -= self.get(k, i) * r[k];
            }
            r[i] = s / self.get(i, i);
        }
    }
}
