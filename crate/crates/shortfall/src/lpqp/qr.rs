//! Updatable QR factorization of a tall matrix held column by column,
//! used for the working-set matrix of the active-set method.
//!
//! Stores `Q` transposed and row-major so that columns of `Q` are
//! contiguous. Appending or removing a column costs O(m^2) through Givens
//! rotations; the trailing rows of `Q'` always form an orthonormal basis of
//! the nullspace of the current column set.

use super::dot;

pub(super) struct UpdatableQr {
    m: usize,
    k: usize,
    qt: Vec<f64>,
    r: Vec<f64>,
}

fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    let h = a.hypot(b);
    if h == 0.0 {
        (1.0, 0.0, 0.0)
    } else {
        (a / h, b / h, h)
    }
}

impl UpdatableQr {
    pub fn new(m: usize) -> Self {
        let mut qt = vec![0.0; m * m];
        for i in 0..m {
            qt[i * m + i] = 1.0;
        }
        Self {
            m,
            k: 0,
            qt,
            r: vec![0.0; m * m],
        }
    }

    #[cfg(test)]
    pub fn n_cols(&self) -> usize {
        self.k
    }

    pub fn nullity(&self) -> usize {
        self.m - self.k
    }

    /// Column `i` of `Q` as a contiguous slice.
    pub fn q_col(&self, i: usize) -> &[f64] {
        &self.qt[i * self.m..(i + 1) * self.m]
    }

    /// Basis vector `i` of the nullspace of the current column set.
    pub fn null_col(&self, i: usize) -> &[f64] {
        self.q_col(self.k + i)
    }

    fn rotate_q_rows(&mut self, j0: usize, j1: usize, c: f64, s: f64) {
        let m = self.m;
        let (lo, hi) = (j0.min(j1), j0.max(j1));
        let (head, tail) = self.qt.split_at_mut(hi * m);
        let row0 = &mut head[lo * m..lo * m + m];
        let row1 = &mut tail[..m];
        for (a, b) in row0.iter_mut().zip(row1.iter_mut()) {
            let (x, y) = (*a, *b);
            *a = c * x + s * y;
            *b = -s * x + c * y;
        }
    }

    /// Appends a column if it is numerically independent of the current
    /// ones; returns false and leaves the factorization unchanged otherwise.
    pub fn try_append(&mut self, a: &[f64], rel_tol: f64) -> bool {
        let m = self.m;
        let k = self.k;
        if k == m {
            return false;
        }
        let mut v: Vec<f64> = (0..m).map(|i| dot(self.q_col(i), a)).collect();
        let tail: f64 = v[k..].iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale: f64 = dot(a, a).sqrt();
        if tail <= rel_tol * scale.max(1e-300) {
            return false;
        }
        for j in ((k + 1)..m).rev() {
            if v[j] != 0.0 {
                let (c, s, h) = givens(v[j - 1], v[j]);
                self.rotate_q_rows(j - 1, j, c, s);
                v[j - 1] = h;
                v[j] = 0.0;
            }
        }
        for (i, &vi) in v.iter().enumerate().take(k + 1) {
            self.r[i * m + k] = vi;
        }
        self.k += 1;
        true
    }

    /// Removes column `idx`.
    pub fn remove(&mut self, idx: usize) {
        let m = self.m;
        let k = self.k;
        debug_assert!(idx < k);
        for col in (idx + 1)..k {
            for i in 0..=col {
                self.r[i * m + col - 1] = self.r[i * m + col];
            }
        }
        self.k -= 1;
        let k = self.k;
        // Chase the subdiagonal introduced by the shift.
        for j in idx..k {
            let a = self.r[j * m + j];
            let b = self.r[(j + 1) * m + j];
            if b != 0.0 {
                let (c, s, h) = givens(a, b);
                self.r[j * m + j] = h;
                self.r[(j + 1) * m + j] = 0.0;
                for col in (j + 1)..k {
                    let x = self.r[j * m + col];
                    let y = self.r[(j + 1) * m + col];
                    self.r[j * m + col] = c * x + s * y;
                    self.r[(j + 1) * m + col] = -s * x + c * y;
                }
                self.rotate_q_rows(j, j + 1, c, s);
            }
        }
        for i in 0..=k {
            if i * m + k < self.r.len() {
                self.r[i * m + k] = 0.0;
            }
        }
    }

    /// Least-squares solve of `A lambda = g` for the factored columns.
    /// Returns the coefficient vector and the residual norm (the part of
    /// `g` outside the column span).
    pub fn solve(&self, g: &[f64]) -> (Vec<f64>, f64) {
        let m = self.m;
        let k = self.k;
        let v: Vec<f64> = (0..m).map(|i| dot(self.q_col(i), g)).collect();
        let resid: f64 = v[k..].iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut lambda = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = v[i];
            for j in (i + 1)..k {
                s -= self.r[i * m + j] * lambda[j];
            }
            let rii = self.r[i * m + i];
            lambda[i] = if rii.abs() > 1e-300 { s / rii } else { 0.0 };
        }
        (lambda, resid)
    }
}
