//! Small dense helpers for the reduced QP systems (at most a few dozen rows).

/// Row-major square matrix.
#[derive(Debug, Clone)]
pub(crate) struct Square {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Square {
    pub fn zeros(n: usize) -> Self {
        Square {
            n,
            data: vec![0.0; n * n],
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn max_abs_diag(&self) -> f64 {
        (0..self.n).map(|i| self.at(i, i).abs()).fold(0.0, f64::max)
    }

    /// Principal submatrix on `idx`.
    pub fn principal(&self, idx: &[usize]) -> Square {
        let mut out = Square::zeros(idx.len());
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out.set(a, b, self.at(i, j));
            }
        }
        out
    }
}

/// Lower Cholesky factor. Returns `None` when a pivot falls at or below
/// `pivot_floor`.
pub(crate) fn cholesky(a: &Square, pivot_floor: f64) -> Option<Square> {
    let n = a.n;
    let mut l = Square::zeros(n);
    for j in 0..n {
        let mut d = a.at(j, j);
        for k in 0..j {
            d -= l.at(j, k) * l.at(j, k);
        }
        if !(d > pivot_floor) {
            return None;
        }
        let d = d.sqrt();
        l.set(j, j, d);
        for i in (j + 1)..n {
            let mut s = a.at(i, j);
            for k in 0..j {
                s -= l.at(i, k) * l.at(j, k);
            }
            l.set(i, j, s / d);
        }
    }
    Some(l)
}

pub(crate) fn cholesky_solve(l: &Square, b: &[f64]) -> Vec<f64> {
    let n = l.n;
    let mut z = b.to_vec();
    for i in 0..n {
        let mut s = z[i];
        for k in 0..i {
            s -= l.at(i, k) * z[k];
        }
        z[i] = s / l.at(i, i);
    }
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in (i + 1)..n {
            s -= l.at(k, i) * z[k];
        }
        z[i] = s / l.at(i, i);
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_spd_system() {
        let mut a = Square::zeros(3);
        let rows = [[4.0, 2.0, 0.4], [2.0, 5.0, 1.0], [0.4, 1.0, 3.0]];
        for i in 0..3 {
            for j in 0..3 {
                a.set(i, j, rows[i][j]);
            }
        }
        let l = cholesky(&a, 0.0).unwrap();
        let x = cholesky_solve(&l, &[1.0, 2.0, 3.0]);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a.at(i, j) * x[j]).sum();
            assert!((r - [1.0, 2.0, 3.0][i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_singular() {
        let mut a = Square::zeros(2);
        a.data = vec![1.0, 1.0, 1.0, 1.0];
        assert!(cholesky(&a, 1e-12).is_none());
    }
}
