//! Thomas algorithm for tridiagonal systems.

use crate::error::{Error, Result};

/// Tridiagonal matrix stored by diagonals; `lower[0]` and `upper[n-1]` are unused.
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
    scratch: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Tridiagonal {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
            scratch: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Row `i` becomes the identity row `x_i = rhs_i`.
    pub fn set_identity_row(&mut self, i: usize) {
        self.lower[i] = 0.0;
        self.diag[i] = 1.0;
        self.upper[i] = 0.0;
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(x.len(), n);
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.lower[i] * x[i - 1];
            }
            if i + 1 < n {
                s += self.upper[i] * x[i + 1];
            }
            y[i] = s;
        }
    }

    /// Solves `A x = rhs` in place. No pivoting: callers assemble diagonally
    /// dominant matrices.
    pub fn solve_in_place(&mut self, rhs: &mut [f64]) -> Result<()> {
        let n = self.len();
        if rhs.len() != n {
            return Err(Error::GridMismatch(format!(
                "rhs of length {} for a {n}x{n} system",
                rhs.len()
            )));
        }
        let c = &mut self.scratch;
        let mut denom = self.diag[0];
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::Tridiagonal { row: 0 });
        }
        c[0] = self.upper[0] / denom;
        rhs[0] /= denom;
        for i in 1..n {
            denom = self.diag[i] - self.lower[i] * c[i - 1];
            if denom == 0.0 || !denom.is_finite() {
                return Err(Error::Tridiagonal { row: i });
            }
            c[i] = self.upper[i] / denom;
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) / denom;
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= c[i] * rhs[i + 1];
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_known_system() {
        // [2 -1 0; -1 2 -1; 0 -1 2] x = [1 0 1] -> x = [1 1 1]
        let mut m = Tridiagonal::zeros(3);
        m.diag.copy_from_slice(&[2.0, 2.0, 2.0]);
        m.lower.copy_from_slice(&[0.0, -1.0, -1.0]);
        m.upper.copy_from_slice(&[-1.0, -1.0, 0.0]);
        let mut rhs = vec![1.0, 0.0, 1.0];
        m.solve_in_place(&mut rhs).unwrap();
        for v in rhs {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn apply_inverts_solve() {
        let n = 50;
        let mut m = Tridiagonal::zeros(n);
        for i in 0..n {
            m.diag[i] = 4.0 + (i as f64).sin();
            m.lower[i] = -1.0 + 0.1 * (i as f64).cos();
            m.upper[i] = -1.3;
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).cos()).collect();
        let mut y = vec![0.0; n];
        m.apply(&x, &mut y);
        m.solve_in_place(&mut y).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        let mut m = Tridiagonal::zeros(2);
        let mut rhs = vec![1.0, 1.0];
        assert!(matches!(
            m.solve_in_place(&mut rhs),
            Err(Error::Tridiagonal { row: 0 })
        ));
    }
}
