//! Small dense symmetric matrices and the LDLᵀ factorization the criteria
//! and the fitting code share.
//!
//! Matrices here are tiny (at most ten rows), so everything is stored
//! row-major in a flat `Vec<f64>` and factorized without pivoting.

use serde::{Deserialize, Serialize};

/// Pivots below `DEFAULT_PIVOT_TOLERANCE * max(diag)` mark a matrix as singular.
pub const DEFAULT_PIVOT_TOLERANCE: f64 = 1e-12;

/// Dense symmetric matrix in row-major storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m.data[i * values.len() + i] = *v;
        }
        m
    }

    /// Builds a matrix from rows, symmetrizing by averaging the two triangles.
    ///
    /// Panics if the rows are not square.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.len();
        let mut m = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), dim, "matrix rows must be square");
            for (j, v) in row.iter().enumerate() {
                m.data[i * dim + j] = *v;
            }
        }
        m.symmetrize();
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.dim + j] = value;
        self.data[j * self.dim + i] = value;
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim.max(1)).map(|c| c.to_vec()).collect()
    }

    /// `self += weight * v vᵀ`.
    #[inline]
    pub fn add_rank_one(&mut self, weight: f64, v: &[f64]) {
        debug_assert_eq!(v.len(), self.dim);
        let n = self.dim;
        for i in 0..n {
            let wi = weight * v[i];
            if wi == 0.0 {
                continue;
            }
            let row = &mut self.data[i * n..(i + 1) * n];
            for (r, vj) in row.iter_mut().zip(v) {
                *r += wi * vj;
            }
        }
    }

    pub fn add_assign(&mut self, other: &SymMatrix) {
        assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn max_diagonal(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.get(i, i))
            .fold(0.0_f64, f64::max)
    }

    /// Removes row and column `index`.
    pub fn without(&self, index: usize) -> SymMatrix {
        let keep: Vec<usize> = (0..self.dim).filter(|&i| i != index).collect();
        self.select(&keep)
    }

    /// Principal submatrix (or symmetric permutation) on the given indices.
    pub fn select(&self, indices: &[usize]) -> SymMatrix {
        let n = indices.len();
        let mut m = SymMatrix::zeros(n);
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate() {
                m.data[a * n + b] = self.get(i, j);
            }
        }
        m
    }

    fn symmetrize(&mut self) {
        let n = self.dim;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = v;
                self.data[j * n + i] = v;
            }
        }
    }

    pub fn ldl(&self, tolerance: f64) -> Option<Ldl> {
        Ldl::factor(self, tolerance)
    }

    /// Log-determinant, or `-inf` when a pivot falls below the relative tolerance.
    pub fn log_det(&self, tolerance: f64) -> f64 {
        match self.ldl(tolerance) {
            Some(f) => f.log_det(),
            None => f64::NEG_INFINITY,
        }
    }

    /// Inverse via LDLᵀ, `None` if numerically singular.
    pub fn inverse(&self, tolerance: f64) -> Option<SymMatrix> {
        let f = self.ldl(tolerance)?;
        let n = self.dim;
        let mut inv = SymMatrix::zeros(n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = f.solve(&e);
            for (i, v) in col.iter().enumerate() {
                inv.data[i * n + j] = *v;
            }
        }
        inv.symmetrize();
        Some(inv)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.data
            .chunks(self.dim)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// `A = L D Lᵀ` with unit lower-triangular `L`.
#[derive(Debug, Clone)]
pub struct Ldl {
    dim: usize,
    lower: Vec<f64>,
    pivots: Vec<f64>,
}

impl Ldl {
    /// Fails when any pivot is not above `tolerance * max(diag(A))`.
    pub fn factor(a: &SymMatrix, tolerance: f64) -> Option<Self> {
        let n = a.dim();
        let scale = a.max_diagonal();
        if n > 0 && !(scale > 0.0 && scale.is_finite()) {
            return None;
        }
        let threshold = tolerance * scale;
        let mut lower = vec![0.0; n * n];
        let mut pivots = vec![0.0; n];
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                let l = lower[j * n + k];
                d -= l * l * pivots[k];
            }
            if !(d > threshold) {
                return None;
            }
            pivots[j] = d;
            lower[j * n + j] = 1.0;
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= lower[i * n + k] * lower[j * n + k] * pivots[k];
                }
                lower[i * n + j] = s / d;
            }
        }
        Some(Self { dim: n, lower, pivots })
    }

    pub fn pivots(&self) -> &[f64] {
        &self.pivots
    }

    pub fn log_det(&self) -> f64 {
        self.pivots.iter().map(|d| d.ln()).sum()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.lower[i * n + k] * x[k];
            }
            x[i] = s;
        }
        for i in 0..n {
            x[i] /= self.pivots[i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.lower[k * n + i] * x[k];
            }
            x[i] = s;
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_recovers_rhs() {
        let a = SymMatrix::from_rows(&[
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, 0.2],
            vec![0.5, 0.2, 2.0],
        ]);
        let b = [1.0, -2.0, 0.5];
        let x = a.ldl(DEFAULT_PIVOT_TOLERANCE).unwrap().solve(&b);
        let back = a.mul_vec(&x);
        for (u, v) in back.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = SymMatrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]);
        let inv = a.inverse(DEFAULT_PIVOT_TOLERANCE).unwrap();
        let c0 = a.mul_vec(&[inv.get(0, 0), inv.get(1, 0)]);
        assert!((c0[0] - 1.0).abs() < 1e-12 && c0[1].abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_is_singular() {
        assert_eq!(SymMatrix::zeros(3).log_det(1e-12), f64::NEG_INFINITY);
    }
}
