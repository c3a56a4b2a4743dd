//! Dense component arrays for rank-3 and rank-4 objects in a coordinate basis.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Components `A^i_jk`, row-major in `(i, j, k)`.
///
/// Connection coefficients use the convention `∇_{e_j} e_k = Γ^i_jk e_i`:
/// the first lower index is the differentiation direction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tensor3 {
    dim: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dim: usize) -> Self {
        Tensor3 {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    t.data[(i * dim + j) * dim + k] = f(i, j, k);
                }
            }
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.dim + j) * self.dim + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.dim + j) * self.dim + k] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `M^i_k = A^i_jk u^j`: contraction of the first lower slot.
    pub fn contract_first(&self, u: &Vector) -> Matrix {
        let n = self.dim;
        Matrix::from_fn(n, n, |i, k| (0..n).map(|j| self.get(i, j, k) * u[j]).sum())
    }

    /// `w^i = A^i_jk u^j v^k`.
    pub fn apply(&self, u: &Vector, v: &Vector) -> Vector {
        let n = self.dim;
        Vector::from_fn(n, |i, _| {
            let mut acc = 0.0;
            for j in 0..n {
                if u[j] == 0.0 {
                    continue;
                }
                for k in 0..n {
                    acc += self.get(i, j, k) * u[j] * v[k];
                }
            }
            acc
        })
    }

    pub fn scaled_add(&self, a: f64, other: &Tensor3) -> Tensor3 {
        Tensor3 {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| x + a * y)
                .collect(),
        }
    }

    pub fn scale(&self, a: f64) -> Tensor3 {
        Tensor3 {
            dim: self.dim,
            data: self.data.iter().map(|x| a * x).collect(),
        }
    }
}

/// Components `R^i_jkl`, row-major in `(i, j, k, l)`.
///
/// For curvature, `(R(X, Y) Z)^i = R^i_jkl Z^j X^k Y^l`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tensor4 {
    dim: usize,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(dim: usize) -> Self {
        Tensor4 {
            dim,
            data: vec![0.0; dim.pow(4)],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let n = self.dim;
        self.data[((i * n + j) * n + k) * n + l]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        let n = self.dim;
        self.data[((i * n + j) * n + k) * n + l] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `(R(x, y) z)^i = R^i_jkl z^j x^k y^l`.
    pub fn apply(&self, x: &Vector, y: &Vector, z: &Vector) -> Vector {
        let n = self.dim;
        Vector::from_fn(n, |i, _| {
            let mut acc = 0.0;
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        acc += self.get(i, j, k, l) * z[j] * x[k] * y[l];
                    }
                }
            }
            acc
        })
    }

    /// The endomorphism `Z ↦ R(e_k, e_l) Z` as a matrix `M^i_j = R^i_jkl`.
    pub fn plane_matrix(&self, k: usize, l: usize) -> Matrix {
        Matrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j, k, l))
    }
}

pub(crate) fn max_norm(m: &Matrix) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}
