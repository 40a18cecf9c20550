//! Dense LU with partial pivoting for small nonsymmetric systems.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major `n x n` LU factorization `P A = L U`.
#[derive(Clone, Debug)]
pub struct DenseLu<T> {
    n: usize,
    lu: Vec<T>,
    piv: Vec<usize>,
}

impl<T: Scalar> DenseLu<T> {
    /// Factors the row-major matrix `a`, rejecting pivots below
    /// `n ε max|a|`.
    pub fn factor(n: usize, a: Vec<T>) -> Result<Self> {
        let scale = a.iter().fold(T::zero(), |m, &x| m.max(x.abs())).max(T::min_positive_value());
        Self::factor_with_threshold(n, a, T::epsilon() * scale * T::of(n as f64))
    }

    /// Factors `a`, rejecting pivots of magnitude `<= threshold`.
    pub fn factor_with_threshold(n: usize, mut a: Vec<T>, threshold: T) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, best) = (k..n).map(|i| (i, a[i * n + k].abs())).fold((k, -T::one()), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best <= threshold {
                return Err(Error::SingularSystem(k));
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                piv.swap(k, p);
            }
            let pivot = a[k * n + k];
            for i in k + 1..n {
                let f = a[i * n + k] / pivot;
                if f == T::zero() {
                    continue;
                }
                a[i * n + k] = f;
                for j in k + 1..n {
                    let u = a[k * n + j];
                    a[i * n + j] -= f * u;
                }
            }
        }
        Ok(DenseLu { n, lu: a, piv })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x: Vec<T> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: T = (0..i).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: T = (i + 1..n).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        x
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut z = b.to_vec();
        for i in 0..n {
            let s: T = (0..i).map(|j| self.lu[j * n + i] * z[j]).sum();
            z[i] = (z[i] - s) / self.lu[i * n + i];
        }
        for i in (0..n).rev() {
            let s: T = (i + 1..n).map(|j| self.lu[j * n + i] * z[j]).sum();
            z[i] -= s;
        }
        let mut x = vec![T::zero(); n];
        for (k, &p) in self.piv.iter().enumerate() {
            x[p] = z[k];
        }
        x
    }

    /// Explicit inverse, column by column.
    pub fn inverse(&self) -> Vec<T> {
        let n = self.n;
        let mut inv = vec![T::zero(); n * n];
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e[j] = T::one();
            let col = self.solve(&e);
            e[j] = T::zero();
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        inv
    }
}
