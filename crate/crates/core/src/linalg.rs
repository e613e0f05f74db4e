//! Small dense matrices and a cyclic Jacobi eigensolver for symmetric input.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

pub const MAX_JACOBI_SWEEPS: usize = 100;

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::BadMatrix);
        }
        Ok(DenseMatrix { n, data: rows.concat() })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self[(i, j)] == self[(j, i)]))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    fn off_diagonal_sq(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                s += self[(i, j)] * self[(i, j)];
            }
        }
        2.0 * s
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Eigen-decomposition `A = V diag(values) V^T` of a symmetric matrix.
/// Columns of `vectors` are the eigenvectors; order follows the diagonal, unsorted.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
    pub sweeps: usize,
}

/// Cyclic-by-row Jacobi rotations until the off-diagonal mass is negligible
/// against the Frobenius norm.
pub fn jacobi_eigen(a: &DenseMatrix) -> Result<SymmetricEigen> {
    if !a.is_symmetric() {
        return Err(Error::BadMatrix);
    }
    let n = a.n();
    let mut m = a.clone();
    let mut v = DenseMatrix::identity(n);
    let tolerance = (f64::EPSILON * f64::EPSILON) * m.frobenius_sq();

    for sweep in 0..=MAX_JACOBI_SWEEPS {
        let off = m.off_diagonal_sq();
        if off <= tolerance || off == 0.0 {
            let values = (0..n).map(|i| m[(i, i)]).collect();
            return Ok(SymmetricEigen { values, vectors: v, sweeps: sweep });
        }
        if sweep == MAX_JACOBI_SWEEPS {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let (akp, akq) = (m[(k, p)], m[(k, q)]);
                    let new_kp = c * akp - s * akq;
                    let new_kq = s * akp + c * akq;
                    m[(k, p)] = new_kp;
                    m[(p, k)] = new_kp;
                    m[(k, q)] = new_kq;
                    m[(q, k)] = new_kq;
                }
                m[(p, p)] -= t * apq;
                m[(q, q)] += t * apq;
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;

                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(Error::NoConvergence(MAX_JACOBI_SWEEPS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_symmetric(n: usize, seed: u64) -> DenseMatrix {
        let mut rng = SplitMix64::new(seed);
        let mut m = DenseMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let x = rng.uniform(-1.0, 1.0);
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
        }
        m
    }

    #[test]
    fn two_by_two_closed_form() {
        let m = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = jacobi_eigen(&m).unwrap();
        let mut vals = e.values.clone();
        vals.sort_by(f64::total_cmp);
        assert!((vals[0] - 1.0).abs() < 1e-15 && (vals[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn reconstructs_random_matrices() {
        for (n, seed) in [(1, 0), (3, 1), (8, 2), (20, 3), (40, 4)] {
            let a = random_symmetric(n, seed);
            let e = jacobi_eigen(&a).unwrap();
            for i in 0..n {
                let vi: Vec<f64> = (0..n).map(|k| e.vectors[(k, i)]).collect();
                let av = a.mul_vec(&vi);
                for k in 0..n {
                    assert!((av[k] - e.values[i] * vi[k]).abs() < 1e-12, "n={n}");
                }
                for j in 0..n {
                    let dot: f64 = (0..n).map(|k| e.vectors[(k, i)] * e.vectors[(k, j)]).sum();
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - expected).abs() < 1e-12);
                }
            }
            let sum: f64 = e.values.iter().sum();
            assert!((sum - a.trace()).abs() < 1e-12);
            assert!(e.sweeps < 20);
        }
    }

    #[test]
    fn rejects_asymmetric() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(jacobi_eigen(&m), Err(Error::BadMatrix)));
        assert!(DenseMatrix::from_rows(&[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn zero_matrix_is_already_diagonal() {
        let e = jacobi_eigen(&DenseMatrix::zeros(4)).unwrap();
        assert_eq!(e.values, vec![0.0; 4]);
        assert_eq!(e.sweeps, 0);
    }
}
