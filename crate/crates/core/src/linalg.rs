//! Small dense linear algebra: the Euclidean norm, a row-major matrix type and
//! a cyclic Jacobi eigensolver for the symmetric part of a matrix.
//!
//! Dimensions in this crate are small (at most a few dozen), so nothing here
//! tries to be clever about cache blocking.

use crate::error::{invalid, Result};
use crate::model::MatrixFn;

/// Euclidean 2-norm, accumulated with a running scale so that components as
/// large as `1e200` do not overflow.
pub fn norm(u: &[f64]) -> f64 {
    let mut scale = 0.0_f64;
    let mut ssq = 1.0_f64;
    for &x in u {
        if x != 0.0 {
            let a = x.abs();
            if scale < a {
                ssq = 1.0 + ssq * (scale / a) * (scale / a);
                scale = a;
            } else {
                ssq += (a / scale) * (a / scale);
            }
        }
    }
    scale * ssq.sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dense square matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    n: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        Mat {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(invalid("matrix rows must all have length equal to the row count"));
        }
        Ok(Mat {
            n,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.n, |i, j| self[(j, i)])
    }

    /// `(A + Aᵀ)/2`
    pub fn symmetric_part(&self) -> Mat {
        Mat::from_fn(self.n, |i, j| 0.5 * (self[(i, j)] + self[(j, i)]))
    }

    /// `out = self * u`
    pub fn mul_vec_into(&self, u: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            *o = dot(&self.data[i * self.n..(i + 1) * self.n], u);
        }
    }

    pub fn mul_vec(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.mul_vec_into(u, &mut out);
        out
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        Mat::from_fn(self.n, |i, j| {
            (0..self.n).map(|k| self[(i, k)] * other[(k, j)]).sum()
        })
    }

    fn frobenius(&self) -> f64 {
        norm(&self.data)
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: Mat,
}

impl SymmetricEigen {
    pub fn max_index(&self) -> usize {
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = k;
            }
        }
        best
    }

    pub fn vector(&self, k: usize) -> Vec<f64> {
        (0..self.vectors.dim()).map(|i| self.vectors[(i, k)]).collect()
    }
}

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi iteration. Only the symmetric part of `s` is used.
pub fn symmetric_eigen(s: &Mat) -> Result<SymmetricEigen> {
    if !s.is_finite() {
        return Err(invalid("matrix has non-finite entries"));
    }
    let n = s.dim();
    let mut a = s.symmetric_part();
    let mut v = Mat::identity(n);
    let scale = a.frobenius();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= JACOBI_TOL * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }
    Ok(SymmetricEigen {
        values: (0..n).map(|i| a[(i, i)]).collect(),
        vectors: v,
    })
}

/// Largest eigenvalue of the symmetric part of `m`: the smallest `γ` with
/// `⟨u, m u⟩ ≤ γ‖u‖²` for every `u`.
pub fn log_norm(m: &Mat) -> Result<f64> {
    if m.dim() == 1 {
        if !m[(0, 0)].is_finite() {
            return Err(invalid("matrix has non-finite entries"));
        }
        return Ok(m[(0, 0)]);
    }
    let eig = symmetric_eigen(m)?;
    Ok(eig.values[eig.max_index()])
}

/// Sharp `γ(t)` for `A(t)`.
pub fn gamma_from_matrix(a: &MatrixFn, t: f64) -> Result<f64> {
    log_norm(&a.eval(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_basic() {
        assert_eq!(norm(&[0.0, 0.0, 0.0]), 0.0);
        assert_eq!(norm(&[3.0, 4.0]), 5.0);
        assert_eq!(norm(&[]), 0.0);
        assert!((norm(&[1e200, 1e200]) - 1e200 * 2f64.sqrt()).abs() < 1e186);
    }

    #[test]
    fn gamma_examples() {
        let m = Mat::from_rows(&[vec![-1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        assert!((log_norm(&m).unwrap() + 1.0).abs() < 1e-15);
        let m = Mat::from_rows(&[vec![0.0, 2.0], vec![0.0, 0.0]]).unwrap();
        assert!((log_norm(&m).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn skew_has_zero_gamma() {
        let m = Mat::from_rows(&[
            vec![0.0, 1.5, -2.0],
            vec![-1.5, 0.0, 0.3],
            vec![2.0, -0.3, 0.0],
        ])
        .unwrap();
        assert_eq!(log_norm(&m).unwrap(), 0.0);
    }

    #[test]
    fn non_finite_rejected() {
        let m = Mat::from_rows(&[vec![f64::NAN, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(log_norm(&m).is_err());
        let m = Mat::from_rows(&[vec![f64::INFINITY]]).unwrap();
        assert!(log_norm(&m).is_err());
    }

    #[test]
    fn eigenvector_attains_gamma() {
        let m = Mat::from_rows(&[
            vec![1.0, 2.0, 0.5],
            vec![-0.3, -1.0, 4.0],
            vec![0.7, 0.1, 0.2],
        ])
        .unwrap();
        let eig = symmetric_eigen(&m).unwrap();
        let k = eig.max_index();
        let v = eig.vector(k);
        let quad = dot(&v, &m.mul_vec(&v));
        assert!((quad - eig.values[k]).abs() < 1e-12);
        assert!((norm(&v) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(Mat::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }
}
