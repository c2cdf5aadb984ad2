//! Small dense symmetric-matrix helpers for per-node metric algebra.

use nalgebra::DMatrix;

use crate::grid::{sym_index, MAX_DIM};

pub type Mat = [[f64; MAX_DIM]; MAX_DIM];

pub const ZERO: Mat = [[0.0; MAX_DIM]; MAX_DIM];

pub fn unpack(packed: &[f64], n: usize) -> Mat {
    let mut m = ZERO;
    for i in 0..n {
        for j in 0..=i {
            let v = packed[sym_index(i, j)];
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

pub fn pack(m: &Mat, n: usize, out: &mut [f64]) {
    for i in 0..n {
        for j in 0..=i {
            out[sym_index(i, j)] = 0.5 * (m[i][j] + m[j][i]);
        }
    }
}

pub fn identity(n: usize) -> Mat {
    let mut m = ZERO;
    for (i, row) in m.iter_mut().enumerate().take(n) {
        row[i] = 1.0;
    }
    m
}

pub fn mul(a: &Mat, b: &Mat, n: usize) -> Mat {
    let mut c = ZERO;
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += a[i][k] * b[k][j];
            }
            c[i][j] = s;
        }
    }
    c
}

/// Lower Cholesky factor; `None` unless the matrix is positive definite.
pub fn cholesky(m: &Mat, n: usize) -> Option<Mat> {
    let mut l = ZERO;
    for j in 0..n {
        let mut d = m[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        l[j][j] = d;
        for i in j + 1..n {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / d;
        }
    }
    Some(l)
}

/// Inverse and determinant of a symmetric positive-definite matrix.
pub fn spd_inverse(m: &Mat, n: usize) -> Option<(Mat, f64)> {
    let l = cholesky(m, n)?;
    let mut det = 1.0;
    for i in 0..n {
        det *= l[i][i];
    }
    det *= det;
    // Invert L, then inv(m) = inv(L)^T inv(L).
    let mut li = ZERO;
    for i in 0..n {
        li[i][i] = 1.0 / l[i][i];
        for j in 0..i {
            let mut s = 0.0;
            for k in j..i {
                s -= l[i][k] * li[k][j];
            }
            li[i][j] = s / l[i][i];
        }
    }
    let mut inv = ZERO;
    for i in 0..n {
        for j in 0..=i {
            let mut s = 0.0;
            for k in i..n {
                s += li[k][i] * li[k][j];
            }
            inv[i][j] = s;
            inv[j][i] = s;
        }
    }
    Some((inv, det))
}

pub fn determinant(m: &Mat, n: usize) -> f64 {
    let dm = DMatrix::from_fn(n, n, |i, j| m[i][j]);
    dm.determinant()
}

/// Eigenvalues of `a⁻¹ b` for symmetric `a` (positive definite) and `b`,
/// in ascending order.
pub fn generalized_eigenvalues(a: &Mat, b: &Mat, n: usize) -> Option<Vec<f64>> {
    let l = cholesky(a, n)?;
    let lm = DMatrix::from_fn(n, n, |i, j| l[i][j]);
    let linv = lm.try_inverse()?;
    let bm = DMatrix::from_fn(n, n, |i, j| b[i][j]);
    let c = &linv * bm * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut ev: Vec<f64> = c.symmetric_eigen().eigenvalues.iter().cloned().collect();
    ev.sort_by(f64::total_cmp);
    Some(ev)
}

pub fn symmetric_eigenvalues(m: &Mat, n: usize) -> Vec<f64> {
    generalized_eigenvalues(&identity(n), m, n).expect("identity is positive definite")
}

pub fn max_abs_diff_identity(m: &Mat, n: usize) -> f64 {
    let mut e: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let t = if i == j { 1.0 } else { 0.0 };
            e = e.max((m[i][j] - t).abs());
        }
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_round_trip() {
        let mut m = ZERO;
        let v = [
            [4.0, 1.0, 0.5, 0.2],
            [1.0, 3.0, 0.3, 0.1],
            [0.5, 0.3, 2.0, 0.4],
            [0.2, 0.1, 0.4, 5.0],
        ];
        m.copy_from_slice(&v);
        let (inv, det) = spd_inverse(&m, 4).unwrap();
        assert!(max_abs_diff_identity(&mul(&m, &inv, 4), 4) < 1e-13);
        assert!((det - determinant(&m, 4)).abs() < 1e-10 * det);
    }

    #[test]
    fn rejects_indefinite() {
        let mut m = identity(2);
        m[1][1] = -1.0;
        assert!(cholesky(&m, 2).is_none());
    }

    #[test]
    fn generalized_eigenvalues_of_scaled_identity() {
        let a = identity(3);
        let mut b = identity(3);
        b[0][0] = 2.0;
        b[2][2] = 0.5;
        let ev = generalized_eigenvalues(&a, &b, 3).unwrap();
        assert!((ev[0] - 0.5).abs() < 1e-12 && (ev[2] - 2.0).abs() < 1e-12);
    }
}
