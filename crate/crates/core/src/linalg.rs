//! Small dense helpers for symmetric positive definite matrices.

use crate::error::{Error, Result};

/// Lower-triangular `L` with `L Lᵀ = a`, for a square matrix given as rows.
pub fn cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    if a.iter().any(|r| r.len() != n) {
        return Err(Error::Shape("covariance must be square".into()));
    }
    for i in 0..n {
        for j in 0..i {
            if (a[i][j] - a[j][i]).abs() > 1e-12 * (1.0 + a[i][j].abs()) {
                return Err(Error::Input("covariance is not symmetric".into()));
            }
        }
    }
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > 0.0) {
                    return Err(Error::Input(
                        "covariance is singular or not positive definite".into(),
                    ));
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Ok(l)
}

/// Solve `a x = b` for symmetric positive definite `a`.
pub fn spd_solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let l = cholesky(a)?;
    let n = b.len();
    if n != l.len() {
        return Err(Error::Shape(format!("rhs of length {n} for a {}x{0} system", l.len())));
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    Ok(x)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| dot(row, x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_two_by_two() {
        let a = vec![vec![1.0, 0.3], vec![0.3, 1.0]];
        let x = spd_solve(&a, &[1.0, 1.0]).unwrap();
        assert!((x[0] - 1.0 / 1.3).abs() < 1e-15);
        assert!((x[1] - 1.0 / 1.3).abs() < 1e-15);
        let l = cholesky(&a).unwrap();
        assert!((l[1][0] * l[1][0] + l[1][1] * l[1][1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_singular_and_asymmetric() {
        assert!(cholesky(&[vec![1.0, 1.0], vec![1.0, 1.0]]).is_err());
        assert!(cholesky(&[vec![1.0, 0.2], vec![0.3, 1.0]]).is_err());
    }
}
