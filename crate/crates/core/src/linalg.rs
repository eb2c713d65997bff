//! Small dense linear algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Systems whose 1-norm condition estimate exceeds this are rejected.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Solves `a x = b` by LU with partial pivoting, rejecting ill-conditioned systems.
pub fn solve(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: a.ncols() });
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: b.len() });
    }
    let lu = a.clone().lu();
    let inv = lu.try_inverse().ok_or(Error::Singular { condition: f64::INFINITY })?;
    let condition = norm1(a) * norm1(&inv);
    if !condition.is_finite() || condition > CONDITION_LIMIT {
        return Err(Error::Singular { condition });
    }
    let x = lu
        .solve(&DVector::from_column_slice(b))
        .ok_or(Error::Singular { condition: f64::INFINITY })?;
    Ok(x.iter().copied().collect())
}

/// Inverse with the same conditioning guard as [`solve`].
pub fn inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = a.clone().try_inverse().ok_or(Error::Singular { condition: f64::INFINITY })?;
    let condition = norm1(a) * norm1(&inv);
    if !condition.is_finite() || condition > CONDITION_LIMIT {
        return Err(Error::Singular { condition });
    }
    Ok(inv)
}

/// Maximum absolute column sum.
pub fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `J v` for a row-major Jacobian stored as a `DMatrix`.
pub fn mat_vec(j: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (j * DVector::from_column_slice(v)).iter().copied().collect()
}

/// Minimum-norm least-squares step `min |J dx + f|` via SVD.
pub fn least_squares_step(j: &DMatrix<f64>, f: &[f64]) -> Option<Vec<f64>> {
    let svd = j.clone().svd(true, true);
    let rhs = -DVector::from_column_slice(f);
    let eps = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    svd.solve(&rhs, eps).ok().map(|x| x.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_needs_pivoting() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let x = solve(&a, &[2.0, 3.0]).unwrap();
        assert_eq!(x, vec![3.0, 2.0]);
    }

    #[test]
    fn solve_rejects_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(solve(&a, &[1.0, 1.0]), Err(Error::Singular { .. })));
        let near = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 + 1e-14]);
        assert!(solve(&near, &[1.0, 1.0]).is_err());
    }
}
