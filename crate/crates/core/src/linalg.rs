//! Small dense solves with a condition-number guard.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};

/// Systems whose singular values spread wider than this are rejected.
pub const CONDITION_LIMIT: f64 = 1e12;

fn guarded_svd(a: &DMatrix<f64>) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular {
            condition: f64::INFINITY,
        });
    }
    let svd = SVD::new(a.clone(), true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::Singular { condition });
    }
    Ok(svd)
}

/// 2-norm condition number, infinite for singular input.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let s = a.clone().singular_values();
    let smin = s.min();
    if smin > 0.0 {
        s.max() / smin
    } else {
        f64::INFINITY
    }
}

/// Solves `a x = b` for square `a`.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = guarded_svd(a)?;
    svd.solve(b, 0.0).map_err(|e| Error::invalid(e.to_string()))
}

/// Solves `a X = b` column by column.
pub fn solve_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = guarded_svd(a)?;
    svd.solve(b, 0.0).map_err(|e| Error::invalid(e.to_string()))
}

/// Minimum-norm least squares `argmin ‖a x - b‖₂` for full-column-rank `a`.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() < a.ncols() {
        return Err(Error::Singular {
            condition: f64::INFINITY,
        });
    }
    let svd = guarded_svd(a)?;
    svd.solve(b, 0.0).map_err(|e| Error::invalid(e.to_string()))
}

/// `a⁻¹ h a⁻¹` for symmetric `a`, computed with two solves and symmetrised.
pub fn sandwich(a: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let left = solve_matrix(a, h)?;
    let full = solve_matrix(a, &left.transpose())?;
    Ok((&full + full.transpose()) * 0.5)
}
