use crate::error::{Error, Result};

/// `‖est - truth‖₂ / ‖truth‖₂`.
pub fn relative_l2_error(est: &[f64], truth: &[f64]) -> Result<f64> {
    let (num, den) = squared_ratio_parts(est, truth)?;
    Ok((num / den).sqrt())
}

/// `‖pred - actual‖₂² / ‖actual‖₂²`.
pub fn relative_mse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    let (num, den) = squared_ratio_parts(pred, actual)?;
    Ok(num / den)
}

fn squared_ratio_parts(a: &[f64], reference: &[f64]) -> Result<(f64, f64)> {
    if a.len() != reference.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {}",
            a.len(),
            reference.len()
        )));
    }
    let den: f64 = reference.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(Error::invalid("reference vector is zero"));
    }
    let num: f64 = a.iter().zip(reference).map(|(x, r)| (x - r).powi(2)).sum();
    Ok((num, den))
}
