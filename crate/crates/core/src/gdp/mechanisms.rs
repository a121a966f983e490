use super::{GdpBudget, RandomSource};
use crate::error::{Error, Result};

/// Releases `value + N(0, (sensitivity / mu)²)`, which is `mu`-GDP for a
/// statistic with the given sensitivity.
pub fn gaussian_mechanism(
    value: f64,
    sensitivity: f64,
    mu: GdpBudget,
    rng: &mut RandomSource,
) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::invalid(format!("value must be finite, got {value}")));
    }
    if !(sensitivity.is_finite() && sensitivity >= 0.0) {
        return Err(Error::invalid(format!(
            "sensitivity must be finite and nonnegative, got {sensitivity}"
        )));
    }
    if sensitivity == 0.0 {
        return Ok(value);
    }
    Ok(value + gaussian_noise(sensitivity / mu.value(), rng))
}

/// `N(0, sd²)`; a zero standard deviation draws nothing from `rng`.
pub(crate) fn gaussian_noise(sd: f64, rng: &mut RandomSource) -> f64 {
    if sd == 0.0 {
        0.0
    } else {
        sd * rng.standard_normal()
    }
}

/// Draws from the Laplace distribution with density `exp(-|x|/scale) / (2 scale)`.
pub fn sample_laplace(scale: f64, rng: &mut RandomSource) -> Result<f64> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::invalid(format!(
            "Laplace scale must be positive and finite, got {scale}"
        )));
    }
    // Inverse CDF on u in (-1/2, 1/2).
    let u = rng.open01() - 0.5;
    Ok(-scale * u.signum() * (1.0 - 2.0 * u.abs()).ln())
}
