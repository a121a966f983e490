//! Gaussian differential privacy primitives: budgets, composition,
//! conversions to and from `(ε, δ)`-DP, and the noise mechanisms.

mod mechanisms;
pub mod normal;
mod rng;

pub use mechanisms::{gaussian_mechanism, sample_laplace};
pub(crate) use mechanisms::gaussian_noise;
pub use normal::{std_normal_cdf, std_normal_quantile};
pub use rng::RandomSource;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A μ-GDP privacy parameter. Always positive and finite.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct GdpBudget(f64);

impl GdpBudget {
    pub fn new(mu: f64) -> Result<Self> {
        if mu.is_finite() && mu > 0.0 {
            Ok(Self(mu))
        } else {
            Err(Error::invalid(format!(
                "GDP parameter must be positive and finite, got {mu}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for GdpBudget {
    type Error = Error;

    fn try_from(mu: f64) -> Result<Self> {
        Self::new(mu)
    }
}

impl From<GdpBudget> for f64 {
    fn from(b: GdpBudget) -> f64 {
        b.0
    }
}

impl std::fmt::Display for GdpBudget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Split of a total budget across the four releases of the pipeline:
/// bin boundaries, bin counts, feature sums and label sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetAllocation {
    pub mu_bin: GdpBudget,
    pub mu_c: GdpBudget,
    pub mu_s: GdpBudget,
    pub mu_t: GdpBudget,
}

impl BudgetAllocation {
    /// Composed guarantee `sqrt(mu_bin² + mu_c² + mu_s² + mu_t²)`.
    pub fn total(&self) -> GdpBudget {
        compose(&[self.mu_bin, self.mu_c, self.mu_s, self.mu_t])
            .expect("four positive budgets compose to a positive budget")
    }
}

/// An `(ε, δ)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxDpParams {
    pub epsilon: f64,
    pub delta: f64,
}

impl ApproxDpParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }
}

/// Composition of GDP mechanisms: `sqrt(Σ μᵢ²)`.
pub fn compose(budgets: &[GdpBudget]) -> Result<GdpBudget> {
    if budgets.is_empty() {
        return Err(Error::invalid("cannot compose an empty list of budgets"));
    }
    // hypot keeps [3, 4] -> 5 exact and avoids overflow.
    let total = budgets.iter().fold(0.0_f64, |acc, b| acc.hypot(b.0));
    GdpBudget::new(total)
}

/// Splits `total` proportionally to `ratios` so that the parts compose back
/// to `total`. Ratios are ordered `(bin, count, feature-sum, label-sum)`.
pub fn allocate(total: GdpBudget, ratios: [f64; 4]) -> Result<BudgetAllocation> {
    if let Some(r) = ratios.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
        return Err(Error::invalid(format!(
            "budget ratios must be positive and finite, got {r}"
        )));
    }
    let norm = ratios.iter().fold(0.0_f64, |acc, r| acc.hypot(*r));
    let part = |r: f64| GdpBudget::new(total.0 * r / norm);
    Ok(BudgetAllocation {
        mu_bin: part(ratios[0])?,
        mu_c: part(ratios[1])?,
        mu_s: part(ratios[2])?,
        mu_t: part(ratios[3])?,
    })
}

/// The `δ(ε)` curve of a μ-GDP mechanism:
/// `Φ(-ε/μ + μ/2) - e^ε Φ(-ε/μ - μ/2)`.
///
/// For very small μ the value underflows to zero, so the returned `delta` may
/// be `0.0` even though the true value is positive.
pub fn gdp_to_approx_dp(mu: GdpBudget, epsilon: f64) -> Result<ApproxDpParams> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::invalid(format!(
            "epsilon must be finite and nonnegative, got {epsilon}"
        )));
    }
    Ok(ApproxDpParams {
        epsilon,
        delta: delta_for_epsilon(mu.0, epsilon),
    })
}

fn delta_for_epsilon(mu: f64, epsilon: f64) -> f64 {
    let a = std_normal_cdf(-epsilon / mu + mu / 2.0);
    let lower = -epsilon / mu - mu / 2.0;
    // e^ε Φ(lower) computed in log space when e^ε alone would overflow.
    let b = if epsilon < 700.0 {
        epsilon.exp() * std_normal_cdf(lower)
    } else {
        (epsilon + std_normal_cdf(lower).ln()).exp()
    };
    (a - b).max(0.0)
}

/// Smallest ε at which a μ-GDP mechanism is `(ε, δ)`-DP, found by bisection
/// on the strictly decreasing `δ(ε)` curve. Returns 0 when `δ(0) <= delta`.
pub fn gdp_to_epsilon(mu: GdpBudget, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    let m = mu.0;
    if delta_for_epsilon(m, 0.0) <= delta {
        return Ok(0.0);
    }
    let mut hi = 1.0_f64;
    while delta_for_epsilon(m, hi) > delta {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::invalid("epsilon search diverged"));
        }
    }
    let mut lo = 0.0_f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if delta_for_epsilon(m, mid) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(hi)
}

/// μ such that every ε-DP mechanism is μ-GDP: `-2 Φ⁻¹(1 / (1 + e^ε))`.
pub fn pure_dp_to_gdp(epsilon: f64) -> Result<GdpBudget> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    // 1/(1+e^ε) written to stay accurate for large ε.
    let p = (-epsilon).exp() / (1.0 + (-epsilon).exp());
    GdpBudget::new(-2.0 * std_normal_quantile(p)?)
}

/// Inverse of [`pure_dp_to_gdp`]: `ε = ln(Φ(μ/2) / Φ(-μ/2))`.
pub fn gdp_to_pure_dp(mu: GdpBudget) -> f64 {
    let half = mu.0 / 2.0;
    std_normal_cdf(half).ln() - std_normal_cdf(-half).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mu(x: f64) -> GdpBudget {
        GdpBudget::new(x).unwrap()
    }

    #[test]
    fn budget_validation() {
        assert!(GdpBudget::new(0.0).is_err());
        assert!(GdpBudget::new(-1.0).is_err());
        assert!(GdpBudget::new(f64::NAN).is_err());
        assert!(GdpBudget::new(f64::INFINITY).is_err());
        assert_eq!(GdpBudget::new(0.3).unwrap().value(), 0.3);
    }

    #[test]
    fn compose_examples() {
        assert_eq!(compose(&[mu(3.0), mu(4.0)]).unwrap().value(), 5.0);
        assert_eq!(compose(&[mu(0.7)]).unwrap().value(), 0.7);
        assert_eq!(compose(&[mu(1.0); 4]).unwrap().value(), 2.0);
        assert!(compose(&[]).is_err());
    }

    #[test]
    fn allocate_default_ratio() {
        let a = allocate(mu(1.0), [1.0, 3.0, 3.0, 3.0]).unwrap();
        let s28 = 28f64.sqrt();
        assert!((a.mu_bin.value() - 1.0 / s28).abs() < 1e-15);
        assert!((a.mu_bin.value() - 0.18898).abs() < 1e-5);
        for m in [a.mu_c, a.mu_s, a.mu_t] {
            assert!((m.value() - 3.0 / s28).abs() < 1e-15);
            assert!((m.value() - 0.56695).abs() < 1e-5);
        }
        assert!((a.total().value() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn allocate_other_ratios() {
        let a = allocate(mu(2.0), [1.0; 4]).unwrap();
        for m in [a.mu_bin, a.mu_c, a.mu_s, a.mu_t] {
            assert!((m.value() - 1.0).abs() < 1e-15);
        }
        let b = allocate(mu(1.0), [2.0, 3.0, 3.0, 3.0]).unwrap();
        assert!((b.mu_bin.value() - 2.0 / 31f64.sqrt()).abs() < 1e-15);
        assert!(allocate(mu(1.0), [0.0, 1.0, 1.0, 1.0]).is_err());
        assert!(allocate(mu(1.0), [1.0, -1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn delta_at_zero_epsilon() {
        for m in [0.1, 0.5, 1.0, 3.0] {
            let d = gdp_to_approx_dp(mu(m), 0.0).unwrap().delta;
            let expect = std_normal_cdf(m / 2.0) - std_normal_cdf(-m / 2.0);
            assert!((d - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn delta_decreasing_in_epsilon() {
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let eps = 0.1 * i as f64;
            let d = gdp_to_approx_dp(mu(1.0), eps).unwrap().delta;
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn delta_vanishes_for_small_mu() {
        let d = gdp_to_approx_dp(mu(1e-3), 0.5).unwrap().delta;
        assert!(d < 1e-100);
    }

    #[test]
    fn epsilon_for_delta_inverts_curve() {
        let m = mu(1.0);
        let eps = gdp_to_epsilon(m, 1e-5).unwrap();
        let d = gdp_to_approx_dp(m, eps).unwrap().delta;
        assert!((d - 1e-5).abs() < 1e-12);
    }

    #[test]
    fn pure_dp_conversion() {
        let m = pure_dp_to_gdp(1.0).unwrap().value();
        // -2 Φ⁻¹(1/(1+e)) = 1.2320353853449 (independent high-precision evaluation)
        assert!((m - 1.232_035_385_344_9).abs() < 1e-12, "{m}");
        assert!(pure_dp_to_gdp(1e-9).unwrap().value() < 1e-8);
        assert!(pure_dp_to_gdp(0.0).is_err());
        let mut prev = 0.0;
        for i in 1..=100 {
            let m = pure_dp_to_gdp(0.1 * i as f64 - 0.05).unwrap().value();
            assert!(m > prev);
            prev = m;
        }
    }

    #[test]
    fn pure_dp_round_trip() {
        for eps in [0.1, 1.0, 5.0] {
            let back = gdp_to_pure_dp(pure_dp_to_gdp(eps).unwrap());
            assert!((back - eps).abs() < 1e-9, "{eps} -> {back}");
        }
    }
}
