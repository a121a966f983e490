//! Private weighted least squares on bin summaries.
//!
//! Per-bin sums are privatized with the Gaussian mechanism, then the model
//! `t̃ = S̃β + η̃` with weights `w̃_k = 1/c̃_k` is fitted in two ways:
//!
//! * naive: `(S̃ᵀW̃S̃)⁻¹ S̃ᵀW̃t̃`, which is attenuated by the feature noise;
//! * debiased: the root of `Σ_k [s̃_k w̃_k (t̃_k - s̃_kᵀb) + w̃_k D_k b] = 0`,
//!   i.e. `(S̃ᵀW̃S̃ - Σ_k w̃_k D_k)⁻¹ S̃ᵀW̃t̃`, where `D_k` is the covariance of
//!   the noise added to `s_k`.
//!
//! The debiased fit comes with the sandwich covariance `M̃⁻¹H̃M̃⁻¹` built from
//! the same estimating equation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::aggregation::{NoiseMode, PreparedBins};
use crate::error::{Error, Result};
use crate::gdp::{gaussian_noise, std_normal_quantile, GdpBudget, RandomSource};
use crate::linalg;

/// How feature-sum noise is scaled across coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseCalibration {
    /// Coordinate `i` of bin `k` gets standard deviation `Δ_ki / μ_s`.
    #[default]
    PerCoordinate,
    /// Every coordinate of bin `k` gets `‖Δ_k‖₂ / μ_s`, the ℓ2 calibration of
    /// the whole vector release.
    StrictL2,
}

/// Scale of the noise-variance correction subtracted from the Gram matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionScaling {
    /// Subtract `Σ_k w̃_k D_k`; the estimating-equation root.
    #[default]
    Summed,
    /// Subtract `(1/K) Σ_k w̃_k D_k`. Kept for comparison only: it leaves most
    /// of the attenuation bias in place.
    Averaged,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PrivatizeOptions {
    pub calibration: NoiseCalibration,
    pub noise: NoiseMode,
}

/// Privatized per-bin sums together with weights and noise covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivatizedSummaries {
    sums: DMatrix<f64>,
    labels: DVector<f64>,
    weights: DVector<f64>,
    noise_var: DMatrix<f64>,
}

impl PrivatizedSummaries {
    /// `sums` is K×d, `noise_var` holds the diagonals of the `D_k` row-wise.
    pub fn from_parts(
        sums: DMatrix<f64>,
        labels: DVector<f64>,
        weights: DVector<f64>,
        noise_var: DMatrix<f64>,
    ) -> Result<Self> {
        let k = sums.nrows();
        if k == 0 {
            return Err(Error::EmptyResult);
        }
        if labels.len() != k || weights.len() != k || noise_var.shape() != sums.shape() {
            return Err(Error::invalid("summary dimensions disagree"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("weights must be positive"));
        }
        if noise_var.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("noise variances must be nonnegative"));
        }
        if sums.iter().chain(labels.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("summaries must be finite"));
        }
        Ok(Self {
            sums,
            labels,
            weights,
            noise_var,
        })
    }

    pub fn bins(&self) -> usize {
        self.sums.nrows()
    }

    pub fn dim(&self) -> usize {
        self.sums.ncols()
    }

    /// Rows are the privatized feature sums `s̃_k`.
    pub fn feature_sums(&self) -> &DMatrix<f64> {
        &self.sums
    }

    pub fn label_sums(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// Row `k` is the diagonal of `D_k`.
    pub fn noise_variances(&self) -> &DMatrix<f64> {
        &self.noise_var
    }

    fn weighted_gram(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.dim(), self.dim());
        for k in 0..self.bins() {
            let s = self.sums.row(k);
            g += s.transpose() * s * self.weights[k];
        }
        g
    }

    fn weighted_cross(&self) -> DVector<f64> {
        let mut b = DVector::zeros(self.dim());
        for k in 0..self.bins() {
            b += self.sums.row(k).transpose() * (self.weights[k] * self.labels[k]);
        }
        b
    }

    /// Diagonal of `Σ_k w̃_k D_k`.
    fn weighted_noise(&self) -> DVector<f64> {
        let mut acc = DVector::zeros(self.dim());
        for k in 0..self.bins() {
            acc += self.noise_var.row(k).transpose() * self.weights[k];
        }
        acc
    }

    fn check_bins(&self) -> Result<()> {
        if self.bins() <= self.dim() {
            return Err(Error::InsufficientBins {
                bins: self.bins(),
                dim: self.dim(),
            });
        }
        Ok(())
    }
}

/// Adds Gaussian noise to every surviving bin's feature and label sums.
///
/// Draws are taken bin by bin: the `d` feature coordinates, then the label.
pub fn privatize(
    prepared: &PreparedBins,
    mu_s: GdpBudget,
    mu_t: GdpBudget,
    options: PrivatizeOptions,
    rng: &mut RandomSource,
) -> PrivatizedSummaries {
    let k = prepared.len();
    let d = prepared.dim();
    let mut sums = DMatrix::zeros(k, d);
    let mut labels = DVector::zeros(k);
    let mut weights = DVector::zeros(k);
    let mut noise_var = DMatrix::zeros(k, d);
    let label_sd = options.noise.sd(prepared.label_bound() / mu_t.value());
    for (row, bin) in prepared.bins().iter().enumerate() {
        let sds = feature_noise_sd(bin.sensitivity(), mu_s, options);
        for i in 0..d {
            sums[(row, i)] = bin.feature_sum()[i] + gaussian_noise(sds[i], rng);
            noise_var[(row, i)] = sds[i] * sds[i];
        }
        labels[row] = bin.label_sum() + gaussian_noise(label_sd, rng);
        weights[row] = 1.0 / bin.noisy_count() as f64;
    }
    PrivatizedSummaries {
        sums,
        labels,
        weights,
        noise_var,
    }
}

/// Per-coordinate noise standard deviation for a feature-sum release.
pub(crate) fn feature_noise_sd(
    sensitivity: &[f64],
    mu_s: GdpBudget,
    options: PrivatizeOptions,
) -> Vec<f64> {
    let mu = mu_s.value();
    match options.calibration {
        NoiseCalibration::PerCoordinate => sensitivity
            .iter()
            .map(|s| options.noise.sd(s / mu))
            .collect(),
        NoiseCalibration::StrictL2 => {
            let norm = sensitivity.iter().fold(0.0_f64, |a, s| a.hypot(*s));
            vec![options.noise.sd(norm / mu); sensitivity.len()]
        }
    }
}

/// Bias-corrected estimator with the estimating-equation scaling.
pub fn fit_debiased(priv_: &PrivatizedSummaries) -> Result<DVector<f64>> {
    fit_debiased_with(priv_, CorrectionScaling::Summed)
}

pub fn fit_debiased_with(
    priv_: &PrivatizedSummaries,
    scaling: CorrectionScaling,
) -> Result<DVector<f64>> {
    priv_.check_bins()?;
    let factor = match scaling {
        CorrectionScaling::Summed => 1.0,
        CorrectionScaling::Averaged => 1.0 / priv_.bins() as f64,
    };
    let mut gram = priv_.weighted_gram();
    gram.set_diagonal(&(gram.diagonal() - priv_.weighted_noise() * factor));
    linalg::solve(&gram, &priv_.weighted_cross())
}

/// Weighted least squares on the privatized summaries, ignoring the noise.
pub fn fit_naive(priv_: &PrivatizedSummaries) -> Result<DVector<f64>> {
    priv_.check_bins()?;
    linalg::solve(&priv_.weighted_gram(), &priv_.weighted_cross())
}

/// `Q̃_k(b) = s̃_k w̃_k (t̃_k - s̃_kᵀ b) + w̃_k D_k b` for every bin.
pub fn estimating_terms(priv_: &PrivatizedSummaries, beta: &DVector<f64>) -> Vec<DVector<f64>> {
    (0..priv_.bins())
        .map(|k| {
            let s = priv_.sums.row(k).transpose();
            let w = priv_.weights[k];
            let resid = priv_.labels[k] - s.dot(beta);
            let corr = priv_.noise_var.row(k).transpose().component_mul(beta) * w;
            s * (w * resid) + corr
        })
        .collect()
}

/// Sandwich covariance `M̃⁻¹ H̃ M̃⁻¹` of the debiased estimator, with
/// `M̃ = (1/K) S̃ᵀW̃S̃ - (1/K) Σ w̃_k D_k` and
/// `H̃ = Σ Q̃_k Q̃_kᵀ / (K (K - d))`.
pub fn covariance(priv_: &PrivatizedSummaries, beta: &DVector<f64>) -> Result<DMatrix<f64>> {
    priv_.check_bins()?;
    let k = priv_.bins() as f64;
    let d = priv_.dim();
    let mut m = priv_.weighted_gram() / k;
    m.set_diagonal(&(m.diagonal() - priv_.weighted_noise() / k));
    let mut h = DMatrix::zeros(d, d);
    for q in estimating_terms(priv_, beta) {
        h += &q * q.transpose();
    }
    h /= k * (k - d as f64);
    linalg::sandwich(&m, &h)
}

/// Plug-in covariance of the naive estimator, `σ² (S̃ᵀW̃S̃)⁻¹`.
///
/// Without a known `sigma2` the error variance is estimated from the weighted
/// residuals, `Σ w̃_k (t̃_k - s̃_kᵀβ)² / (K - d)`.
pub fn naive_covariance(
    priv_: &PrivatizedSummaries,
    beta: &DVector<f64>,
    sigma2: Option<f64>,
) -> Result<DMatrix<f64>> {
    priv_.check_bins()?;
    let sigma2 = match sigma2 {
        Some(s) => s,
        None => {
            let resid = priv_.labels.clone() - &priv_.sums * beta;
            resid
                .iter()
                .zip(priv_.weights.iter())
                .map(|(r, w)| w * r * r)
                .sum::<f64>()
                / (priv_.bins() - priv_.dim()) as f64
        }
    };
    let gram = priv_.weighted_gram();
    let inv = linalg::solve_matrix(&gram, &DMatrix::identity(priv_.dim(), priv_.dim()))?;
    Ok((&inv + inv.transpose()) * (0.5 * sigma2))
}

/// Two-sided `(1 - alpha)` quantile `z_{α/2}`.
pub fn critical_value(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    std_normal_quantile(1.0 - alpha / 2.0)
}

/// `β_j ± z_{α/2} sqrt(Σ_jj)` for each coordinate.
pub fn confidence_intervals(
    beta: &DVector<f64>,
    cov: &DMatrix<f64>,
    alpha: f64,
) -> Result<Vec<(f64, f64)>> {
    let z = critical_value(alpha)?;
    Ok(beta
        .iter()
        .enumerate()
        .map(|(j, b)| {
            let half = z * cov[(j, j)].max(0.0).sqrt();
            (b - half, b + half)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub alpha: f64,
    pub scaling: CorrectionScaling,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            scaling: CorrectionScaling::Summed,
        }
    }
}

/// Debiased coefficients, their sandwich covariance and confidence intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivateFit {
    pub beta: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub alpha: f64,
    pub intervals: Vec<(f64, f64)>,
    pub bins: usize,
}

impl PrivateFit {
    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|j| self.covariance[(j, j)].max(0.0).sqrt())
            .collect()
    }
}

pub fn fit(priv_: &PrivatizedSummaries, options: FitOptions) -> Result<PrivateFit> {
    let beta = fit_debiased_with(priv_, options.scaling)?;
    let covariance = covariance(priv_, &beta)?;
    let intervals = confidence_intervals(&beta, &covariance, options.alpha)?;
    Ok(PrivateFit {
        beta,
        covariance,
        alpha: options.alpha,
        intervals,
        bins: priv_.bins(),
    })
}

/// Exact weighted least squares `(SᵀWS)⁻¹ SᵀWt`.
pub fn wls_exact(s: &DMatrix<f64>, w: &DVector<f64>, t: &DVector<f64>) -> Result<DVector<f64>> {
    if s.nrows() != w.len() || s.nrows() != t.len() {
        return Err(Error::invalid("WLS inputs disagree on the number of rows"));
    }
    if w.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("WLS weights must be positive"));
    }
    let mut a = s.clone();
    let mut b = t.clone();
    for (k, wk) in w.iter().enumerate() {
        let r = wk.sqrt();
        a.row_mut(k).scale_mut(r);
        b[k] *= r;
    }
    linalg::least_squares(&a, &b)
}

/// Ordinary least squares.
pub fn ols_exact(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::invalid("OLS inputs disagree on the number of rows"));
    }
    linalg::least_squares(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summaries(s: &[f64], d: usize, t: &[f64], w: &[f64], dv: &[f64]) -> PrivatizedSummaries {
        let k = t.len();
        PrivatizedSummaries::from_parts(
            DMatrix::from_row_slice(k, d, s),
            DVector::from_row_slice(t),
            DVector::from_row_slice(w),
            DMatrix::from_row_slice(k, d, dv),
        )
        .unwrap()
    }

    #[test]
    fn scalar_wls() {
        let s = DMatrix::from_row_slice(1, 1, &[2.0]);
        let beta = wls_exact(&s, &DVector::from_vec(vec![0.25]), &DVector::from_vec(vec![6.0]))
            .unwrap();
        assert!((beta[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn insufficient_bins() {
        let p = summaries(&[2.0], 1, &[6.0], &[0.25], &[0.0]);
        assert_eq!(
            fit_debiased(&p).unwrap_err(),
            Error::InsufficientBins { bins: 1, dim: 1 }
        );
        assert!(covariance(&p, &DVector::from_vec(vec![3.0])).is_err());
    }

    #[test]
    fn zero_noise_collapse() {
        let p = summaries(
            &[2.0, 1.0, 1.0, 3.0, 4.0, 0.5],
            2,
            &[4.0, 7.0, 9.1],
            &[0.5, 0.25, 0.2],
            &[0.0; 6],
        );
        let a = fit_debiased(&p).unwrap();
        let b = fit_naive(&p).unwrap();
        let c = wls_exact(p.feature_sums(), p.weights(), p.label_sums()).unwrap();
        assert!((&a - &b).amax() < 1e-12);
        assert!((&a - &c).amax() < 1e-10);
    }

    #[test]
    fn correction_changes_estimate() {
        let p = summaries(
            &[2.0, 1.0, 1.0, 3.0, 4.0, 0.5],
            2,
            &[4.0, 7.0, 9.1],
            &[0.5, 0.25, 0.2],
            &[0.1, 0.2, 0.1, 0.1, 0.3, 0.0],
        );
        assert_ne!(fit_debiased(&p).unwrap(), fit_naive(&p).unwrap());
        assert_ne!(
            fit_debiased(&p).unwrap(),
            fit_debiased_with(&p, CorrectionScaling::Averaged).unwrap()
        );
    }

    #[test]
    fn estimating_equation_root() {
        let p = summaries(
            &[2.0, 1.0, 1.0, 3.0, 4.0, 0.5, 3.0, 3.0],
            2,
            &[4.0, 7.0, 9.1, 8.0],
            &[0.5, 0.25, 0.2, 0.3],
            &[0.1, 0.2, 0.1, 0.1, 0.3, 0.0, 0.2, 0.2],
        );
        let beta = fit_debiased(&p).unwrap();
        let total = estimating_terms(&p, &beta)
            .into_iter()
            .fold(DVector::zeros(2), |acc, q| acc + q);
        assert!(total.amax() < 1e-10);
    }

    #[test]
    fn noise_covariance_entries() {
        use crate::aggregation::BinSummary;
        use crate::region::Region;
        let region = Region::new(vec![-3.0], vec![1.0]).unwrap();
        let bin = BinSummary::new(region, 3, 3, vec![0.0], 1.0).unwrap();
        let prepared = PreparedBins::new(vec![bin], 2.0).unwrap();
        let mu = GdpBudget::new(0.5).unwrap();
        let p = privatize(&prepared, mu, mu, Default::default(), &mut RandomSource::new(0, 0));
        assert_eq!(p.noise_variances()[(0, 0)], 36.0);
        assert_eq!(p.weights()[0], 1.0 / 3.0);

        let quiet = PrivatizeOptions {
            noise: NoiseMode::Disabled,
            ..Default::default()
        };
        let p = privatize(&prepared, mu, mu, quiet, &mut RandomSource::new(0, 0));
        assert_eq!(p.feature_sums()[(0, 0)], 0.0);
        assert_eq!(p.label_sums()[0], 1.0);
        assert_eq!(p.noise_variances()[(0, 0)], 0.0);
    }

    #[test]
    fn strict_l2_sd() {
        let mu = GdpBudget::new(1.0).unwrap();
        let per = feature_noise_sd(&[1.0, 2.0], mu, PrivatizeOptions::default());
        assert_eq!(per, vec![1.0, 2.0]);
        let strict = PrivatizeOptions {
            calibration: NoiseCalibration::StrictL2,
            ..Default::default()
        };
        let l2 = feature_noise_sd(&[3.0, 4.0], mu, strict);
        assert_eq!(l2, vec![5.0, 5.0]);
    }

    #[test]
    fn critical_value_95() {
        assert!((critical_value(0.05).unwrap() - 1.959_963_984_540_054).abs() < 1e-9);
        assert!(critical_value(0.0).is_err());
        assert!(critical_value(1.0).is_err());
    }

    #[test]
    fn intervals_centered() {
        let beta = DVector::from_vec(vec![1.0, -2.0]);
        let cov = DMatrix::from_row_slice(2, 2, &[4.0, 0.1, 0.1, 0.25]);
        let ci = confidence_intervals(&beta, &cov, 0.05).unwrap();
        let z = critical_value(0.05).unwrap();
        assert!((ci[0].0 - (1.0 - 2.0 * z)).abs() < 1e-12);
        assert!((ci[1].1 - (-2.0 + 0.5 * z)).abs() < 1e-12);
    }

    #[test]
    fn identity_design_ols() {
        let x = DMatrix::identity(3, 3);
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        assert!((ols_exact(&x, &y).unwrap() - &y).amax() < 1e-14);
        let rank_deficient = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(ols_exact(&rank_deficient, &y).is_err());
    }
}
