//! End-to-end runs: binning, aggregation and either the regression or the
//! synthesis route, all drawing from one `RandomSource` in stage order.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::aggregation::{self, NoiseMode, PrepareOptions, PreparedBins, DEFAULT_MIN_COUNT};
use crate::error::Result;
use crate::gdp::{allocate, BudgetAllocation, GdpBudget, RandomSource};
use crate::privtree::{self, DEFAULT_MAX_DEPTH, DEFAULT_THETA};
use crate::region::Region;
use crate::regression::{
    self, CorrectionScaling, FitOptions, NoiseCalibration, PrivateFit, PrivatizeOptions,
};
use crate::synthesis::{self, SyntheticDataset};

pub const DEFAULT_RATIOS: [f64; 4] = [1.0, 3.0, 3.0, 3.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub total_mu: f64,
    /// `(bin, count, feature-sum, label-sum)`.
    pub ratios: [f64; 4],
    pub theta: f64,
    pub max_depth: usize,
    pub min_count: i64,
    pub alpha: f64,
    pub calibration: NoiseCalibration,
    pub scaling: CorrectionScaling,
    pub intercept: bool,
    /// `Disabled` turns off every mechanism, including the tree's Laplace
    /// noise. Debugging only.
    pub noise: NoiseMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            total_mu: 1.0,
            ratios: DEFAULT_RATIOS,
            theta: DEFAULT_THETA,
            max_depth: DEFAULT_MAX_DEPTH,
            min_count: DEFAULT_MIN_COUNT,
            alpha: 0.05,
            calibration: NoiseCalibration::PerCoordinate,
            scaling: CorrectionScaling::Summed,
            intercept: false,
            noise: NoiseMode::Calibrated,
        }
    }
}

impl PipelineConfig {
    pub fn budgets(&self) -> Result<BudgetAllocation> {
        allocate(GdpBudget::new(self.total_mu)?, self.ratios)
    }

    fn privatize_options(&self) -> PrivatizeOptions {
        PrivatizeOptions {
            calibration: self.calibration,
            noise: self.noise,
        }
    }
}

/// Bins the data privately and aggregates it.
pub fn prepare_bins(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    domain: &Region,
    label_bound: f64,
    config: &PipelineConfig,
    rng: &mut RandomSource,
) -> Result<(PreparedBins, BudgetAllocation)> {
    let budgets = config.budgets()?;
    let tree = privtree::calibrate(budgets.mu_bin, config.theta, config.max_depth)?;
    let bins = match config.noise {
        NoiseMode::Calibrated => privtree::build(x, domain, &tree, rng)?,
        NoiseMode::Disabled => privtree::debug::build_noiseless(x, domain, &tree)?,
    };
    let options = PrepareOptions {
        min_count: config.min_count,
        noise: config.noise,
    };
    let mut prepared =
        aggregation::prepare(x, y, &bins, budgets.mu_c, label_bound, options, rng)?;
    if config.intercept {
        prepared = prepared.with_intercept();
    }
    Ok((prepared, budgets))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionOutcome {
    pub fit: PrivateFit,
    pub naive_beta: DVector<f64>,
    pub naive_covariance: DMatrix<f64>,
    pub budgets: BudgetAllocation,
    pub discarded: usize,
}

/// Runs the regression route.
///
/// `naive_sigma2` fixes the error variance used by the naive plug-in
/// covariance; `None` estimates it from weighted residuals.
pub fn run_regression(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    domain: &Region,
    label_bound: f64,
    config: &PipelineConfig,
    naive_sigma2: Option<f64>,
    rng: &mut RandomSource,
) -> Result<RegressionOutcome> {
    let (prepared, budgets) = prepare_bins(x, y, domain, label_bound, config, rng)?;
    let summaries = regression::privatize(
        &prepared,
        budgets.mu_s,
        budgets.mu_t,
        config.privatize_options(),
        rng,
    );
    let fit = regression::fit(
        &summaries,
        FitOptions {
            alpha: config.alpha,
            scaling: config.scaling,
        },
    )?;
    let naive_beta = regression::fit_naive(&summaries)?;
    let naive_covariance = regression::naive_covariance(&summaries, &naive_beta, naive_sigma2)?;
    Ok(RegressionOutcome {
        fit,
        naive_beta,
        naive_covariance,
        budgets,
        discarded: prepared.discarded(),
    })
}

/// Runs the synthesis route.
pub fn run_synthesis(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    domain: &Region,
    label_bound: f64,
    config: &PipelineConfig,
    rng: &mut RandomSource,
) -> Result<(SyntheticDataset, BudgetAllocation)> {
    let (prepared, budgets) = prepare_bins(x, y, domain, label_bound, config, rng)?;
    let ds = synthesis::generate(
        &prepared,
        budgets.mu_s,
        budgets.mu_t,
        config.privatize_options(),
        rng,
    );
    Ok((ds, budgets))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_pipeline_is_exact_wls() {
        let mut rng = RandomSource::new(1, 0);
        let n = 400;
        let x = DMatrix::from_fn(n, 2, |_, _| rng.uniform(0.0, 1.0));
        let y = DVector::from_fn(n, |j, _| 1.5 * x[(j, 0)] + 0.5 * x[(j, 1)]);
        let cfg = PipelineConfig {
            noise: NoiseMode::Disabled,
            theta: -20.0,
            ..Default::default()
        };
        let domain = Region::unit(2).unwrap();
        let out = run_regression(&x, &y, &domain, 2.0, &cfg, None, &mut rng).unwrap();
        // noise-free data with an exact linear law is recovered exactly
        assert!((out.fit.beta[0] - 1.5).abs() < 1e-9);
        assert!((out.fit.beta[1] - 0.5).abs() < 1e-9);
        assert!((&out.fit.beta - &out.naive_beta).amax() < 1e-10);
    }
}
