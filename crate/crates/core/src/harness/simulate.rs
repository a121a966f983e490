use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gdp::RandomSource;
use crate::region::Region;

/// Linear-model simulation: features uniform on `[0, 1]^d`, coefficients
/// uniform on `[1, 2]^d`, Gaussian errors with standard deviation `sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub n: usize,
    pub d: usize,
    pub sigma: f64,
    /// Label interval used for clipping and for the label bound. `None`
    /// picks [`default_label_bounds`].
    pub label_bounds: Option<(f64, f64)>,
    pub clip_labels: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            d: 5,
            sigma: 1.0,
            label_bounds: None,
            clip_labels: true,
        }
    }
}

/// `(0, 2)`, `(0, 7)` and `(0, 15)` for `d = 1, 5, 10`; `(0, 1.5 d)` otherwise.
pub fn default_label_bounds(d: usize) -> (f64, f64) {
    match d {
        1 => (0.0, 2.0),
        5 => (0.0, 7.0),
        10 => (0.0, 15.0),
        _ => (0.0, 1.5 * d as f64),
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n <= self.d {
            return Err(Error::invalid(format!(
                "need n > d >= 1, got n = {}, d = {}",
                self.n, self.d
            )));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::invalid("sigma must be nonnegative"));
        }
        let (lo, hi) = self.label_interval();
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid("invalid label bounds"));
        }
        Ok(())
    }

    pub fn label_interval(&self) -> (f64, f64) {
        self.label_bounds.unwrap_or_else(|| default_label_bounds(self.d))
    }

    pub fn domain(&self) -> Result<Region> {
        Region::unit(self.d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub beta: DVector<f64>,
    /// Labels before clipping.
    pub y_raw: DVector<f64>,
    /// Labels moved by clipping.
    pub clipped: usize,
}

/// Draws `β`, then `X`, then the errors, and clips `y` when configured.
pub fn simulate_dataset(cfg: &SimulationConfig, rng: &mut RandomSource) -> Result<SimulatedData> {
    cfg.validate()?;
    let beta = DVector::from_fn(cfg.d, |_, _| rng.uniform(1.0, 2.0));
    let x = DMatrix::from_fn(cfg.n, cfg.d, |_, _| rng.uniform(0.0, 1.0));
    let mut y = &x * &beta;
    if cfg.sigma > 0.0 {
        for v in y.iter_mut() {
            *v += cfg.sigma * rng.standard_normal();
        }
    }
    let y_raw = y.clone();
    let mut clipped = 0;
    if cfg.clip_labels {
        let (lo, hi) = cfg.label_interval();
        for v in y.iter_mut() {
            let c = v.clamp(lo, hi);
            if c != *v {
                clipped += 1;
                *v = c;
            }
        }
    }
    Ok(SimulatedData {
        x,
        y,
        beta,
        y_raw,
        clipped,
    })
}
