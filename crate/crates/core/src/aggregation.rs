//! Per-bin counting and aggregation.
//!
//! Counts are released through the Gaussian mechanism with sensitivity one
//! and rounded half away from zero; bins whose noisy count falls below the
//! threshold (two by default) are dropped. Feature and label sums of the
//! surviving bins are kept exact here and privatized later by either the
//! regression or the synthesis route.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gdp::{gaussian_noise, GdpBudget, RandomSource};
use crate::region::Region;

pub const DEFAULT_MIN_COUNT: i64 = 2;

/// Whether the Gaussian mechanisms actually add noise.
///
/// `Disabled` exists for oracle comparisons and the CLI's debug path; output
/// produced with it is not differentially private.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    #[default]
    Calibrated,
    Disabled,
}

impl NoiseMode {
    pub(crate) fn sd(self, sd: f64) -> f64 {
        match self {
            NoiseMode::Calibrated => sd,
            NoiseMode::Disabled => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrepareOptions {
    /// Bins with a noisy count below this are discarded. At least 2.
    pub min_count: i64,
    pub noise: NoiseMode,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self {
            min_count: DEFAULT_MIN_COUNT,
            noise: NoiseMode::Calibrated,
        }
    }
}

/// Aggregates of one surviving bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BinSummary {
    region: Region,
    true_count: usize,
    noisy_count: i64,
    sum_x: Vec<f64>,
    sum_y: f64,
    sensitivity: Vec<f64>,
}

impl BinSummary {
    /// Assembles a summary from already computed aggregates. The sensitivity
    /// vector is derived from `region`.
    pub fn new(
        region: Region,
        true_count: usize,
        noisy_count: i64,
        sum_x: Vec<f64>,
        sum_y: f64,
    ) -> Result<Self> {
        if noisy_count < DEFAULT_MIN_COUNT {
            return Err(Error::invalid(format!(
                "noisy count must be at least {DEFAULT_MIN_COUNT}, got {noisy_count}"
            )));
        }
        if sum_x.len() != region.dim() {
            return Err(Error::invalid(format!(
                "feature sum has {} coordinates, region has {}",
                sum_x.len(),
                region.dim()
            )));
        }
        let c = true_count as f64;
        for (i, s) in sum_x.iter().enumerate() {
            let lo = c * region.lower()[i];
            let hi = c * region.upper()[i];
            let slack = 1e-9 * (lo.abs() + hi.abs() + 1.0);
            if !(s.is_finite() && *s >= lo - slack && *s <= hi + slack) {
                return Err(Error::invalid(format!(
                    "feature sum {s} in coordinate {i} is outside [{lo}, {hi}]"
                )));
            }
        }
        if !sum_y.is_finite() {
            return Err(Error::invalid("label sum must be finite"));
        }
        let sensitivity = sensitivity_vector(&region);
        Ok(Self {
            region,
            true_count,
            noisy_count,
            sum_x,
            sum_y,
            sensitivity,
        })
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    /// Privatized count `c̃_k`.
    pub fn noisy_count(&self) -> i64 {
        self.noisy_count
    }

    /// Per-coordinate sensitivity of the feature sum.
    pub fn sensitivity(&self) -> &[f64] {
        &self.sensitivity
    }

    /// Exact number of records in the bin. Not private.
    pub fn true_count(&self) -> usize {
        self.true_count
    }

    /// Exact feature sum `s_k`. Not private.
    pub fn feature_sum(&self) -> &[f64] {
        &self.sum_x
    }

    /// Exact label sum `t_k`. Not private.
    pub fn label_sum(&self) -> f64 {
        self.sum_y
    }

    pub fn dim(&self) -> usize {
        self.sum_x.len()
    }
}

/// Output of [`prepare`]: surviving bins plus the label bound used to
/// calibrate label-sum noise.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedBins {
    bins: Vec<BinSummary>,
    dim: usize,
    label_bound: f64,
    discarded: usize,
}

impl PreparedBins {
    pub fn new(bins: Vec<BinSummary>, label_bound: f64) -> Result<Self> {
        let first = bins.first().ok_or(Error::EmptyResult)?;
        let dim = first.dim();
        if bins.iter().any(|b| b.dim() != dim) {
            return Err(Error::invalid("bins disagree on dimension"));
        }
        if !(label_bound.is_finite() && label_bound > 0.0) {
            return Err(Error::invalid(format!(
                "label bound must be positive, got {label_bound}"
            )));
        }
        Ok(Self {
            bins,
            dim,
            label_bound,
            discarded: 0,
        })
    }

    pub fn bins(&self) -> &[BinSummary] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label_bound(&self) -> f64 {
        self.label_bound
    }

    /// Number of bins dropped by the noisy-count threshold.
    pub fn discarded(&self) -> usize {
        self.discarded
    }

    /// Appends a constant feature equal to one to every record: its per-bin
    /// sum is the bin's record count and its sensitivity is one.
    pub fn with_intercept(mut self) -> Self {
        for b in &mut self.bins {
            b.sum_x.push(b.true_count as f64);
            b.sensitivity.push(1.0);
        }
        self.dim += 1;
        self
    }
}

/// `Δ_i = max(|lower_i|, |upper_i|)`.
pub fn sensitivity_vector(region: &Region) -> Vec<f64> {
    region
        .lower()
        .iter()
        .zip(region.upper())
        .map(|(lo, hi)| lo.abs().max(hi.abs()))
        .collect()
}

/// Label bound `B_y = max(|lower|, |upper|)` of a label interval.
pub fn label_bound(lower: f64, upper: f64) -> Result<f64> {
    if !(lower.is_finite() && upper.is_finite() && lower < upper) {
        return Err(Error::invalid(format!(
            "invalid label interval ({lower}, {upper})"
        )));
    }
    Ok(lower.abs().max(upper.abs()))
}

/// Index of the bin containing each row of `x`. Bins must tile their joint
/// bounding box under the half-open convention.
pub fn assign_bins(x: &DMatrix<f64>, bins: &[Region]) -> Result<Vec<usize>> {
    let upper = Region::joint_upper(bins).ok_or_else(|| Error::invalid("no bins"))?;
    let d = upper.len();
    if x.nrows() > 0 && x.ncols() != d {
        return Err(Error::invalid(format!(
            "data has {} columns but bins have {d}",
            x.ncols()
        )));
    }
    let mut point = vec![0.0; d];
    (0..x.nrows())
        .map(|j| {
            for (i, p) in point.iter_mut().enumerate() {
                *p = x[(j, i)];
            }
            bins.iter()
                .position(|b| b.contains_in(&point, &upper))
                .ok_or_else(|| Error::invalid(format!("row {j} is not inside any bin")))
        })
        .collect()
}

/// Counts, privatizes counts, discards sparse bins and aggregates the rest.
///
/// Every `|y_j|` must be at most `label_bound`; clip before calling.
pub fn prepare(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    bins: &[Region],
    mu_c: GdpBudget,
    label_bound: f64,
    options: PrepareOptions,
    rng: &mut RandomSource,
) -> Result<PreparedBins> {
    if x.nrows() != y.len() {
        return Err(Error::invalid(format!(
            "{} feature rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    if options.min_count < DEFAULT_MIN_COUNT {
        return Err(Error::invalid(format!(
            "min_count must be at least {DEFAULT_MIN_COUNT}"
        )));
    }
    if !(label_bound.is_finite() && label_bound > 0.0) {
        return Err(Error::invalid(format!(
            "label bound must be positive, got {label_bound}"
        )));
    }
    if let Some(j) = y.iter().position(|v| !(v.abs() <= label_bound)) {
        return Err(Error::invalid(format!(
            "label {} at row {j} exceeds the label bound {label_bound}",
            y[j]
        )));
    }
    let assignment = assign_bins(x, bins)?;
    let d = bins[0].dim();

    let mut counts = vec![0usize; bins.len()];
    let mut sum_x = vec![vec![0.0; d]; bins.len()];
    let mut sum_y = vec![0.0; bins.len()];
    for (j, &k) in assignment.iter().enumerate() {
        counts[k] += 1;
        for (i, s) in sum_x[k].iter_mut().enumerate() {
            *s += x[(j, i)];
        }
        sum_y[k] += y[j];
    }

    let sd = options.noise.sd(1.0 / mu_c.value());
    let mut survivors = Vec::new();
    let mut discarded = 0;
    for (k, region) in bins.iter().enumerate() {
        let noisy = (counts[k] as f64 + gaussian_noise(sd, rng)).round();
        if noisy < options.min_count as f64 {
            discarded += 1;
            continue;
        }
        survivors.push(BinSummary {
            sensitivity: sensitivity_vector(region),
            region: region.clone(),
            true_count: counts[k],
            noisy_count: noisy as i64,
            sum_x: std::mem::take(&mut sum_x[k]),
            sum_y: sum_y[k],
        });
    }
    if survivors.is_empty() {
        return Err(Error::EmptyResult);
    }
    Ok(PreparedBins {
        bins: survivors,
        dim: d,
        label_bound,
        discarded,
    })
}
