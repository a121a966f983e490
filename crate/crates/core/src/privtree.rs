//! Private recursive partitioning of the feature domain.
//!
//! Every visited node gets a depth-penalised count
//! `b = max(count - depth * decay, theta - decay)` and is split in two along
//! its widest side when `b + Laplace(scale) > theta`. Only the leaf regions
//! are released. With branching factor two the procedure is ε-DP for
//! `scale >= 3 / ε` and `decay = scale * ln 2`.
//!
//! Nodes are visited breadth first and children are queued lower half first,
//! so a given `RandomSource` always yields the same tree.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gdp::{gdp_to_pure_dp, sample_laplace, GdpBudget, RandomSource};
use crate::region::Region;

pub const DEFAULT_MAX_DEPTH: usize = 40;
pub const DEFAULT_THETA: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivTreeConfig {
    theta: f64,
    lambda: f64,
    delta_decay: f64,
    max_depth: usize,
}

impl PrivTreeConfig {
    pub fn new(theta: f64, lambda: f64, delta_decay: f64, max_depth: usize) -> Result<Self> {
        if theta.is_nan() {
            return Err(Error::invalid("theta must not be NaN"));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::invalid(format!("Laplace scale must be positive, got {lambda}")));
        }
        if !(delta_decay.is_finite() && delta_decay > 0.0) {
            return Err(Error::invalid(format!(
                "depth decay must be positive, got {delta_decay}"
            )));
        }
        if max_depth == 0 {
            return Err(Error::invalid("max_depth must be at least 1"));
        }
        Ok(Self {
            theta,
            lambda,
            delta_decay,
            max_depth,
        })
    }

    /// Binary-split calibration for pure ε-DP: `lambda = 3/ε`,
    /// `delta_decay = lambda ln 2`.
    pub fn for_epsilon(epsilon: f64, theta: f64, max_depth: usize) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        let lambda = 3.0 / epsilon;
        Self::new(theta, lambda, lambda * std::f64::consts::LN_2, max_depth)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn delta_decay(&self) -> f64 {
        self.delta_decay
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }
}

/// Calibrates the tree for a `mu_bin`-GDP release, converting through the
/// pure-DP epsilon `ε = ln(Φ(μ/2) / Φ(-μ/2))`.
pub fn calibrate(mu_bin: GdpBudget, theta: f64, max_depth: usize) -> Result<PrivTreeConfig> {
    PrivTreeConfig::for_epsilon(gdp_to_pure_dp(mu_bin), theta, max_depth)
}

/// A visited node. Only exposed through [`debug`]; the private entry point
/// [`build`] returns regions without counts.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub region: Region,
    pub depth: usize,
    pub count: usize,
    pub split: bool,
}

/// Builds the partition and returns its leaf regions in visiting order.
///
/// Every row of `data` must lie in the closed `domain`.
pub fn build(
    data: &DMatrix<f64>,
    domain: &Region,
    config: &PrivTreeConfig,
    rng: &mut RandomSource,
) -> Result<Vec<Region>> {
    let lambda = config.lambda;
    let nodes = grow(data, domain, config, || {
        sample_laplace(lambda, rng).expect("scale validated by PrivTreeConfig")
    })?;
    Ok(leaves(nodes))
}

fn leaves(nodes: Vec<TreeNode>) -> Vec<Region> {
    nodes
        .into_iter()
        .filter(|n| !n.split)
        .map(|n| n.region)
        .collect()
}

fn grow(
    data: &DMatrix<f64>,
    domain: &Region,
    config: &PrivTreeConfig,
    mut noise: impl FnMut() -> f64,
) -> Result<Vec<TreeNode>> {
    let d = domain.dim();
    if data.ncols() != d && data.nrows() > 0 {
        return Err(Error::invalid(format!(
            "data has {} columns but the domain has {d} dimensions",
            data.ncols()
        )));
    }
    let mut point = vec![0.0; d];
    for j in 0..data.nrows() {
        for (i, p) in point.iter_mut().enumerate() {
            *p = data[(j, i)];
        }
        if !domain.contains_closed(&point) {
            return Err(Error::invalid(format!("row {j} lies outside the domain")));
        }
    }

    let mut visited = Vec::new();
    let mut queue = VecDeque::new();
    queue.push_back((domain.clone(), 0usize, (0..data.nrows()).collect::<Vec<_>>()));

    while let Some((region, depth, members)) = queue.pop_front() {
        let count = members.len();
        let biased = (count as f64 - depth as f64 * config.delta_decay)
            .max(config.theta - config.delta_decay);
        let noisy = biased + noise();
        let mut split = false;
        if noisy > config.theta && depth < config.max_depth {
            let dim = region.widest_dimension();
            if let Some((lo, hi)) = region.bisect(dim) {
                let mid = lo.upper()[dim];
                let (left, right): (Vec<usize>, Vec<usize>) =
                    members.iter().partition(|&&j| data[(j, dim)] < mid);
                queue.push_back((lo, depth + 1, left));
                queue.push_back((hi, depth + 1, right));
                split = true;
            }
        }
        visited.push(TreeNode {
            region,
            depth,
            count,
            split,
        });
    }
    Ok(visited)
}

/// Non-private views of the tree for testing and diagnostics. Nothing here
/// carries a privacy guarantee.
pub mod debug {
    use super::*;

    /// Every visited node, with true counts, using zero Laplace noise.
    pub fn grow_noiseless(
        data: &DMatrix<f64>,
        domain: &Region,
        config: &PrivTreeConfig,
    ) -> Result<Vec<TreeNode>> {
        grow(data, domain, config, || 0.0)
    }

    /// Every visited node, with true counts, under the same noise sequence
    /// that [`build`](super::build) would draw from `rng`.
    pub fn grow_with_counts(
        data: &DMatrix<f64>,
        domain: &Region,
        config: &PrivTreeConfig,
        rng: &mut RandomSource,
    ) -> Result<Vec<TreeNode>> {
        let lambda = config.lambda;
        grow(data, domain, config, || sample_laplace(lambda, rng).unwrap())
    }

    /// Leaves of the noiseless tree.
    pub fn build_noiseless(
        data: &DMatrix<f64>,
        domain: &Region,
        config: &PrivTreeConfig,
    ) -> Result<Vec<Region>> {
        Ok(leaves(grow_noiseless(data, domain, config)?))
    }
}
