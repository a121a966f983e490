use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned hyperrectangle `Π [lower_i, upper_i)`.
///
/// Regions produced by splitting a domain are half-open; a face that lies on
/// the domain's upper boundary is treated as closed so that every point of the
/// (closed) domain belongs to exactly one leaf. See [`Region::contains_in`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Region {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::invalid("region must have at least one dimension"));
        }
        if lower.len() != upper.len() {
            return Err(Error::invalid(format!(
                "lower has {} coordinates but upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(Error::invalid(format!("bound {i} is not finite")));
            }
            if lo >= hi {
                return Err(Error::invalid(format!(
                    "degenerate bound {i}: lower {lo} >= upper {hi}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Builds a region from `(lower, upper)` pairs.
    pub fn from_bounds(bounds: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            bounds.iter().map(|b| b.0).collect(),
            bounds.iter().map(|b| b.1).collect(),
        )
    }

    /// The unit cube `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).product()
    }

    /// Index of the widest side; ties go to the lowest index.
    pub fn widest_dimension(&self) -> usize {
        let mut best = 0;
        for i in 1..self.dim() {
            if self.width(i) > self.width(best) {
                best = i;
            }
        }
        best
    }

    /// Midpoint split along `dim`, lower half first.
    ///
    /// Returns `None` once the midpoint is no longer strictly between the
    /// bounds in floating point.
    pub fn bisect(&self, dim: usize) -> Option<(Region, Region)> {
        let mid = self.lower[dim] + 0.5 * self.width(dim);
        if !(mid > self.lower[dim] && mid < self.upper[dim]) {
            return None;
        }
        let mut left = self.clone();
        let mut right = self.clone();
        left.upper[dim] = mid;
        right.lower[dim] = mid;
        Some((left, right))
    }

    /// Closed-box membership `lower <= x <= upper`.
    pub fn contains_closed(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| lo <= x && x <= hi)
    }

    /// Half-open membership relative to an enclosing domain: `lower <= x < upper`
    /// per coordinate, except that `x == upper` is accepted on faces shared
    /// with the domain's upper boundary.
    pub fn contains_in(&self, point: &[f64], domain_upper: &[f64]) -> bool {
        point.len() == self.dim()
            && (0..self.dim()).all(|i| {
                let x = point[i];
                self.lower[i] <= x
                    && (x < self.upper[i] || (x == self.upper[i] && x == domain_upper[i]))
            })
    }

    /// Coordinate-wise upper bounds of a set of regions, i.e. the upper corner
    /// of their bounding box.
    pub fn joint_upper(regions: &[Region]) -> Option<Vec<f64>> {
        let first = regions.first()?;
        let mut up = first.upper.clone();
        for r in &regions[1..] {
            for (u, v) in up.iter_mut().zip(&r.upper) {
                *u = u.max(*v);
            }
        }
        Some(up)
    }
}
