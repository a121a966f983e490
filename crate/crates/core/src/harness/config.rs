//! Flat TOML configuration files. Every key is optional; command-line flags
//! take precedence over the file.
//!
//! ```toml
//! total_mu = 1.0
//! ratios = [1, 3, 3, 3]
//! theta = 0.0
//! max_depth = 40
//! min_count = 2
//! bounds = [[0, 1], [0, 1]]
//! label_bounds = [0, 7]
//! seed = 42
//! reps = 2000
//! alpha = 0.05
//! strict_l2_mode = false
//! algorithm2_literal_debias = false
//! intercept = false
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::pipeline::PipelineConfig;
use crate::regression::{CorrectionScaling, NoiseCalibration};

/// Environment variable holding the default seed.
pub const SEED_ENV: &str = "BINAGG_SEED";

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub total_mu: Option<f64>,
    pub ratios: Option<[f64; 4]>,
    pub theta: Option<f64>,
    pub max_depth: Option<usize>,
    pub min_count: Option<i64>,
    pub bounds: Option<Vec<(f64, f64)>>,
    pub label_bounds: Option<(f64, f64)>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub alpha: Option<f64>,
    pub strict_l2_mode: Option<bool>,
    pub algorithm2_literal_debias: Option<bool>,
    pub intercept: Option<bool>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Keys present in `other` replace those in `self`.
    pub fn overlay(self, other: FileConfig) -> FileConfig {
        FileConfig {
            total_mu: other.total_mu.or(self.total_mu),
            ratios: other.ratios.or(self.ratios),
            theta: other.theta.or(self.theta),
            max_depth: other.max_depth.or(self.max_depth),
            min_count: other.min_count.or(self.min_count),
            bounds: other.bounds.or(self.bounds),
            label_bounds: other.label_bounds.or(self.label_bounds),
            seed: other.seed.or(self.seed),
            reps: other.reps.or(self.reps),
            alpha: other.alpha.or(self.alpha),
            strict_l2_mode: other.strict_l2_mode.or(self.strict_l2_mode),
            algorithm2_literal_debias: other
                .algorithm2_literal_debias
                .or(self.algorithm2_literal_debias),
            intercept: other.intercept.or(self.intercept),
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        let mut p = PipelineConfig::default();
        if let Some(v) = self.total_mu {
            p.total_mu = v;
        }
        if let Some(v) = self.ratios {
            p.ratios = v;
        }
        if let Some(v) = self.theta {
            p.theta = v;
        }
        if let Some(v) = self.max_depth {
            p.max_depth = v;
        }
        if let Some(v) = self.min_count {
            p.min_count = v;
        }
        if let Some(v) = self.alpha {
            p.alpha = v;
        }
        if self.strict_l2_mode == Some(true) {
            p.calibration = NoiseCalibration::StrictL2;
        }
        if self.algorithm2_literal_debias == Some(true) {
            p.scaling = CorrectionScaling::Averaged;
        }
        if let Some(v) = self.intercept {
            p.intercept = v;
        }
        p
    }

    /// File seed, else the environment variable, else 0.
    pub fn seed_or_env(&self) -> Result<u64> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("{SEED_ENV} is not an unsigned integer: {v}"))),
            Err(_) => Ok(0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_schema() {
        let c = FileConfig::parse(
            "total_mu = 2.0\nratios = [1, 1, 1, 1]\nbounds = [[0, 1], [-1, 1]]\n\
             label_bounds = [0, 7]\nstrict_l2_mode = true\nalgorithm2_literal_debias = true\n",
        )
        .unwrap();
        let p = c.pipeline();
        assert_eq!(p.total_mu, 2.0);
        assert_eq!(p.ratios, [1.0; 4]);
        assert_eq!(p.calibration, NoiseCalibration::StrictL2);
        assert_eq!(p.scaling, CorrectionScaling::Averaged);
        assert_eq!(c.bounds.unwrap()[1], (-1.0, 1.0));
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(FileConfig::parse("mu = 1.0\n").is_err());
    }

    #[test]
    fn overlay_prefers_later() {
        let a = FileConfig::parse("theta = 1.0\nreps = 5\n").unwrap();
        let b = FileConfig {
            theta: Some(-2.0),
            ..Default::default()
        };
        let c = a.overlay(b);
        assert_eq!(c.theta, Some(-2.0));
        assert_eq!(c.reps, Some(5));
    }
}
