//! Differentially private linear regression and synthetic data generation
//! through binning and aggregation.
//!
//! The pipeline has four stages:
//!
//! 1. [`privtree`] partitions the (public) feature domain into bins under
//!    `mu_bin`-GDP.
//! 2. [`aggregation`] counts the records in each bin, privatizes the counts
//!    under `mu_c`-GDP and drops bins whose noisy count is below two.
//! 3. [`regression`] privatizes the per-bin feature and label sums and
//!    returns a bias-corrected weighted least squares fit with sandwich
//!    confidence intervals; alternatively [`synthesis`] turns the same
//!    summaries into synthetic records.
//! 4. [`harness`] drives simulations, coverage studies and data loading.
//!
//! The total privacy cost of either route is
//! `sqrt(mu_bin² + mu_c² + mu_s² + mu_t²)`-GDP.

// `!(x <= b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod error;
pub mod gdp;
pub mod harness;
pub mod linalg;
pub mod pipeline;
pub mod privtree;
pub mod region;
pub mod regression;
pub mod synthesis;

pub use aggregation::{BinSummary, PreparedBins};
pub use error::{Error, Result};
pub use gdp::{ApproxDpParams, BudgetAllocation, GdpBudget, RandomSource};
pub use pipeline::{PipelineConfig, RegressionOutcome};
pub use region::Region;
pub use regression::{PrivateFit, PrivatizedSummaries};
pub use synthesis::SyntheticDataset;
