//! Statistical engine: distribution functions, paired t-test, 2x2 chi-square,
//! ANCOVA with partial eta squared, Holm's step-down correction and group
//! summaries.
//!
//! Everything here is pure and works in `f64` with a fixed left-to-right
//! summation order, so identical inputs give bit-identical outputs.

mod ancova;
mod holm;
mod hypothesis;
pub mod special;
mod summary;

pub use ancova::{ancova, ancova_one_cov, LinearFit};
pub use holm::{bonferroni, holm, uncorrected};
pub use hypothesis::{chi2_2x2, chi2_yates, paired_t_test, ContingencyTable, Correction};
pub use special::{
    chi2_cdf, chi2_sf, f_cdf, f_sf, reg_inc_beta, reg_inc_gamma_lower, reg_inc_gamma_upper, t_cdf,
    t_quantile, t_sf,
};
pub use summary::{group_summary, quantile_linear, GroupSummary};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("need at least {need} observations, got {got}")]
    TooFewObservations { need: usize, got: usize },
    #[error("input lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("degenerate sample: {0}")]
    DegenerateSample(&'static str),
    #[error("singular design")]
    SingularDesign,
    #[error("empty group")]
    EmptyGroup,
    #[error("zero marginal in contingency table")]
    ZeroMarginal,
    #[error("p-value {0} outside [0, 1]")]
    InvalidPValue(f64),
    #[error("{0} did not converge")]
    NoConvergence(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    PairedT,
    Chi2Yates,
    /// Pearson chi-square without continuity correction.
    Chi2,
    AncovaF,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DegreesOfFreedom {
    Single(f64),
    Pair(f64, f64),
}

impl DegreesOfFreedom {
    /// (df1, df2); a single df is reported as (df, NaN).
    pub fn as_pair(&self) -> (f64, f64) {
        match *self {
            DegreesOfFreedom::Single(d) => (d, f64::NAN),
            DegreesOfFreedom::Pair(a, b) => (a, b),
        }
    }
}

/// Outcome of one hypothesis test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatTestResult {
    pub test: TestKind,
    /// t, chi-square or F depending on `test`.
    pub statistic: f64,
    pub df: DegreesOfFreedom,
    pub p: f64,
    /// Partial eta squared for ANCOVA.
    pub effect: Option<f64>,
}
