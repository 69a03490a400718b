use serde::{Deserialize, Serialize};

use super::special::t_quantile;
use super::StatsError;

/// Mean, sample SD and t-based 95% confidence interval of one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
}

impl GroupSummary {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci95_hi - self.ci95_lo)
    }

    /// Summary from already-known moments.
    pub fn from_moments(n: usize, mean: f64, sd: f64) -> Result<Self, StatsError> {
        if n < 2 {
            return Err(StatsError::TooFewObservations { need: 2, got: n });
        }
        let half = t_quantile(0.975, (n - 1) as f64)? * sd / (n as f64).sqrt();
        Ok(Self {
            n,
            mean,
            sd,
            ci95_lo: mean - half,
            ci95_hi: mean + half,
        })
    }
}

pub fn group_summary(values: &[f64]) -> Result<GroupSummary, StatsError> {
    let n = values.len();
    if n < 2 {
        return Err(StatsError::TooFewObservations { need: 2, got: n });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    GroupSummary::from_moments(n, mean, var.sqrt())
}

/// Quantile by linear interpolation between order statistics
/// (position `q * (n - 1)` in the sorted sample).
///
/// `sorted` must be ascending and non-empty.
pub fn quantile_linear(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
