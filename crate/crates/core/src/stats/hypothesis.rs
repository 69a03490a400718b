use serde::{Deserialize, Serialize};

use super::special::{chi2_sf, t_sf};
use super::{DegreesOfFreedom, StatTestResult, StatsError, TestKind};

/// Two-tailed paired t-test on `x - y`.
pub fn paired_t_test(x: &[f64], y: &[f64]) -> Result<StatTestResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(StatsError::TooFewObservations { need: 2, got: n });
    }
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let ss: f64 = diffs.iter().map(|d| (d - mean) * (d - mean)).sum();
    let var = ss / (nf - 1.0);
    // Relative floor: differences equal up to rounding still count as constant.
    let scale = diffs.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if var <= (scale * 1e-12).powi(2) {
        return Err(StatsError::DegenerateSample(
            "differences have zero variance",
        ));
    }
    let t = mean / (var.sqrt() / nf.sqrt());
    let df = nf - 1.0;
    let p = (2.0 * t_sf(t.abs(), df)?).min(1.0);
    Ok(StatTestResult {
        test: TestKind::PairedT,
        statistic: t,
        df: DegreesOfFreedom::Single(df),
        p,
        effect: None,
    })
}

/// A 2x2 table of counts, `cells[row][col]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContingencyTable {
    pub cells: [[u64; 2]; 2],
}

impl ContingencyTable {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        Self {
            cells: [[a, b], [c, d]],
        }
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }

    pub fn row_totals(&self) -> [u64; 2] {
        [
            self.cells[0][0] + self.cells[0][1],
            self.cells[1][0] + self.cells[1][1],
        ]
    }

    pub fn col_totals(&self) -> [u64; 2] {
        [
            self.cells[0][0] + self.cells[1][0],
            self.cells[0][1] + self.cells[1][1],
        ]
    }
}

/// Continuity correction applied to a 2x2 chi-square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    None,
    /// Yates: `(|O - E| - 0.5)` clamped at zero.
    #[default]
    Yates,
    /// Yates without the clamp, so cells with `|O - E| < 0.5` still contribute.
    YatesUnclamped,
}

/// Chi-square test of independence on a 2x2 table with Yates correction.
pub fn chi2_yates(table: &ContingencyTable) -> Result<StatTestResult, StatsError> {
    chi2_2x2(table, Correction::Yates)
}

pub fn chi2_2x2(
    table: &ContingencyTable,
    correction: Correction,
) -> Result<StatTestResult, StatsError> {
    let rows = table.row_totals();
    let cols = table.col_totals();
    if rows.contains(&0) || cols.contains(&0) {
        return Err(StatsError::ZeroMarginal);
    }
    let n = table.total() as f64;
    let mut stat = 0.0;
    for (r, row_total) in rows.iter().enumerate() {
        for (c, col_total) in cols.iter().enumerate() {
            let expected = *row_total as f64 * *col_total as f64 / n;
            let dev = (table.cells[r][c] as f64 - expected).abs();
            let dev = match correction {
                Correction::None => dev,
                Correction::Yates => (dev - 0.5).max(0.0),
                Correction::YatesUnclamped => dev - 0.5,
            };
            stat += dev * dev / expected;
        }
    }
    let p = chi2_sf(stat, 1.0)?;
    let test = match correction {
        Correction::None => TestKind::Chi2,
        _ => TestKind::Chi2Yates,
    };
    Ok(StatTestResult {
        test,
        statistic: stat,
        df: DegreesOfFreedom::Single(1.0),
        p,
        effect: None,
    })
}
