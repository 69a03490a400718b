use super::special::f_sf;
use super::{DegreesOfFreedom, StatTestResult, StatsError, TestKind};

/// Relative size below which a Householder pivot marks a column as linearly
/// dependent on the ones before it.
const RANK_TOL: f64 = 1e-10;

/// Ordinary least-squares fit via Householder QR.
#[derive(Debug, Clone)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    /// Residual sum of squares.
    pub rss: f64,
}

impl LinearFit {
    /// Fit `y` on the given design columns (no implicit intercept).
    pub fn fit(columns: &[Vec<f64>], y: &[f64]) -> Result<Self, StatsError> {
        let n = y.len();
        let p = columns.len();
        if let Some(bad) = columns.iter().find(|c| c.len() != n) {
            return Err(StatsError::LengthMismatch(bad.len(), n));
        }
        if n <= p {
            return Err(StatsError::TooFewObservations {
                need: p + 1,
                got: n,
            });
        }
        let mut a: Vec<Vec<f64>> = columns.to_vec();
        let mut qty = y.to_vec();
        let mut diag = vec![0.0; p];

        for j in 0..p {
            let col_norm = norm(&columns[j]);
            let norm_x = norm(&a[j][j..]);
            if col_norm == 0.0 || norm_x <= RANK_TOL * col_norm {
                return Err(StatsError::SingularDesign);
            }
            let alpha = if a[j][j] > 0.0 { -norm_x } else { norm_x };
            let mut v: Vec<f64> = a[j][j..].to_vec();
            v[0] -= alpha;
            let vnorm2: f64 = v.iter().map(|x| x * x).sum();
            if vnorm2 > 0.0 {
                for col in a.iter_mut().skip(j) {
                    reflect(&v, vnorm2, &mut col[j..]);
                }
                reflect(&v, vnorm2, &mut qty[j..]);
            }
            diag[j] = alpha;
        }

        let mut coefficients = vec![0.0; p];
        for i in (0..p).rev() {
            let mut s = qty[i];
            for (k, coef) in coefficients.iter().enumerate().skip(i + 1) {
                s -= a[k][i] * coef;
            }
            coefficients[i] = s / diag[i];
        }
        let rss = qty[p..].iter().map(|r| r * r).sum();
        Ok(Self { coefficients, rss })
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Apply `I - 2 v v^T / (v^T v)` to `x` in place.
fn reflect(v: &[f64], vnorm2: f64, x: &mut [f64]) {
    let dot: f64 = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    let k = 2.0 * dot / vnorm2;
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= k * vi;
    }
}

/// ANCOVA for a binary group factor with any number of covariates.
///
/// Compares `y ~ 1 + group + covariates` against `y ~ 1 + covariates`. With
/// no covariates this is the one-way ANOVA F (equal to the pooled two-sample
/// t squared).
pub fn ancova(
    y: &[f64],
    group: &[bool],
    covariates: &[&[f64]],
) -> Result<StatTestResult, StatsError> {
    let n = y.len();
    if group.len() != n {
        return Err(StatsError::LengthMismatch(group.len(), n));
    }
    let params = 2 + covariates.len();
    let need = params.max(3) + 1;
    if n < need {
        return Err(StatsError::TooFewObservations { need, got: n });
    }
    let in_group = group.iter().filter(|g| **g).count();
    if in_group == 0 || in_group == n {
        return Err(StatsError::EmptyGroup);
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::Domain(
            "response contains non-finite values".into(),
        ));
    }

    let intercept = vec![1.0; n];
    let dummy: Vec<f64> = group.iter().map(|&g| if g { 1.0 } else { 0.0 }).collect();
    let mut reduced = vec![intercept];
    for cov in covariates {
        if cov.len() != n {
            return Err(StatsError::LengthMismatch(cov.len(), n));
        }
        reduced.push(cov.to_vec());
    }
    let mut full = reduced.clone();
    full.insert(1, dummy);

    let full_fit = LinearFit::fit(&full, y)?;
    let reduced_fit = LinearFit::fit(&reduced, y)?;

    let df2 = (n - params) as f64;
    let mean = y.iter().sum::<f64>() / n as f64;
    let total_ss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if full_fit.rss <= 1e-24 * total_ss.max(f64::MIN_POSITIVE) {
        return Err(StatsError::DegenerateSample(
            "model fits the response exactly",
        ));
    }
    let ss_group = (reduced_fit.rss - full_fit.rss).max(0.0);
    let f = ss_group / (full_fit.rss / df2);
    let p = f_sf(f, 1.0, df2)?;
    let eta2 = ss_group / (ss_group + full_fit.rss);
    Ok(StatTestResult {
        test: TestKind::AncovaF,
        statistic: f,
        df: DegreesOfFreedom::Pair(1.0, df2),
        p,
        effect: Some(eta2),
    })
}

/// ANCOVA with exactly one covariate; `df = (1, n - 3)`.
pub fn ancova_one_cov(
    y: &[f64],
    group: &[bool],
    cov: &[f64],
) -> Result<StatTestResult, StatsError> {
    ancova(y, group, &[cov])
}
