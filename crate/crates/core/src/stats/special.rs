//! Special functions and the t, F and chi-square distributions built on them.

use super::StatsError;

const MAX_ITER: usize = 1000;
const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

/// Lanczos coefficients (g = 7, n = 9).
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    let t = x + 7.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Regularized incomplete beta function `I_x(a, b)`.
///
/// Evaluated with the modified Lentz continued fraction, switching to the
/// symmetric form `1 - I_{1-x}(b, a)` where the fraction converges faster.
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> Result<f64, StatsError> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(StatsError::Domain(format!(
            "incomplete beta needs a, b > 0 (got a={a}, b={b})"
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(StatsError::Domain(format!(
            "incomplete beta needs 0 <= x <= 1 (got {x})"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    if x > (a + 1.0) / (a + b + 2.0) {
        Ok(1.0 - beta_fraction(1.0 - x, b, a)?)
    } else {
        beta_fraction(x, a, b)
    }
}

fn beta_fraction(x: f64, a: f64, b: f64) -> Result<f64, StatsError> {
    let prefix = (a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b)).exp() / a;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;

    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            return Ok((prefix * h).clamp(0.0, 1.0));
        }
    }
    Err(StatsError::NoConvergence("incomplete beta"))
}

/// Regularized lower incomplete gamma function `P(s, x)`.
pub fn reg_inc_gamma_lower(x: f64, s: f64) -> Result<f64, StatsError> {
    check_gamma_domain(x, s)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x < s + 1.0 {
        gamma_series(x, s)
    } else {
        Ok(1.0 - gamma_fraction(x, s)?)
    }
}

/// Regularized upper incomplete gamma function `Q(s, x) = 1 - P(s, x)`.
pub fn reg_inc_gamma_upper(x: f64, s: f64) -> Result<f64, StatsError> {
    check_gamma_domain(x, s)?;
    if x == 0.0 {
        return Ok(1.0);
    }
    if x < s + 1.0 {
        Ok(1.0 - gamma_series(x, s)?)
    } else {
        gamma_fraction(x, s)
    }
}

fn check_gamma_domain(x: f64, s: f64) -> Result<(), StatsError> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(StatsError::Domain(format!(
            "incomplete gamma needs s > 0 (got {s})"
        )));
    }
    if !(x >= 0.0) {
        return Err(StatsError::Domain(format!(
            "incomplete gamma needs x >= 0 (got {x})"
        )));
    }
    Ok(())
}

fn gamma_series(x: f64, s: f64) -> Result<f64, StatsError> {
    let mut ap = s;
    let mut del = 1.0 / s;
    let mut sum = del;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            let v = sum * (-x + s * x.ln() - ln_gamma(s)).exp();
            return Ok(v.clamp(0.0, 1.0));
        }
    }
    Err(StatsError::NoConvergence("incomplete gamma series"))
}

fn gamma_fraction(x: f64, s: f64) -> Result<f64, StatsError> {
    let mut b = x + 1.0 - s;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_ITER {
        let i = i as f64;
        let an = -i * (i - s);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            let v = (-x + s * x.ln() - ln_gamma(s)).exp() * h;
            return Ok(v.clamp(0.0, 1.0));
        }
    }
    Err(StatsError::NoConvergence("incomplete gamma fraction"))
}

fn check_df(name: &str, df: f64) -> Result<(), StatsError> {
    if df > 0.0 && df.is_finite() {
        Ok(())
    } else {
        Err(StatsError::Domain(format!("{name} must be > 0 (got {df})")))
    }
}

/// Upper tail `P(T > |t|)` of Student's t, used by both the CDF and the survival function.
fn t_upper_half(t: f64, df: f64) -> Result<f64, StatsError> {
    let x = df / (df + t * t);
    Ok(0.5 * reg_inc_beta(x, 0.5 * df, 0.5)?)
}

/// Student's t CDF with `df` degrees of freedom.
pub fn t_cdf(t: f64, df: f64) -> Result<f64, StatsError> {
    check_df("t degrees of freedom", df)?;
    if t.is_nan() {
        return Err(StatsError::Domain("t statistic is NaN".into()));
    }
    let tail = t_upper_half(t, df)?;
    Ok(if t > 0.0 { 1.0 - tail } else { tail })
}

/// Student's t survival function `1 - t_cdf(t, df)`, without cancellation in the tail.
pub fn t_sf(t: f64, df: f64) -> Result<f64, StatsError> {
    check_df("t degrees of freedom", df)?;
    if t.is_nan() {
        return Err(StatsError::Domain("t statistic is NaN".into()));
    }
    let tail = t_upper_half(t, df)?;
    Ok(if t > 0.0 { tail } else { 1.0 - tail })
}

/// Quantile of Student's t: the `t` with `t_cdf(t, df) = p`.
pub fn t_quantile(p: f64, df: f64) -> Result<f64, StatsError> {
    check_df("t degrees of freedom", df)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(StatsError::Domain(format!(
            "quantile probability must lie in (0, 1) (got {p})"
        )));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let mut lo = -1.0;
    let mut hi = 1.0;
    while t_cdf(lo, df)? > p {
        lo *= 2.0;
    }
    while t_cdf(hi, df)? < p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, df)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * mid.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// F distribution CDF.
pub fn f_cdf(f: f64, d1: f64, d2: f64) -> Result<f64, StatsError> {
    check_df("F numerator degrees of freedom", d1)?;
    check_df("F denominator degrees of freedom", d2)?;
    if f.is_nan() {
        return Err(StatsError::Domain("F statistic is NaN".into()));
    }
    if f <= 0.0 {
        return Ok(0.0);
    }
    if f.is_infinite() {
        return Ok(1.0);
    }
    reg_inc_beta(d1 * f / (d1 * f + d2), 0.5 * d1, 0.5 * d2)
}

/// F distribution survival function `1 - f_cdf`, evaluated directly in the upper tail.
pub fn f_sf(f: f64, d1: f64, d2: f64) -> Result<f64, StatsError> {
    check_df("F numerator degrees of freedom", d1)?;
    check_df("F denominator degrees of freedom", d2)?;
    if f.is_nan() {
        return Err(StatsError::Domain("F statistic is NaN".into()));
    }
    if f <= 0.0 {
        return Ok(1.0);
    }
    if f.is_infinite() {
        return Ok(0.0);
    }
    reg_inc_beta(d2 / (d2 + d1 * f), 0.5 * d2, 0.5 * d1)
}

/// Chi-square CDF with `k` degrees of freedom.
pub fn chi2_cdf(x: f64, k: f64) -> Result<f64, StatsError> {
    check_df("chi-square degrees of freedom", k)?;
    if x.is_nan() {
        return Err(StatsError::Domain("chi-square statistic is NaN".into()));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    reg_inc_gamma_lower(0.5 * x, 0.5 * k)
}

/// Chi-square survival function.
pub fn chi2_sf(x: f64, k: f64) -> Result<f64, StatsError> {
    check_df("chi-square degrees of freedom", k)?;
    if x.is_nan() {
        return Err(StatsError::Domain("chi-square statistic is NaN".into()));
    }
    if x <= 0.0 {
        return Ok(1.0);
    }
    reg_inc_gamma_upper(0.5 * x, 0.5 * k)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson's rule; the integrand must be smooth on [a, b].
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = if n % 2 == 1 { n + 1 } else { n };
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
        }
        s * h / 3.0
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut fact = 1.0f64;
        for n in 1..20u32 {
            assert!((ln_gamma(n as f64) - fact.ln()).abs() < 1e-12, "n={n}");
            fact *= n as f64;
        }
        // Gamma(1/2) = sqrt(pi)
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn beta_symmetry_and_bounds() {
        for a in [0.3, 1.0, 2.5, 23.0, 140.0] {
            assert!(
                (reg_inc_beta(0.5, a, a).unwrap() - 0.5).abs() < 1e-12,
                "a={a}"
            );
            assert_eq!(reg_inc_beta(0.0, a, 2.0).unwrap(), 0.0);
            assert_eq!(reg_inc_beta(1.0, a, 2.0).unwrap(), 1.0);
        }
        // I_x(1, 1) = x and I_x(a, 1) = x^a
        assert!((reg_inc_beta(0.3, 1.0, 1.0).unwrap() - 0.3).abs() < 1e-14);
        assert!((reg_inc_beta(0.3, 3.0, 1.0).unwrap() - 0.027).abs() < 1e-14);
    }

    #[test]
    fn domain_errors() {
        assert!(reg_inc_beta(0.5, 0.0, 1.0).is_err());
        assert!(reg_inc_beta(1.5, 1.0, 1.0).is_err());
        assert!(reg_inc_gamma_lower(1.0, -1.0).is_err());
        assert!(reg_inc_gamma_lower(-1.0, 1.0).is_err());
        assert!(t_cdf(1.0, 0.0).is_err());
        assert!(f_cdf(1.0, 1.0, -2.0).is_err());
    }

    #[test]
    fn chi2_one_df_matches_quadrature() {
        // chi2_1 density integrated from 0 after the substitution x = u^2,
        // which removes the 1/sqrt(x) singularity: density du = 2/sqrt(2pi) e^{-u^2/2}.
        let dens = |u: f64| 2.0 / (2.0 * std::f64::consts::PI).sqrt() * (-0.5 * u * u).exp();
        for x in [0.1, 1.0, 3.841, 6.4, 12.0] {
            let oracle = simpson(dens, 0.0, f64::sqrt(x), 4000);
            let got = chi2_cdf(x, 1.0).unwrap();
            assert!(
                (got - oracle).abs() < 1e-10,
                "x={x} got={got} oracle={oracle}"
            );
        }
        assert!((chi2_cdf(3.841, 1.0).unwrap() - 0.95).abs() < 1e-4);
    }

    #[test]
    fn lower_gamma_matches_quadrature() {
        for (s, x) in [
            (2.5f64, 1.3f64),
            (4.0, 7.0),
            (10.0, 3.0),
            (0.5 * 3.0, 0.5 * 3.841),
        ] {
            // t = u^2 keeps the integrand smooth at the origin
            let dens = |u: f64| 2.0 * u.powf(2.0 * s - 1.0) * (-u * u).exp() / ln_gamma(s).exp();
            let oracle = simpson(dens, 0.0, x.sqrt(), 20000);
            let got = reg_inc_gamma_lower(x, s).unwrap();
            assert!((got - oracle).abs() < 1e-9, "s={s} x={x}");
            let q = reg_inc_gamma_upper(x, s).unwrap();
            assert!((got + q - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn t_cdf_two_df_closed_form() {
        for t in [-5.0, -1.2, 0.0, 0.4, 3.4641, 10.0] {
            let closed = 0.5 + t / (2.0 * (t * t + 2.0f64).sqrt());
            assert!((t_cdf(t, 2.0).unwrap() - closed).abs() < 1e-12, "t={t}");
        }
        assert!((t_cdf(3.4641, 2.0).unwrap() - 0.9629).abs() < 1e-4);
        assert_eq!(t_cdf(0.0, 7.0).unwrap(), 0.5);
    }

    #[test]
    fn t_one_df_is_cauchy() {
        for t in [-3.0f64, -0.5, 0.7, 20.0] {
            let cauchy = 0.5 + t.atan() / std::f64::consts::PI;
            assert!((t_cdf(t, 1.0).unwrap() - cauchy).abs() < 1e-12);
        }
    }

    #[test]
    fn t_quantile_inverts_cdf() {
        for df in [1.0, 2.0, 5.5, 19.0, 28.0, 200.0] {
            for p in [0.01, 0.3, 0.5, 0.975, 0.999] {
                let q = t_quantile(p, df).unwrap();
                assert!((t_cdf(q, df).unwrap() - p).abs() < 1e-11, "df={df} p={p}");
            }
        }
        // textbook value t_{0.975, 19} = 2.093024
        assert!((t_quantile(0.975, 19.0).unwrap() - 2.093_024_054).abs() < 1e-8);
    }

    #[test]
    fn f_tail_against_statrs() {
        use statrs::distribution::{ContinuousCDF, FisherSnedecor};
        for (f, d1, d2) in [
            (8.53, 1.0, 46.0),
            (0.17, 1.0, 46.0),
            (2.3, 4.0, 17.0),
            (55.0, 1.0, 3.0),
        ] {
            let reference = FisherSnedecor::new(d1, d2).unwrap();
            assert!((f_sf(f, d1, d2).unwrap() - reference.sf(f)).abs() < 1e-10);
            assert!((f_cdf(f, d1, d2).unwrap() - reference.cdf(f)).abs() < 1e-10);
        }
    }

    #[test]
    fn f_and_t_square_identity() {
        for (t, df) in [(0.3, 4.0), (2.1, 46.0), (5.0, 3.0)] {
            let lhs = f_cdf(t * t, 1.0, df).unwrap();
            let rhs = 2.0 * t_cdf(t, df).unwrap() - 1.0;
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
