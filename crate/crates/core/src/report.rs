//! Table and box-plot renderers for analysis results.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use crate::cohort::{labeled, Cohort, CohortError, DemographicRow, GroupAnalysis, Grouping};
use crate::features::{FeatureDelta, Variable};
use crate::stats::{quantile_linear, GroupSummary, StatTestResult};

pub const REPORT_COLUMNS: [&str; 18] = [
    "variable",
    "n_a",
    "mean_a",
    "sd_a",
    "ci_a_lo",
    "ci_a_hi",
    "n_b",
    "mean_b",
    "sd_b",
    "ci_b_lo",
    "ci_b_hi",
    "F",
    "df1",
    "df2",
    "p",
    "eta2_partial",
    "holm_reject",
    "uncorrected_reject",
];

pub const DEMOGRAPHIC_COLUMNS: [&str; 10] = [
    "grouping",
    "factor",
    "group_yes",
    "group_no",
    "rest_yes",
    "rest_no",
    "chi2",
    "df",
    "p",
    "untestable",
];

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

fn summary_cells(s: &Option<GroupSummary>) -> [String; 5] {
    match s {
        Some(s) => [
            s.n.to_string(),
            num(s.mean),
            num(s.sd),
            num(s.ci95_lo),
            num(s.ci95_hi),
        ],
        None => Default::default(),
    }
}

fn test_cells(t: &Option<StatTestResult>) -> [String; 5] {
    match t {
        Some(t) => {
            let (d1, d2) = t.df.as_pair();
            [
                num(t.statistic),
                num(d1),
                num(d2),
                num(t.p),
                num(t.effect.unwrap_or(f64::NAN)),
            ]
        }
        None => Default::default(),
    }
}

/// Report rows as CSV. Changes stay fractions; KL stays in nats.
pub fn write_report_csv<W: Write>(w: W, analysis: &GroupAnalysis) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(REPORT_COLUMNS)?;
    for r in &analysis.rows {
        let mut rec = vec![r.variable.column().to_owned()];
        rec.extend(summary_cells(&r.a));
        rec.extend(summary_cells(&r.b));
        rec.extend(test_cells(&r.test));
        rec.push(r.holm_reject.to_string());
        rec.push(r.uncorrected_reject.to_string());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Scale for display: fractions become percentages.
fn shown(v: Variable, x: f64) -> f64 {
    if v.is_fraction() {
        x * 100.0
    } else {
        x
    }
}

fn fmt_summary(v: Variable, s: &Option<GroupSummary>) -> String {
    match s {
        Some(s) => format!(
            "{:.2} ({:.2}) [{:.2}, {:.2}]",
            shown(v, s.mean),
            shown(v, s.sd),
            shown(v, s.ci95_lo),
            shown(v, s.ci95_hi)
        ),
        None => "n/a".into(),
    }
}

/// APA-style p: three decimals, `<.001` below that.
pub fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        "<.001".into()
    } else {
        let s = format!("{p:.3}");
        s.strip_prefix('0').unwrap_or(&s).to_owned()
    }
}

/// Extra lines shown under a Markdown table.
#[derive(Debug, Clone, Default)]
pub struct ReportMeta {
    pub kl_epsilon: f64,
    pub manifest: Option<String>,
}

pub fn render_report_markdown(analysis: &GroupAnalysis, meta: &ReportMeta) -> String {
    let g = analysis.grouping.name();
    let mut s = String::new();
    let _ = writeln!(s, "# {g} group analysis\n");
    let covs: Vec<&str> = analysis.covariates.iter().map(|f| f.name()).collect();
    let _ = writeln!(
        s,
        "n = {} ({g} n = {}, excluded for missing survey = {}); covariates: {}; alpha = {}\n",
        analysis.n_analyzed,
        analysis.n_group,
        analysis.n_missing_survey,
        if covs.is_empty() {
            "none".into()
        } else {
            covs.join(", ")
        },
        analysis.alpha
    );
    let _ = writeln!(
        s,
        "| Variable | {g} mean (SD) [95% CI] | Non-{g} mean (SD) [95% CI] | F | df | P | eta2 | Holm | Uncorrected |"
    );
    let _ = writeln!(s, "|---|---|---|---|---|---|---|---|---|");
    for r in &analysis.rows {
        let v = r.variable;
        let mark = if r.unreliable { " (unreliable)" } else { "" };
        let (f, df, p, eta) = match &r.test {
            Some(t) => {
                let (d1, d2) = t.df.as_pair();
                (
                    format!("{:.2}", t.statistic),
                    format!("{d1}, {d2}"),
                    fmt_p(t.p),
                    format!("{:.2}", t.effect.unwrap_or(f64::NAN)),
                )
            }
            None => {
                let why = r.error.clone().unwrap_or_default();
                (
                    format!("n/a: {why}"),
                    String::new(),
                    String::new(),
                    String::new(),
                )
            }
        };
        let yes = |b: bool| if b { "yes" } else { "no" };
        let _ = writeln!(
            s,
            "| {}{mark} | {} | {} | {f} | {df} | {p} | {eta} | {} | {} |",
            v.label(),
            fmt_summary(v, &r.a),
            fmt_summary(v, &r.b),
            yes(r.holm_reject),
            yes(r.uncorrected_reject)
        );
    }
    let _ = writeln!(
        s,
        "\nChanges are percentages; the inactivity divergence is in nats (smoothing epsilon {}).",
        meta.kl_epsilon
    );
    if let Some(m) = &meta.manifest {
        let _ = writeln!(s, "Manifest: {m}");
    }
    s
}

pub fn write_demographics_csv<W: Write>(w: W, rows: &[DemographicRow]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(DEMOGRAPHIC_COLUMNS)?;
    for r in rows {
        let t = r.table;
        let (chi, df, p) = match &r.result {
            Some(x) => (num(x.statistic), num(x.df.as_pair().0), num(x.p)),
            None => Default::default(),
        };
        out.write_record([
            r.grouping.to_string(),
            r.factor.name().to_owned(),
            t[0][0].to_string(),
            t[0][1].to_string(),
            t[1][0].to_string(),
            t[1][1].to_string(),
            chi,
            df,
            p,
            r.untestable.clone().unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn render_demographics_markdown(rows: &[DemographicRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "| Grouping | Factor | In group (yes/no) | Rest (yes/no) | chi2 | P |"
    );
    let _ = writeln!(s, "|---|---|---|---|---|---|");
    for r in rows {
        let t = r.table;
        let (chi, p) = match &r.result {
            Some(x) => (format!("{:.2}", x.statistic), fmt_p(x.p)),
            None => (
                format!("untestable: {}", r.untestable.as_deref().unwrap_or("")),
                String::new(),
            ),
        };
        let _ = writeln!(
            s,
            "| {} | {} | {}/{} | {}/{} | {chi} | {p} |",
            r.grouping.name(),
            r.factor.name(),
            t[0][0],
            t[0][1],
            t[1][0],
            t[1][1]
        );
    }
    s
}

/// Quartiles by linear interpolation; whiskers are the sample range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
}

/// `None` for fewer than two values.
pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.len() < 2 {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(BoxStats {
        q1: quantile_linear(&v, 0.25),
        median: quantile_linear(&v, 0.5),
        q3: quantile_linear(&v, 0.75),
        whisker_lo: v[0],
        whisker_hi: v[v.len() - 1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxplotEntry {
    pub variable: Variable,
    /// Keyed by group name; `None` when the group has under two values.
    pub groups: BTreeMap<String, Option<BoxStats>>,
}

/// Names of the two groups under a grouping, in-group first.
pub fn group_names(grouping: Grouping) -> (String, String) {
    (
        grouping.name().to_owned(),
        format!("non-{}", grouping.name()),
    )
}

/// Box-plot numbers per variable for the grouping and its complement.
/// Degenerate values are left out.
pub fn boxplot_data(
    cohort: &Cohort,
    grouping: Grouping,
    features: &[FeatureDelta],
) -> Result<Vec<BoxplotEntry>, CohortError> {
    let (people, _) = labeled(cohort)?;
    let by_id: BTreeMap<&str, &FeatureDelta> = features
        .iter()
        .map(|f| (f.participant_id.as_str(), f))
        .collect();
    let (yes, no) = group_names(grouping);
    let mut out = Vec::new();
    for v in Variable::ALL {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (p, l) in &people {
            let Some(f) = by_id.get(p.id.as_str()) else {
                continue;
            };
            if let (Some(x), false) = (f.get(v), f.is_degenerate(v)) {
                if grouping.member(l) {
                    a.push(x)
                } else {
                    b.push(x)
                }
            }
        }
        let mut groups = BTreeMap::new();
        groups.insert(yes.clone(), box_stats(&a));
        groups.insert(no.clone(), box_stats(&b));
        out.push(BoxplotEntry {
            variable: v,
            groups,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_numbers() {
        let b = box_stats(&[5.0, 1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_eq!(
            b,
            BoxStats {
                q1: 2.0,
                median: 3.0,
                q3: 4.0,
                whisker_lo: 1.0,
                whisker_hi: 5.0
            }
        );
        let c = box_stats(&[0.7; 4]).unwrap();
        assert!([c.q1, c.median, c.q3, c.whisker_lo, c.whisker_hi]
            .iter()
            .all(|x| *x == 0.7));
        assert!(box_stats(&[]).is_none());
        assert!(box_stats(&[1.0]).is_none());
    }

    #[test]
    fn even_count_interpolates() {
        let b = box_stats(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (1.75, 2.5, 3.25));
    }

    #[test]
    fn p_formatting() {
        assert_eq!(fmt_p(0.0004), "<.001");
        assert_eq!(fmt_p(0.005), ".005");
        assert_eq!(fmt_p(0.39), ".390");
        assert_eq!(fmt_p(1.0), "1.000");
    }
}
