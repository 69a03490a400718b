//! Per-participant behavior-shift features and the feature table CSV.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{ActivityEvent, EventKind, IngestError, ParticipantBatches};
use crate::lexicon::{
    count_into, CategoryProvider, Dimension, Lexicon, LexiconCounts, Lookup, ADULT, NEWS,
};
use crate::timeline::{segment, window_counts, AnalysisConfig, WindowCounts};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("zero baseline")]
    ZeroBaseline,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("feature table: {0}")]
    Table(String),
}

/// Normalized 24-bin hour-of-day distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourDistribution {
    bins: [f64; 24],
}

impl HourDistribution {
    pub fn uniform() -> Self {
        Self {
            bins: [1.0 / 24.0; 24],
        }
    }

    /// `None` when every count is zero.
    pub fn from_counts(counts: &[u64; 24]) -> Option<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return None;
        }
        let mut bins = [0.0; 24];
        for (b, &c) in bins.iter_mut().zip(counts) {
            *b = c as f64 / total as f64;
        }
        Some(Self { bins })
    }

    pub fn from_bins(bins: [f64; 24]) -> Result<Self, FeatureError> {
        if bins.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(FeatureError::InvalidDistribution(
                "negative or non-finite bin".into(),
            ));
        }
        let sum: f64 = bins.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(FeatureError::InvalidDistribution(format!(
                "bins sum to {sum}"
            )));
        }
        Ok(Self { bins })
    }

    pub fn bins(&self) -> &[f64; 24] {
        &self.bins
    }
}

/// Relative change `(after - before) / before`, as a fraction.
pub fn pct_change(before: u64, after: u64) -> Result<f64, FeatureError> {
    if before == 0 {
        return Err(FeatureError::ZeroBaseline);
    }
    Ok((after as f64 - before as f64) / before as f64)
}

/// Relative change of two nonnegative rates.
pub fn rate_change(before: f64, after: f64) -> Result<f64, FeatureError> {
    if before <= 0.0 {
        return Err(FeatureError::ZeroBaseline);
    }
    Ok((after - before) / before)
}

/// `sum p' ln(p'/q')` with `x' = (x + eps) / (1 + k eps)` over `k` bins.
/// With `eps = 0` the inputs are used as given.
pub fn kl_divergence_slices(p: &[f64], q: &[f64], epsilon: f64) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions must have equal length");
    let norm = 1.0 + p.len() as f64 * epsilon;
    let mut d = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        let ps = (pi + epsilon) / norm;
        let qs = (qi + epsilon) / norm;
        if ps > 0.0 {
            d += ps * (ps / qs).ln();
        }
    }
    d.max(0.0)
}

/// KL divergence of the after distribution from the before one, in nats.
pub fn kl_divergence(before: &HourDistribution, after: &HourDistribution, epsilon: f64) -> f64 {
    kl_divergence_slices(&before.bins, &after.bins, epsilon)
}

/// The nine analyzed variables, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    LnaPct,
    InactKl,
    SeiPct,
    LiwcPersonal,
    LiwcNegemo,
    LiwcSocial,
    LiwcHealth,
    CatAdult,
    CatNews,
}

impl Variable {
    pub const ALL: [Variable; 9] = [
        Variable::LnaPct,
        Variable::InactKl,
        Variable::SeiPct,
        Variable::LiwcPersonal,
        Variable::LiwcNegemo,
        Variable::LiwcSocial,
        Variable::LiwcHealth,
        Variable::CatAdult,
        Variable::CatNews,
    ];

    pub fn column(self) -> &'static str {
        match self {
            Variable::LnaPct => "lna_pct",
            Variable::InactKl => "inact_kl",
            Variable::SeiPct => "sei_pct",
            Variable::LiwcPersonal => "liwc_personal",
            Variable::LiwcNegemo => "liwc_negemo",
            Variable::LiwcSocial => "liwc_social",
            Variable::LiwcHealth => "liwc_health",
            Variable::CatAdult => "cat_adult",
            Variable::CatNews => "cat_news",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variable::LnaPct => "Late night activities",
            Variable::InactKl => "Inactivity KL divergence",
            Variable::SeiPct => "Short event intervals",
            Variable::LiwcPersonal => "Personal concerns",
            Variable::LiwcNegemo => "Negative emotion",
            Variable::LiwcSocial => "Social words",
            Variable::LiwcHealth => "Health/illness",
            Variable::CatAdult => "Adult",
            Variable::CatNews => "News",
        }
    }

    /// False only for the divergence, which is not a relative change.
    pub fn is_fraction(self) -> bool {
        self != Variable::InactKl
    }

    fn index(self) -> usize {
        Variable::ALL.iter().position(|v| *v == self).unwrap()
    }

    fn dimension(self) -> Option<Dimension> {
        match self {
            Variable::LiwcPersonal => Some(Dimension::PersonalConcern),
            Variable::LiwcNegemo => Some(Dimension::NegativeEmotion),
            Variable::LiwcSocial => Some(Dimension::Social),
            Variable::LiwcHealth => Some(Dimension::Health),
            _ => None,
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

impl FromStr for Variable {
    type Err = FeatureError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variable::ALL
            .into_iter()
            .find(|v| v.column() == s)
            .ok_or_else(|| FeatureError::Table(format!("unknown variable {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagReason {
    /// A window held no events at all.
    EmptyWindow,
    ZeroBaseline,
    /// No inactivity period before the cutoff; the uniform fallback was used.
    UniformBefore,
    UniformAfter,
    /// The lexicon has no category for this dimension.
    MissingCategory,
}

impl FlagReason {
    const ALL: [FlagReason; 5] = [
        FlagReason::EmptyWindow,
        FlagReason::ZeroBaseline,
        FlagReason::UniformBefore,
        FlagReason::UniformAfter,
        FlagReason::MissingCategory,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FlagReason::EmptyWindow => "empty_window",
            FlagReason::ZeroBaseline => "zero_baseline",
            FlagReason::UniformBefore => "uniform_before",
            FlagReason::UniformAfter => "uniform_after",
            FlagReason::MissingCategory => "missing_category",
        }
    }

    /// Whether the flag removes the value from analysis.
    pub fn is_degenerate(self) -> bool {
        !matches!(self, FlagReason::UniformBefore | FlagReason::UniformAfter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Flag {
    pub variable: Variable,
    pub reason: FlagReason,
}

/// One participant's nine changes. A `None` value always carries a
/// degenerate flag explaining it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDelta {
    pub participant_id: String,
    pub values: [Option<f64>; 9],
    pub flags: Vec<Flag>,
    /// Events the category provider could not resolve, per window.
    pub unresolved: [u64; 2],
}

impl FeatureDelta {
    fn empty(pid: &str) -> Self {
        Self {
            participant_id: pid.to_owned(),
            values: [None; 9],
            flags: Vec::new(),
            unresolved: [0, 0],
        }
    }

    pub fn get(&self, v: Variable) -> Option<f64> {
        self.values[v.index()]
    }

    pub fn lna_change(&self) -> Option<f64> {
        self.get(Variable::LnaPct)
    }

    pub fn inactivity_kl(&self) -> Option<f64> {
        self.get(Variable::InactKl)
    }

    pub fn sei_change(&self) -> Option<f64> {
        self.get(Variable::SeiPct)
    }

    pub fn is_degenerate(&self, v: Variable) -> bool {
        self.flags
            .iter()
            .any(|f| f.variable == v && f.reason.is_degenerate())
    }

    fn set(&mut self, v: Variable, r: Result<f64, FeatureError>) {
        match r {
            Ok(x) if x.is_finite() => self.values[v.index()] = Some(x),
            _ => self.flag(v, FlagReason::ZeroBaseline),
        }
    }

    fn flag(&mut self, variable: Variable, reason: FlagReason) {
        self.flags.push(Flag { variable, reason });
    }
}

/// Everything counted inside one window.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WindowSummary {
    pub counts: WindowCounts,
    pub lexicon: LexiconCounts,
    pub adult: u64,
    pub news: u64,
    pub unresolved: u64,
}

/// Texts fed to the lexicon: search queries and watched-video titles.
fn is_lexicon_text(kind: EventKind) -> bool {
    matches!(kind, EventKind::Query | EventKind::VideoWatch)
}

pub fn summarize_window(
    events: &[ActivityEvent],
    config: &AnalysisConfig,
    tz_offset: i32,
    lexicon: &Lexicon,
    provider: &dyn CategoryProvider,
) -> WindowSummary {
    let mut s = WindowSummary {
        counts: window_counts(events, config, tz_offset),
        lexicon: LexiconCounts::zeros(lexicon.categories().len()),
        ..WindowSummary::default()
    };
    let mut buf = String::new();
    for e in events {
        if is_lexicon_text(e.kind) {
            count_into(&e.text, lexicon, &mut s.lexicon, &mut buf);
        }
        match provider.lookup(e) {
            Lookup::Tags(t) => {
                s.adult += t.contains(ADULT) as u64;
                s.news += t.contains(NEWS) as u64;
            }
            Lookup::Unresolved => s.unresolved += 1,
        }
    }
    s
}

/// Build the nine changes from before/after window summaries.
pub fn delta_from_summaries(
    pid: &str,
    before: &WindowSummary,
    after: &WindowSummary,
    config: &AnalysisConfig,
    lexicon: &Lexicon,
) -> FeatureDelta {
    let mut d = FeatureDelta::empty(pid);
    d.unresolved = [before.unresolved, after.unresolved];
    if before.counts.total == 0 || after.counts.total == 0 {
        for v in Variable::ALL {
            d.flag(v, FlagReason::EmptyWindow);
        }
        return d;
    }

    d.set(
        Variable::LnaPct,
        pct_change(before.counts.lna, after.counts.lna),
    );
    d.set(
        Variable::SeiPct,
        pct_change(before.counts.sei, after.counts.sei),
    );

    let qb = HourDistribution::from_counts(&before.counts.midpoint_histogram());
    let qa = HourDistribution::from_counts(&after.counts.midpoint_histogram());
    if qb.is_none() {
        d.flag(Variable::InactKl, FlagReason::UniformBefore);
    }
    if qa.is_none() {
        d.flag(Variable::InactKl, FlagReason::UniformAfter);
    }
    let qb = qb.unwrap_or_else(HourDistribution::uniform);
    let qa = qa.unwrap_or_else(HourDistribution::uniform);
    d.values[Variable::InactKl.index()] = Some(kl_divergence(&qb, &qa, config.kl_epsilon));

    for v in Variable::ALL {
        let Some(dim) = v.dimension() else { continue };
        let Some(i) = lexicon.dimension_index(dim) else {
            d.flag(v, FlagReason::MissingCategory);
            continue;
        };
        let (b, a) = (before.lexicon.counts[i], after.lexicon.counts[i]);
        let change = if config.lexicon_per_token_rate {
            let rate = |n: u64, t: u64| if t == 0 { 0.0 } else { n as f64 / t as f64 };
            rate_change(
                rate(b, before.lexicon.tokens),
                rate(a, after.lexicon.tokens),
            )
        } else {
            pct_change(b, a)
        };
        d.set(v, change);
    }

    d.set(Variable::CatAdult, pct_change(before.adult, after.adult));
    d.set(Variable::CatNews, pct_change(before.news, after.news));
    d.flags.sort();
    d
}

/// Segment one participant's sorted events and compute the nine changes.
pub fn extract_feature_delta(
    pid: &str,
    events: &[ActivityEvent],
    config: &AnalysisConfig,
    tz_offset: i32,
    lexicon: &Lexicon,
    provider: &dyn CategoryProvider,
) -> FeatureDelta {
    let (before, after) = segment(events, config, tz_offset);
    let b = summarize_window(before, config, tz_offset, lexicon, provider);
    let a = summarize_window(after, config, tz_offset, lexicon, provider);
    delta_from_summaries(pid, &b, &a, config, lexicon)
}

/// Result of [`featurize_stream`].
#[derive(Debug, Clone, Default)]
pub struct StreamOutput {
    pub rows: Vec<FeatureDelta>,
    pub events: usize,
    /// Most events held in memory at once.
    pub peak_events: usize,
}

/// Featurize a canonical NDJSON stream grouped by participant. Up to `chunk`
/// participants are held at a time and processed in parallel; rows come out
/// in stream order.
pub fn featurize_stream<R: BufRead>(
    reader: R,
    config: &AnalysisConfig,
    tz_offset: &(dyn Fn(&str) -> i32 + Sync),
    lexicon: &Lexicon,
    provider: &dyn CategoryProvider,
    chunk: usize,
) -> Result<StreamOutput, IngestError> {
    let chunk = chunk.max(1);
    let mut out = StreamOutput::default();
    let mut held: Vec<(String, Vec<ActivityEvent>)> = Vec::with_capacity(chunk);
    let mut held_events = 0;
    let flush = |held: &mut Vec<(String, Vec<ActivityEvent>)>, out: &mut StreamOutput| {
        let rows: Vec<FeatureDelta> = held
            .par_iter()
            .map(|(pid, xs)| {
                extract_feature_delta(pid, xs, config, tz_offset(pid), lexicon, provider)
            })
            .collect();
        out.rows.extend(rows);
        held.clear();
    };
    for batch in ParticipantBatches::new(reader) {
        let (pid, xs) = batch?;
        out.events += xs.len();
        held_events += xs.len();
        out.peak_events = out.peak_events.max(held_events);
        held.push((pid, xs));
        if held.len() == chunk {
            flush(&mut held, &mut out);
            held_events = 0;
        }
    }
    flush(&mut held, &mut out);
    Ok(out)
}

const FLAGS_COLUMN: &str = "flags";

fn header() -> Vec<&'static str> {
    let mut h = vec!["pid"];
    h.extend(Variable::ALL.iter().map(|v| v.column()));
    h.push(FLAGS_COLUMN);
    h
}

fn format_flags(flags: &[Flag]) -> String {
    flags
        .iter()
        .map(|f| format!("{}:{}", f.variable.column(), f.reason.as_str()))
        .collect::<Vec<_>>()
        .join(";")
}

fn parse_flags(s: &str) -> Result<Vec<Flag>, FeatureError> {
    s.split(';')
        .filter(|p| !p.is_empty())
        .map(|p| {
            let (v, r) = p
                .split_once(':')
                .ok_or_else(|| FeatureError::Table(format!("bad flag {p:?}")))?;
            let reason = FlagReason::ALL
                .into_iter()
                .find(|x| x.as_str() == r)
                .ok_or_else(|| FeatureError::Table(format!("unknown flag reason {r:?}")))?;
            Ok(Flag {
                variable: v.parse()?,
                reason,
            })
        })
        .collect()
}

/// Write the feature table, one row per participant ordered by id. Values are
/// fractions (KL in nats) printed at full round-trip precision.
pub fn write_feature_csv<W: Write>(writer: W, rows: &[FeatureDelta]) -> Result<(), FeatureError> {
    let table_err = |e: csv::Error| FeatureError::Table(e.to_string());
    let mut sorted: Vec<&FeatureDelta> = rows.iter().collect();
    sorted.sort_by(|a, b| a.participant_id.cmp(&b.participant_id));
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header()).map_err(table_err)?;
    for r in sorted {
        let mut rec = vec![r.participant_id.clone()];
        rec.extend(
            r.values
                .iter()
                .map(|v| v.map(|x| x.to_string()).unwrap_or_default()),
        );
        rec.push(format_flags(&r.flags));
        w.write_record(&rec).map_err(table_err)?;
    }
    w.flush().map_err(|e| FeatureError::Table(e.to_string()))?;
    Ok(())
}

pub fn read_feature_csv<R: Read>(reader: R) -> Result<Vec<FeatureDelta>, FeatureError> {
    let table_err = |e: csv::Error| FeatureError::Table(e.to_string());
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers().map_err(table_err)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| FeatureError::Table(format!("missing column {name}")))
    };
    let pid_col = col("pid")?;
    let var_cols: Vec<usize> = Variable::ALL
        .iter()
        .map(|v| col(v.column()))
        .collect::<Result<_, _>>()?;
    let flag_col = col(FLAGS_COLUMN).ok();

    let mut out = Vec::new();
    let mut seen = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(table_err)?;
        let line = i + 2;
        let pid = rec.get(pid_col).unwrap_or_default().to_owned();
        if seen.insert(pid.clone(), line).is_some() {
            return Err(FeatureError::Table(format!(
                "line {line}: duplicate pid {pid:?}"
            )));
        }
        let mut d = FeatureDelta::empty(&pid);
        for (k, &c) in var_cols.iter().enumerate() {
            let cell = rec.get(c).unwrap_or_default().trim();
            if !cell.is_empty() {
                let x: f64 = cell.parse().map_err(|_| {
                    FeatureError::Table(format!("line {line}: bad number {cell:?}"))
                })?;
                d.values[k] = Some(x);
            }
        }
        if let Some(c) = flag_col {
            d.flags = parse_flags(rec.get(c).unwrap_or_default())?;
        }
        out.push(d);
    }
    Ok(out)
}
