//! Time arithmetic: local clock mapping, before/after segmentation, short
//! intervals, late-night counts and inactivity gaps.
//!
//! Conventions: windows are half-open `[start, end)`, the late-night window
//! is `[22:00, 05:00)` wrapping midnight, an inactivity gap qualifies at
//! `>=` the threshold, and a short interval is strictly below its threshold.

use std::ops::Range;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, NaiveTime, Timelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::HourDistribution;
use crate::ingest::ActivityEvent;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("invalid analysis config: {0}")]
    Invalid(String),
}

/// Analysis windows and thresholds. Every field has a default, so `{}` is a
/// valid config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Local date-time splitting the before and after segments.
    #[serde(with = "local_datetime")]
    pub cutoff: NaiveDateTime,
    pub window_days: u32,
    /// Local date-time before which all data is ignored; clips the before window.
    #[serde(with = "opt_local_datetime")]
    pub discard_before: Option<NaiveDateTime>,
    /// Minutes east of UTC; overridden per participant where known.
    pub tz_offset: i32,
    pub inactivity_threshold_hours: f64,
    pub short_interval_minutes: f64,
    #[serde(with = "clock_time")]
    pub late_night_start: NaiveTime,
    #[serde(with = "clock_time")]
    pub late_night_end: NaiveTime,
    pub kl_epsilon: f64,
    /// Compare lexicon hits per token instead of raw counts.
    pub lexicon_per_token_rate: bool,
}

fn date_time(y: i32, m: u32, d: u32) -> NaiveDateTime {
    NaiveDate::from_ymd_opt(y, m, d)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid calendar date")
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            cutoff: date_time(2020, 3, 14),
            window_days: 76,
            discard_before: Some(date_time(2020, 1, 1)),
            tz_offset: 0,
            inactivity_threshold_hours: 7.0,
            short_interval_minutes: 5.0,
            late_night_start: NaiveTime::from_hms_opt(22, 0, 0).unwrap(),
            late_night_end: NaiveTime::from_hms_opt(5, 0, 0).unwrap(),
            kl_epsilon: 1e-6,
            lexicon_per_token_rate: false,
        }
    }
}

/// The before and after windows of one participant, as UTC instants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Windows {
    pub before: Range<DateTime<Utc>>,
    pub after: Range<DateTime<Utc>>,
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_owned()));
        if self.window_days == 0 {
            return bad("window_days must be > 0");
        }
        if !(self.inactivity_threshold_hours > 0.0) {
            return bad("inactivity_threshold_hours must be > 0");
        }
        if !(self.short_interval_minutes > 0.0) {
            return bad("short_interval_minutes must be > 0");
        }
        if !(self.kl_epsilon > 0.0 && self.kl_epsilon < 1.0) {
            return bad("kl_epsilon must lie in (0, 1)");
        }
        if self.tz_offset.abs() > 18 * 60 {
            return bad("tz_offset must be within +/-18h");
        }
        if self.late_night_start == self.late_night_end {
            return bad("late-night window is empty");
        }
        if self.discard_before.is_some_and(|d| d >= self.cutoff) {
            return bad("discard_before must precede cutoff");
        }
        Ok(())
    }

    pub fn from_json(doc: &str) -> Result<Self, ConfigError> {
        let cfg: Self =
            serde_json::from_str(doc).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Window boundaries for a participant `tz_offset` minutes east of UTC.
    pub fn windows(&self, tz_offset: i32) -> Windows {
        let span = Duration::days(self.window_days as i64);
        let mut start = self.cutoff - span;
        if let Some(floor) = self.discard_before {
            start = start.max(floor);
        }
        let to_utc = |local: NaiveDateTime| (local - Duration::minutes(tz_offset as i64)).and_utc();
        let cutoff = to_utc(self.cutoff);
        Windows {
            before: to_utc(start)..cutoff,
            after: cutoff..to_utc(self.cutoff + span),
        }
    }

    /// The same analysis moved by whole calendar years (e.g. `-1` for the
    /// previous-year seasonal control).
    pub fn shifted_years(&self, years: i32) -> Option<Self> {
        use chrono::Datelike;
        let shift = |d: NaiveDateTime| {
            d.date()
                .with_year(d.year() + years)
                .map(|nd| nd.and_time(d.time()))
        };
        Some(Self {
            cutoff: shift(self.cutoff)?,
            discard_before: match self.discard_before {
                Some(d) => Some(shift(d)?),
                None => None,
            },
            ..self.clone()
        })
    }

    fn short_interval_secs(&self) -> f64 {
        self.short_interval_minutes * 60.0
    }

    fn inactivity_secs(&self) -> f64 {
        self.inactivity_threshold_hours * 3600.0
    }
}

fn local(ts: DateTime<Utc>, tz_offset: i32) -> NaiveDateTime {
    ts.naive_utc() + Duration::minutes(tz_offset as i64)
}

/// Hour of day in `[0, 24)` after applying a fixed offset in minutes.
pub fn local_hour(ts: DateTime<Utc>, tz_offset: i32) -> u32 {
    local(ts, tz_offset).hour()
}

/// Split sorted events into the before and after windows; others are dropped.
pub fn segment<'a>(
    events: &'a [ActivityEvent],
    config: &AnalysisConfig,
    tz_offset: i32,
) -> (&'a [ActivityEvent], &'a [ActivityEvent]) {
    let w = config.windows(tz_offset);
    let idx = |t: DateTime<Utc>| events.partition_point(|e| e.ts < t);
    let (b0, b1) = (idx(w.before.start), idx(w.before.end));
    let a1 = idx(w.after.end);
    (&events[b0..b1], &events[b1..a1])
}

fn in_clock_window(t: NaiveTime, start: NaiveTime, end: NaiveTime) -> bool {
    if start < end {
        start <= t && t < end
    } else {
        t >= start || t < end
    }
}

/// Events whose local clock time falls in the late-night window.
pub fn late_night_count(events: &[ActivityEvent], config: &AnalysisConfig, tz_offset: i32) -> u64 {
    events
        .iter()
        .filter(|e| {
            in_clock_window(
                local(e.ts, tz_offset).time(),
                config.late_night_start,
                config.late_night_end,
            )
        })
        .count() as u64
}

/// Adjacent pairs closer than the short-interval threshold.
pub fn short_interval_count(events: &[ActivityEvent], config: &AnalysisConfig) -> u64 {
    let limit = config.short_interval_secs();
    events
        .windows(2)
        .filter(|w| ((w[1].ts - w[0].ts).num_seconds() as f64) < limit)
        .count() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InactivityPeriod {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl InactivityPeriod {
    pub fn duration(&self) -> Duration {
        self.end - self.start
    }

    pub fn midpoint(&self) -> DateTime<Utc> {
        self.start + (self.end - self.start) / 2
    }
}

/// Gaps between adjacent events of at least the inactivity threshold.
pub fn inactivity_periods(
    events: &[ActivityEvent],
    config: &AnalysisConfig,
) -> Vec<InactivityPeriod> {
    let limit = config.inactivity_secs();
    events
        .windows(2)
        .filter(|w| (w[1].ts - w[0].ts).num_seconds() as f64 >= limit)
        .map(|w| InactivityPeriod {
            start: w[0].ts,
            end: w[1].ts,
        })
        .collect()
}

/// Count of period midpoints per local hour bin.
pub fn midpoint_histogram(periods: &[InactivityPeriod], tz_offset: i32) -> [u64; 24] {
    let mut bins = [0u64; 24];
    for p in periods {
        bins[local_hour(p.midpoint(), tz_offset) as usize] += 1;
    }
    bins
}

/// Normalized midpoint distribution; uniform when there are no periods.
pub fn midpoint_distribution(periods: &[InactivityPeriod], tz_offset: i32) -> HourDistribution {
    HourDistribution::from_counts(&midpoint_histogram(periods, tz_offset))
        .unwrap_or_else(HourDistribution::uniform)
}

/// Raw per-window counts feeding the temporal features.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WindowCounts {
    pub lna: u64,
    pub sei: u64,
    pub total: u64,
    /// Local hour bin of each inactivity period midpoint.
    pub inactivity_midpoints: Vec<u8>,
}

impl WindowCounts {
    pub fn midpoint_histogram(&self) -> [u64; 24] {
        let mut bins = [0u64; 24];
        for &h in &self.inactivity_midpoints {
            bins[h as usize] += 1;
        }
        bins
    }
}

pub fn window_counts(
    events: &[ActivityEvent],
    config: &AnalysisConfig,
    tz_offset: i32,
) -> WindowCounts {
    WindowCounts {
        lna: late_night_count(events, config, tz_offset),
        sei: short_interval_count(events, config),
        total: events.len() as u64,
        inactivity_midpoints: inactivity_periods(events, config)
            .iter()
            .map(|p| local_hour(p.midpoint(), tz_offset) as u8)
            .collect(),
    }
}

mod local_datetime {
    use chrono::NaiveDateTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub(super) fn parse(s: &str) -> Result<NaiveDateTime, chrono::ParseError> {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
            .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
    }

    pub fn serialize<S: Serializer>(d: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&d.format("%Y-%m-%dT%H:%M:%S").to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
        let s = String::deserialize(d)?;
        parse(&s).map_err(serde::de::Error::custom)
    }
}

mod opt_local_datetime {
    use chrono::NaiveDateTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Option<NaiveDateTime>, s: S) -> Result<S::Ok, S::Error> {
        match d {
            Some(d) => super::local_datetime::serialize(d, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<NaiveDateTime>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| super::local_datetime::parse(&s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

mod clock_time {
    use chrono::NaiveTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &NaiveTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.format("%H:%M").to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveTime, D::Error> {
        let s = String::deserialize(d)?;
        NaiveTime::parse_from_str(&s, "%H:%M")
            .or_else(|_| NaiveTime::parse_from_str(&s, "%H:%M:%S"))
            .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::EventKind;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn at(s: &str) -> DateTime<Utc> {
        DateTime::parse_from_rfc3339(s).unwrap().with_timezone(&Utc)
    }

    fn ev(ts: DateTime<Utc>) -> ActivityEvent {
        ActivityEvent {
            participant_id: "p".into(),
            ts,
            platform: EventKind::Query.platform(),
            kind: EventKind::Query,
            text: String::new(),
            url: None,
        }
    }

    fn evs(stamps: &[&str]) -> Vec<ActivityEvent> {
        stamps.iter().map(|s| ev(at(s))).collect()
    }

    #[test]
    fn local_hours() {
        assert_eq!(local_hour(at("2020-02-01T03:30:00Z"), -300), 22);
        assert_eq!(local_hour(at("2020-02-01T00:10:00Z"), 120), 2);
        assert_eq!(local_hour(at("2020-02-01T17:59:59Z"), 0), 17);
    }

    #[test]
    fn segment_boundaries() {
        let cfg = AnalysisConfig::default();
        let xs = evs(&[
            "2019-12-31T12:00:00Z",
            "2020-03-13T12:00:00Z",
            "2020-03-14T00:00:00Z",
            "2020-03-15T12:00:00Z",
            "2020-06-15T12:00:00Z",
        ]);
        let (before, after) = segment(&xs, &cfg, 0);
        assert_eq!(before, &xs[1..2]);
        assert_eq!(after, &xs[2..4]);
        let (b, a) = segment(&[], &cfg, 0);
        assert!(b.is_empty() && a.is_empty());
    }

    #[test]
    fn segment_uses_local_cutoff() {
        let cfg = AnalysisConfig::default();
        // 03:00Z on the 14th is still the 13th at UTC-5
        let xs = evs(&["2020-03-14T03:00:00Z", "2020-03-14T05:00:00Z"]);
        let (before, after) = segment(&xs, &cfg, -300);
        assert_eq!(before.len(), 1);
        assert_eq!(after.len(), 1);
    }

    #[test]
    fn late_night_boundaries() {
        let cfg = AnalysisConfig::default();
        let count = |s: &[&str]| late_night_count(&evs(s), &cfg, 0);
        assert_eq!(count(&["2020-02-01T23:30:00Z"]), 1);
        assert_eq!(count(&["2020-02-01T05:00:00Z"]), 0);
        assert_eq!(count(&["2020-02-01T21:59:00Z"]), 0);
        assert_eq!(count(&["2020-02-01T04:59:00Z"]), 1);
        assert_eq!(count(&["2020-02-01T22:00:00Z"]), 1);
    }

    #[test]
    fn short_interval_boundaries() {
        let cfg = AnalysisConfig::default();
        let base = at("2020-02-01T10:00:00Z");
        let xs: Vec<_> = [0, 299, 599, 900]
            .iter()
            .map(|s| ev(base + Duration::seconds(*s)))
            .collect();
        assert_eq!(short_interval_count(&xs, &cfg), 1);
        assert_eq!(short_interval_count(&xs[..1], &cfg), 0);
        let xs: Vec<_> = (0..4)
            .map(|i| ev(base + Duration::seconds(60 * i)))
            .collect();
        assert_eq!(short_interval_count(&xs, &cfg), 3);
    }

    #[test]
    fn inactivity_gaps() {
        let cfg = AnalysisConfig::default();
        let p = inactivity_periods(
            &evs(&["2020-02-01T22:00:00Z", "2020-02-02T06:00:00Z"]),
            &cfg,
        );
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].duration(), Duration::hours(8));
        assert!(inactivity_periods(
            &evs(&["2020-02-01T22:00:00Z", "2020-02-01T23:00:00Z"]),
            &cfg
        )
        .is_empty());
        let exact = inactivity_periods(
            &evs(&["2020-02-01T10:00:00Z", "2020-02-01T17:00:00Z"]),
            &cfg,
        );
        assert_eq!(exact.len(), 1);
    }

    #[test]
    fn midpoint_binning() {
        let p = InactivityPeriod {
            start: at("2020-02-01T23:00:00Z"),
            end: at("2020-02-02T07:00:00Z"),
        };
        assert_eq!(local_hour(p.midpoint(), 0), 3);
        let d = midpoint_distribution(&[p], 0);
        assert_eq!(d.bins()[3], 1.0);

        let two = [
            InactivityPeriod {
                start: at("2020-02-01T23:10:00Z"),
                end: at("2020-02-02T07:10:00Z"),
            },
            InactivityPeriod {
                start: at("2020-02-02T23:40:00Z"),
                end: at("2020-02-03T08:00:00Z"),
            },
        ];
        assert_eq!(midpoint_distribution(&two, 0).bins()[3], 1.0);
        let u = midpoint_distribution(&[], 0);
        assert!(u.bins().iter().all(|b| *b == 1.0 / 24.0));
    }

    #[test]
    fn config_round_trip_and_defaults() {
        let cfg = AnalysisConfig::from_json("{}").unwrap();
        assert_eq!(cfg, AnalysisConfig::default());
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"cutoff\":\"2020-03-14T00:00:00\""));
        assert!(json.contains("\"late_night_start\":\"22:00\""));
        assert_eq!(AnalysisConfig::from_json(&json).unwrap(), cfg);
        let custom =
            AnalysisConfig::from_json(r#"{"cutoff":"2020-03-15T00:00","window_days":30}"#).unwrap();
        assert_eq!(custom.window_days, 30);
        assert!(AnalysisConfig::from_json(r#"{"window_days":0}"#).is_err());
        assert!(AnalysisConfig::from_json(r#"{"kl_epsilon":1.5}"#).is_err());
        assert!(AnalysisConfig::from_json(r#"{"bogus":1}"#).is_err());
    }

    #[test]
    fn previous_year_windows() {
        let cfg = AnalysisConfig::default().shifted_years(-1).unwrap();
        let w = cfg.windows(0);
        assert_eq!(w.before.start, at("2019-01-01T00:00:00Z"));
        assert_eq!(w.after.start, at("2019-03-14T00:00:00Z"));
    }

    fn arb_stream() -> impl Strategy<Value = Vec<ActivityEvent>> {
        prop::collection::vec(0i64..(150 * 86_400), 0..200).prop_map(|mut secs| {
            secs.sort();
            let origin = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
            secs.into_iter()
                .map(|s| ev(origin + Duration::seconds(s)))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn segments_are_disjoint_subsets(xs in arb_stream(), tz in -600i32..600) {
            let cfg = AnalysisConfig::default();
            let (b, a) = segment(&xs, &cfg, tz);
            let w = cfg.windows(tz);
            prop_assert!(b.iter().all(|e| w.before.contains(&e.ts)));
            prop_assert!(a.iter().all(|e| w.after.contains(&e.ts)));
            prop_assert!(b.len() + a.len() <= xs.len());
        }

        #[test]
        fn whole_day_shift_preserves_counts(xs in arb_stream(), days in -40i64..40) {
            let cfg = AnalysisConfig::default();
            let shifted_cfg = AnalysisConfig {
                cutoff: cfg.cutoff + Duration::days(days),
                discard_before: cfg.discard_before.map(|d| d + Duration::days(days)),
                ..cfg.clone()
            };
            let moved: Vec<_> = xs.iter().map(|e| ev(e.ts + Duration::days(days))).collect();
            let (b0, a0) = segment(&xs, &cfg, 0);
            let (b1, a1) = segment(&moved, &shifted_cfg, 0);
            prop_assert_eq!(window_counts(b0, &cfg, 0), window_counts(b1, &shifted_cfg, 0));
            prop_assert_eq!(window_counts(a0, &cfg, 0), window_counts(a1, &shifted_cfg, 0));
        }

        #[test]
        fn periods_disjoint_and_long(xs in arb_stream()) {
            let cfg = AnalysisConfig::default();
            let ps = inactivity_periods(&xs, &cfg);
            for p in &ps {
                prop_assert!(p.duration() >= Duration::hours(7));
            }
            for w in ps.windows(2) {
                prop_assert!(w[0].end <= w[1].start);
            }
            let d = midpoint_distribution(&ps, 0);
            prop_assert!((d.bins().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn window_counts_respect_bounds(xs in arb_stream()) {
            let cfg = AnalysisConfig::default();
            let c = window_counts(&xs, &cfg, -300);
            prop_assert!(c.sei <= c.total.saturating_sub(1));
            prop_assert!(c.lna <= c.total);
        }
    }
}
