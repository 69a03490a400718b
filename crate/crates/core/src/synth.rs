//! Seeded synthetic cohorts with planted behavior shifts.

use std::ops::Range;

use chrono::{DateTime, Duration, Utc};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{ClassYear, Cohort, Gender, Grouping, Participant, SurveyRound, Surveys};
use crate::features::{extract_feature_delta, FeatureDelta};
use crate::ingest::{ActivityEvent, EventKind};
use crate::lexicon::{CategoryProvider, Lexicon};
use crate::timeline::AnalysisConfig;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, SynthError> {
    Err(SynthError::Invalid(msg.into()))
}

/// Word-source weights for generated text.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LexiconMix {
    pub personal_concern: f64,
    pub negative_emotion: f64,
    pub social: f64,
    pub health: f64,
    pub neutral: f64,
}

impl Default for LexiconMix {
    fn default() -> Self {
        Self {
            personal_concern: 0.08,
            negative_emotion: 0.06,
            social: 0.08,
            health: 0.05,
            neutral: 0.73,
        }
    }
}

impl LexiconMix {
    fn zero() -> Self {
        Self {
            personal_concern: 0.0,
            negative_emotion: 0.0,
            social: 0.0,
            health: 0.0,
            neutral: 0.0,
        }
    }

    fn weights(&self) -> [f64; 5] {
        [
            self.personal_concern,
            self.negative_emotion,
            self.social,
            self.health,
            self.neutral,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CategoryMix {
    pub adult: f64,
    pub news: f64,
    pub other: f64,
}

impl Default for CategoryMix {
    fn default() -> Self {
        Self {
            adult: 0.03,
            news: 0.10,
            other: 0.87,
        }
    }
}

impl CategoryMix {
    fn zero() -> Self {
        Self {
            adult: 0.0,
            news: 0.0,
            other: 0.0,
        }
    }

    fn weights(&self) -> [f64; 3] {
        [self.adult, self.news, self.other]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KindMix {
    pub query: f64,
    pub url_visit: f64,
    pub video_watch: f64,
    pub youtube_search: f64,
}

impl Default for KindMix {
    fn default() -> Self {
        Self {
            query: 0.45,
            url_visit: 0.2,
            video_watch: 0.3,
            youtube_search: 0.05,
        }
    }
}

impl KindMix {
    fn weights(&self) -> [f64; 4] {
        [
            self.query,
            self.url_visit,
            self.video_watch,
            self.youtube_search,
        ]
    }
}

/// Nightly zero-intensity stretch in local clock hours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SleepGap {
    pub start_hour: f64,
    pub duration_hours: f64,
}

impl SleepGap {
    fn covers(&self, hour: f64) -> bool {
        let from = self.start_hour.rem_euclid(24.0);
        let offset = (hour - from).rem_euclid(24.0);
        offset < self.duration_hours
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviorProfile {
    /// Expected events per local clock hour while awake.
    pub hourly_intensity: [f64; 24],
    /// Chance that an event spawns one follow-up within five minutes.
    pub burst_prob: f64,
    pub lexicon_mix: LexiconMix,
    pub category_mix: CategoryMix,
    pub kind_mix: KindMix,
    pub sleep_gap: SleepGap,
}

impl Default for BehaviorProfile {
    fn default() -> Self {
        let mut hourly = [0.0; 24];
        for (h, v) in hourly.iter_mut().enumerate() {
            *v = match h {
                22 | 23 | 0 | 1 => 0.6,
                2..=9 => 0.5,
                _ => 0.7,
            };
        }
        Self {
            hourly_intensity: hourly,
            burst_prob: 0.3,
            lexicon_mix: LexiconMix::default(),
            category_mix: CategoryMix::default(),
            kind_mix: KindMix::default(),
            sleep_gap: SleepGap {
                start_hour: 2.0,
                duration_hours: 8.0,
            },
        }
    }
}

fn check_weights(name: &str, w: &[f64]) -> Result<(), SynthError> {
    if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return invalid(format!("{name} weights must be finite and >= 0"));
    }
    if w.iter().sum::<f64>() <= 0.0 {
        return invalid(format!("{name} weights must not all be zero"));
    }
    Ok(())
}

impl BehaviorProfile {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self
            .hourly_intensity
            .iter()
            .any(|x| !(x.is_finite() && *x >= 0.0))
        {
            return invalid("hourly intensities must be finite and >= 0");
        }
        if !(0.0..=1.0).contains(&self.burst_prob) {
            return invalid("burst_prob must lie in [0, 1]");
        }
        let g = self.sleep_gap;
        if !g.start_hour.is_finite() || !(7.0..24.0).contains(&g.duration_hours) {
            return invalid("sleep gap must last at least 7 and under 24 hours");
        }
        check_weights("lexicon_mix", &self.lexicon_mix.weights())?;
        check_weights("category_mix", &self.category_mix.weights())?;
        check_weights("kind_mix", &self.kind_mix.weights())?;
        Ok(())
    }

    /// Rate per hour after the sleep mask.
    pub fn effective_intensity(&self) -> [f64; 24] {
        let mut out = self.hourly_intensity;
        for (h, v) in out.iter_mut().enumerate() {
            if self.sleep_gap.covers(h as f64) || self.sleep_gap.covers(h as f64 + 0.999) {
                *v = 0.0;
            }
        }
        out
    }

    pub fn expected_daily_events(&self) -> f64 {
        self.effective_intensity().iter().sum::<f64>() * (1.0 + self.burst_prob)
    }
}

fn is_late_hour(h: usize) -> bool {
    !(5..22).contains(&h)
}

/// Changes applied to the after-cutoff profile of affected participants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftSpec {
    /// Multiplies late-night (22:00-05:00) intensity; other hours are rescaled
    /// so the expected daily volume is unchanged.
    pub lna_intensity_mult: f64,
    /// Multiplies every hour.
    pub intensity_mult: f64,
    pub burst_prob_delta: f64,
    pub sleep_gap_shift_hours: f64,
    pub lexicon_mix_delta: LexiconMix,
    pub category_mix_delta: CategoryMix,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        Self {
            lna_intensity_mult: 1.0,
            intensity_mult: 1.0,
            burst_prob_delta: 0.0,
            sleep_gap_shift_hours: 0.0,
            lexicon_mix_delta: LexiconMix::zero(),
            category_mix_delta: CategoryMix::zero(),
        }
    }
}

impl ShiftSpec {
    pub fn null() -> Self {
        Self::default()
    }

    pub fn is_null(&self) -> bool {
        *self == Self::null()
    }

    pub fn apply(&self, base: &BehaviorProfile) -> Result<BehaviorProfile, SynthError> {
        if !(self.lna_intensity_mult.is_finite() && self.lna_intensity_mult >= 0.0) {
            return invalid("lna_intensity_mult must be finite and >= 0");
        }
        if !(self.intensity_mult.is_finite() && self.intensity_mult >= 0.0) {
            return invalid("intensity_mult must be finite and >= 0");
        }
        let mut p = base.clone();
        p.sleep_gap.start_hour =
            (p.sleep_gap.start_hour + self.sleep_gap_shift_hours).rem_euclid(24.0);
        p.burst_prob += self.burst_prob_delta;

        if self.lna_intensity_mult != 1.0 {
            let eff = p.effective_intensity();
            let late: f64 = (0..24).filter(|&h| is_late_hour(h)).map(|h| eff[h]).sum();
            let rest: f64 = (0..24).filter(|&h| !is_late_hour(h)).map(|h| eff[h]).sum();
            if late <= 0.0 || rest <= 0.0 {
                return invalid(
                    "lna shift needs activity both inside and outside the late-night window",
                );
            }
            let k = (rest + late - self.lna_intensity_mult * late) / rest;
            if k < 0.0 {
                return invalid(
                    "lna_intensity_mult exceeds the daily volume available to redistribute",
                );
            }
            for (h, v) in p.hourly_intensity.iter_mut().enumerate() {
                *v *= if is_late_hour(h) {
                    self.lna_intensity_mult
                } else {
                    k
                };
            }
        }
        for v in p.hourly_intensity.iter_mut() {
            *v *= self.intensity_mult;
        }

        let l = &mut p.lexicon_mix;
        let d = self.lexicon_mix_delta;
        l.personal_concern += d.personal_concern;
        l.negative_emotion += d.negative_emotion;
        l.social += d.social;
        l.health += d.health;
        l.neutral += d.neutral;
        let c = &mut p.category_mix;
        let d = self.category_mix_delta;
        c.adult += d.adult;
        c.news += d.news;
        c.other += d.other;

        p.validate()?;
        Ok(p)
    }
}

const PERSONAL: &[&str] = &["work", "exam", "rent", "job", "salary", "career"];
const NEGEMO: &[&str] = &["sad", "worried", "angry", "stress", "lonely", "afraid"];
const SOCIAL: &[&str] = &["friends", "family", "talk", "party", "mom", "people"];
const HEALTH: &[&str] = &["doctor", "sick", "fever", "cough", "clinic", "pain"];
const NEUTRAL: &[&str] = &[
    "cats", "recipe", "weather", "music", "movie", "game", "pasta", "bike", "garden", "travel",
    "tutorial", "review", "lyrics", "trailer",
];
const ADULT_MARKER: &str = "nsfw";
const NEWS_MARKER: &str = "headlines";
const ID_CHARS: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz-_";

struct Sampler {
    kinds: WeightedIndex<f64>,
    words: WeightedIndex<f64>,
    cats: WeightedIndex<f64>,
}

impl Sampler {
    fn new(p: &BehaviorProfile) -> Self {
        Self {
            kinds: WeightedIndex::new(p.kind_mix.weights()).expect("validated weights"),
            words: WeightedIndex::new(p.lexicon_mix.weights()).expect("validated weights"),
            cats: WeightedIndex::new(p.category_mix.weights()).expect("validated weights"),
        }
    }

    fn text(&self, rng: &mut ChaCha8Rng, n: usize, out: &mut String) {
        for _ in 0..n {
            let pool = [PERSONAL, NEGEMO, SOCIAL, HEALTH, NEUTRAL][self.words.sample(rng)];
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(pool[rng.random_range(0..pool.len())]);
        }
    }

    fn slug(rng: &mut ChaCha8Rng, n: usize) -> String {
        (0..n)
            .map(|_| ID_CHARS[rng.random_range(0..ID_CHARS.len())] as char)
            .collect()
    }

    fn event(&self, rng: &mut ChaCha8Rng, pid: &str, ts: DateTime<Utc>) -> ActivityEvent {
        let kind = [
            EventKind::Query,
            EventKind::UrlVisit,
            EventKind::VideoWatch,
            EventKind::YoutubeSearch,
        ][self.kinds.sample(rng)];
        let cat = self.cats.sample(rng);
        let marker = [Some(ADULT_MARKER), Some(NEWS_MARKER), None][cat];
        let mut text = String::new();
        let url = match kind {
            EventKind::UrlVisit => {
                let host = ["adult-example.com", "www.nytimes.com", "www.example.org"][cat];
                Some(format!(
                    "https://{host}/{}",
                    Self::slug(rng, 8).to_lowercase()
                ))
            }
            EventKind::Query | EventKind::YoutubeSearch | EventKind::VideoWatch => {
                let words = if kind == EventKind::VideoWatch { 4 } else { 3 };
                self.text(rng, words, &mut text);
                if let Some(m) = marker {
                    text.push(' ');
                    text.push_str(m);
                }
                (kind == EventKind::VideoWatch)
                    .then(|| format!("https://www.youtube.com/watch?v={}", Self::slug(rng, 11)))
            }
        };
        ActivityEvent {
            participant_id: pid.to_owned(),
            ts,
            platform: kind.platform(),
            kind,
            text,
            url,
        }
    }
}

/// Seed of participant `index`'s stream under a cohort seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(seed ^ splitmix(index))
}

/// Events over `window` from a nonhomogeneous Poisson process (thinning
/// against the peak hourly rate) plus burst follow-ups. `tz_offset` maps UTC
/// to the local clock the profile is written in.
pub fn generate_stream(
    pid: &str,
    profile: &BehaviorProfile,
    window: Range<DateTime<Utc>>,
    tz_offset: i32,
    seed: u64,
) -> Vec<ActivityEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rates = profile.effective_intensity();
    let peak = rates.iter().cloned().fold(0.0, f64::max);
    let span = (window.end - window.start).num_seconds();
    if peak <= 0.0 || span <= 0 {
        return Vec::new();
    }
    let sampler = Sampler::new(profile);
    let gap = Exp::new(peak / 3600.0).expect("positive rate");
    let local0 = (window.start + Duration::minutes(tz_offset as i64))
        .naive_utc()
        .and_utc()
        .timestamp()
        .rem_euclid(86_400);
    let hour_at = |sec: i64| (((local0 + sec).rem_euclid(86_400)) / 3600) as usize;

    let mut out = Vec::new();
    let mut t = 0.0f64;
    loop {
        t += gap.sample(&mut rng);
        if t >= span as f64 {
            break;
        }
        let sec = t as i64;
        let h = hour_at(sec);
        if rng.random::<f64>() * peak >= rates[h] {
            continue;
        }
        out.push(sampler.event(&mut rng, pid, window.start + Duration::seconds(sec)));
        if rng.random_bool(profile.burst_prob) {
            let follow = sec + rng.random_range(1..300);
            if follow < span && rates[hour_at(follow)] > 0.0 {
                out.push(sampler.event(&mut rng, pid, window.start + Duration::seconds(follow)));
            }
        }
    }
    out.sort_by_key(|e| e.ts);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemographicMix {
    pub female: f64,
    pub us_citizen: f64,
    pub lower_class: f64,
    pub nonbinary: f64,
}

impl Default for DemographicMix {
    fn default() -> Self {
        Self {
            female: 0.6,
            us_citizen: 0.8,
            lower_class: 0.6,
            nonbinary: 0.04,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n: usize,
    pub seed: u64,
    pub base_profile: BehaviorProfile,
    pub shift: ShiftSpec,
    /// Share of participants affected; the count is rounded to nearest.
    pub group_fraction: f64,
    /// Which survey the affected participants' scores rise on.
    pub affected_grouping: Grouping,
    pub demographics: DemographicMix,
    pub tz_offset: i32,
    /// Log-scale standard deviation of each participant's overall activity.
    pub heterogeneity: f64,
    pub analysis: AnalysisConfig,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n: 49,
            seed: 0,
            base_profile: BehaviorProfile::default(),
            shift: ShiftSpec::null(),
            group_fraction: 0.41,
            affected_grouping: Grouping::Dep,
            demographics: DemographicMix::default(),
            tz_offset: -300,
            heterogeneity: 0.25,
            analysis: AnalysisConfig::default(),
        }
    }
}

impl SynthSpec {
    pub fn from_json(doc: &str) -> Result<Self, SynthError> {
        serde_json::from_str(doc).map_err(|e| SynthError::Invalid(e.to_string()))
    }

    pub fn n_affected(&self) -> usize {
        (self.n as f64 * self.group_fraction).round() as usize
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n < 4 {
            return invalid("n must be at least 4");
        }
        if !(0.0..=1.0).contains(&self.group_fraction) {
            return invalid("group_fraction must lie in [0, 1]");
        }
        let k = self.n_affected();
        if k == 0 || k == self.n {
            return invalid(format!("{k} of {} affected leaves a group empty", self.n));
        }
        if !(self.heterogeneity.is_finite() && self.heterogeneity >= 0.0) {
            return invalid("heterogeneity must be finite and >= 0");
        }
        let d = self.demographics;
        for (name, v) in [
            ("female", d.female),
            ("us_citizen", d.us_citizen),
            ("lower_class", d.lower_class),
            ("nonbinary", d.nonbinary),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return invalid(format!("demographics.{name} must lie in [0, 1]"));
            }
        }
        if d.female + d.nonbinary > 1.0 {
            return invalid("female and nonbinary shares exceed 1");
        }
        self.analysis
            .validate()
            .map_err(|e| SynthError::Invalid(e.to_string()))?;
        self.base_profile.validate()?;
        self.shift.apply(&self.base_profile)?;
        Ok(())
    }

    /// Before span and an after span of the same length, in UTC.
    pub fn stream_windows(&self, tz_offset: i32) -> (Range<DateTime<Utc>>, Range<DateTime<Utc>>) {
        let w = self.analysis.windows(tz_offset);
        let len = w.before.end - w.before.start;
        (w.before.clone(), w.after.start..w.after.start + len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub n: usize,
    pub affected_grouping: Grouping,
    /// Ids of participants given the shifted profile.
    pub affected: Vec<String>,
    pub shift: ShiftSpec,
}

#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub cohort: Cohort,
    /// Sorted event streams, aligned with `cohort.participants`.
    pub events: Vec<Vec<ActivityEvent>>,
    pub ground_truth: GroundTruth,
}

impl SyntheticCohort {
    /// Feature deltas for every participant, in cohort order.
    pub fn features(
        &self,
        config: &AnalysisConfig,
        lexicon: &Lexicon,
        provider: &dyn CategoryProvider,
    ) -> Vec<FeatureDelta> {
        self.cohort
            .participants
            .par_iter()
            .zip(&self.events)
            .map(|(p, xs)| extract_feature_delta(&p.id, xs, config, p.tz_offset, lexicon, provider))
            .collect()
    }
}

/// Item vector summing to `total`, filled greedily from the first item.
pub fn fill_items(total: u32, items: usize) -> Vec<u8> {
    let mut left = total;
    (0..items)
        .map(|_| {
            let v = left.min(3);
            left -= v;
            v as u8
        })
        .collect()
}

fn survey_pair(rng: &mut ChaCha8Rng, dep_rise: bool, anx_rise: bool) -> Surveys {
    let delta = |rng: &mut ChaCha8Rng, rise: bool, base: i32, max: i32| -> (u32, u32) {
        let d = if rise {
            rng.random_range(5..=9)
        } else {
            rng.random_range(-3..=4)
        };
        let after = (base + d).clamp(0, max);
        (base as u32, after as u32)
    };
    let gad_base = rng.random_range(0..=8);
    let phq_base = rng.random_range(0..=10);
    let (g1, g2) = delta(rng, anx_rise, gad_base, 21);
    let (p1, p2) = delta(rng, dep_rise, phq_base, 27);
    Surveys {
        r1: Some(SurveyRound {
            gad7: fill_items(g1, 7),
            phq9: fill_items(p1, 9),
        }),
        r2: Some(SurveyRound {
            gad7: fill_items(g2, 7),
            phq9: fill_items(p2, 9),
        }),
    }
}

pub fn participant_id(index: usize) -> String {
    format!("p{index:03}")
}

/// Scale every hourly rate by `factor`.
pub fn scaled(profile: &BehaviorProfile, factor: f64) -> BehaviorProfile {
    let mut p = profile.clone();
    p.hourly_intensity.iter_mut().for_each(|v| *v *= factor);
    p
}

/// Build a cohort whose affected participants get the shifted after-window
/// profile and a survey rise on the affected grouping.
pub fn generate_cohort(spec: &SynthSpec) -> Result<SyntheticCohort, SynthError> {
    spec.validate()?;
    let shifted_base = spec.shift.apply(&spec.base_profile)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.n_affected();
    let mut affected = vec![false; spec.n];
    for i in sample(&mut rng, spec.n, k) {
        affected[i] = true;
    }
    let activity = Normal::new(0.0, spec.heterogeneity.max(f64::MIN_POSITIVE)).expect("valid sd");

    let mut participants = Vec::with_capacity(spec.n);
    let mut scales = Vec::with_capacity(spec.n);
    for (i, &hit) in affected.iter().enumerate() {
        let d = spec.demographics;
        let u: f64 = rng.random();
        let gender = if u < d.female {
            Gender::Female
        } else if u < d.female + d.nonbinary {
            Gender::Nonbinary
        } else {
            Gender::Male
        };
        let us_citizen = rng.random_bool(d.us_citizen);
        let class_year = if rng.random_bool(d.lower_class) {
            ClassYear::Lower
        } else {
            ClassYear::Upper
        };
        let (dep, anx) = match spec.affected_grouping {
            Grouping::Dep => (hit, false),
            Grouping::Anx => (false, hit),
        };
        let surveys = survey_pair(&mut rng, dep, anx);
        let scale = if spec.heterogeneity > 0.0 {
            activity.sample(&mut rng).exp()
        } else {
            1.0
        };
        scales.push(scale);
        let id = participant_id(i);
        participants.push(Participant {
            events: Some(format!("events/{id}.ndjson")),
            id,
            gender,
            us_citizen,
            class_year,
            tz_offset: spec.tz_offset,
            surveys,
        });
    }

    let (before, after) = spec.stream_windows(spec.tz_offset);
    let events: Vec<Vec<ActivityEvent>> = (0..spec.n)
        .into_par_iter()
        .map(|i| {
            let pid = participant_id(i);
            let seed = derive_seed(spec.seed, i as u64);
            let pre = scaled(&spec.base_profile, scales[i]);
            let post = scaled(
                if affected[i] {
                    &shifted_base
                } else {
                    &spec.base_profile
                },
                scales[i],
            );
            let mut xs = generate_stream(&pid, &pre, before.clone(), spec.tz_offset, seed);
            xs.extend(generate_stream(
                &pid,
                &post,
                after.clone(),
                spec.tz_offset,
                derive_seed(seed, u64::MAX),
            ));
            xs
        })
        .collect();

    let ground_truth = GroundTruth {
        seed: spec.seed,
        n: spec.n,
        affected_grouping: spec.affected_grouping,
        affected: (0..spec.n)
            .filter(|&i| affected[i])
            .map(participant_id)
            .collect(),
        shift: spec.shift.clone(),
    };
    Ok(SyntheticCohort {
        cohort: Cohort { participants },
        events,
        ground_truth,
    })
}
