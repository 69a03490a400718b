//! Participants, survey scoring, group labels and the group-level analyses.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureDelta, Variable};
use crate::stats::{
    ancova, chi2_2x2, group_summary, holm, paired_t_test, uncorrected, ContingencyTable,
    Correction, GroupSummary, StatTestResult, StatsError,
};

pub const GAD7_ITEMS: usize = 7;
pub const PHQ9_ITEMS: usize = 9;
/// Minimum score increase that places a participant in a group.
pub const LABEL_THRESHOLD: i32 = 5;
/// Share of degenerate values above which a row is marked unreliable.
pub const UNRELIABLE_SHARE: f64 = 0.2;

#[derive(Debug, Error, PartialEq)]
pub enum CohortError {
    #[error("{survey} expects {expected} items, got {got}")]
    ItemCount {
        survey: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{survey} item {index} is {value}, expected 0-3")]
    ItemRange {
        survey: &'static str,
        index: usize,
        value: u8,
    },
    #[error("participant {0} is missing a survey round")]
    MissingRound(String),
    #[error("duplicate participant id {0}")]
    DuplicateId(String),
    #[error("no {0} participants in the analyzed cohort")]
    EmptyGroup(String),
    #[error("every analyzed participant is in the {0} group")]
    NoComparison(String),
    #[error("participant ids differ between cohort and features: {0}")]
    InconsistentIds(String),
    #[error("n < 2: {0} usable participant(s)")]
    TooFew(usize),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("invalid cohort document: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    Nonbinary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassYear {
    /// First and second year.
    Lower,
    /// Third and fourth year.
    Upper,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyRound {
    pub gad7: Vec<u8>,
    pub phq9: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Surveys {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r1: Option<SurveyRound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2: Option<SurveyRound>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub id: String,
    pub gender: Gender,
    pub us_citizen: bool,
    pub class_year: ClassYear,
    /// Minutes east of UTC.
    #[serde(default)]
    pub tz_offset: i32,
    pub surveys: Surveys,
    /// Path of the participant's canonical event file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Cohort {
    pub participants: Vec<Participant>,
}

impl Cohort {
    pub fn from_json(doc: &str) -> Result<Self, CohortError> {
        let c: Cohort = serde_json::from_str(doc).map_err(|e| CohortError::Json(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cohort serializes")
    }

    /// Unique ids and in-range survey items.
    pub fn validate(&self) -> Result<(), CohortError> {
        let mut seen = BTreeSet::new();
        for p in &self.participants {
            if !seen.insert(p.id.as_str()) {
                return Err(CohortError::DuplicateId(p.id.clone()));
            }
            for round in [&p.surveys.r1, &p.surveys.r2].into_iter().flatten() {
                score_gad7(&round.gad7)?;
                score_phq9(&round.phq9)?;
            }
        }
        Ok(())
    }
}

fn score(items: &[u8], survey: &'static str, expected: usize) -> Result<u32, CohortError> {
    if items.len() != expected {
        return Err(CohortError::ItemCount {
            survey,
            expected,
            got: items.len(),
        });
    }
    if let Some((index, &value)) = items.iter().enumerate().find(|(_, v)| **v > 3) {
        return Err(CohortError::ItemRange {
            survey,
            index,
            value,
        });
    }
    Ok(items.iter().map(|&v| v as u32).sum())
}

/// GAD-7 total, 0 to 21.
pub fn score_gad7(items: &[u8]) -> Result<u32, CohortError> {
    score(items, "GAD-7", GAD7_ITEMS)
}

/// PHQ-9 total, 0 to 27.
pub fn score_phq9(items: &[u8]) -> Result<u32, CohortError> {
    score(items, "PHQ-9", PHQ9_ITEMS)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupLabels {
    pub dep: bool,
    pub anx: bool,
    pub delta_phq9: i32,
    pub delta_gad7: i32,
}

pub fn label_groups(p: &Participant) -> Result<GroupLabels, CohortError> {
    let (Some(r1), Some(r2)) = (&p.surveys.r1, &p.surveys.r2) else {
        return Err(CohortError::MissingRound(p.id.clone()));
    };
    let delta_phq9 = score_phq9(&r2.phq9)? as i32 - score_phq9(&r1.phq9)? as i32;
    let delta_gad7 = score_gad7(&r2.gad7)? as i32 - score_gad7(&r1.gad7)? as i32;
    Ok(GroupLabels {
        dep: delta_phq9 >= LABEL_THRESHOLD,
        anx: delta_gad7 >= LABEL_THRESHOLD,
        delta_phq9,
        delta_gad7,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    Dep,
    Anx,
}

impl Grouping {
    pub fn member(self, l: &GroupLabels) -> bool {
        match self {
            Grouping::Dep => l.dep,
            Grouping::Anx => l.anx,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Grouping::Dep => "DEP",
            Grouping::Anx => "ANX",
        }
    }
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Grouping::Dep => "dep",
            Grouping::Anx => "anx",
        })
    }
}

impl FromStr for Grouping {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "dep" => Ok(Grouping::Dep),
            "anx" => Ok(Grouping::Anx),
            other => Err(format!("unknown grouping {other:?}; expected dep or anx")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Female,
    UsCitizen,
    LowerClass,
}

impl Factor {
    pub const ALL: [Factor; 3] = [Factor::Female, Factor::UsCitizen, Factor::LowerClass];

    pub fn holds(self, p: &Participant) -> bool {
        match self {
            Factor::Female => p.gender == Gender::Female,
            Factor::UsCitizen => p.us_citizen,
            Factor::LowerClass => p.class_year == ClassYear::Lower,
        }
    }

    /// 0/1 dummy used as a covariate.
    pub fn dummy(self, p: &Participant) -> f64 {
        if self.holds(p) {
            1.0
        } else {
            0.0
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Factor::Female => "female",
            Factor::UsCitizen => "us_citizen",
            Factor::LowerClass => "lower_class",
        }
    }
}

impl FromStr for Factor {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Factor::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown factor {s:?}"))
    }
}

/// Participants paired with their labels.
pub type Labeled<'a> = Vec<(&'a Participant, GroupLabels)>;

/// Participants with both survey rounds, with their labels.
pub fn labeled(cohort: &Cohort) -> Result<(Labeled<'_>, usize), CohortError> {
    let mut out = Vec::new();
    let mut missing = 0;
    for p in &cohort.participants {
        match label_groups(p) {
            Ok(l) => out.push((p, l)),
            Err(CohortError::MissingRound(_)) => missing += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((out, missing))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemographicRow {
    pub factor: Factor,
    pub grouping: Grouping,
    /// Rows: in group / not in group; columns: factor holds / does not.
    pub table: [[u64; 2]; 2],
    pub result: Option<StatTestResult>,
    /// Why the factor could not be tested.
    pub untestable: Option<String>,
}

/// One 2x2 chi-square per demographic factor against group membership.
pub fn demographic_tests(
    cohort: &Cohort,
    grouping: Grouping,
    correction: Correction,
) -> Result<Vec<DemographicRow>, CohortError> {
    let (people, _) = labeled(cohort)?;
    let mut rows = Vec::new();
    for factor in Factor::ALL {
        let mut cells = [[0u64; 2]; 2];
        for (p, l) in &people {
            let r = usize::from(!grouping.member(l));
            let c = usize::from(!factor.holds(p));
            cells[r][c] += 1;
        }
        let table = ContingencyTable { cells };
        let (result, untestable) = match chi2_2x2(&table, correction) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        rows.push(DemographicRow {
            factor,
            grouping,
            table: cells,
            result,
            untestable,
        });
    }
    Ok(rows)
}

/// How the ANCOVA covariates are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariatePolicy {
    /// Control a factor when its chi-square against either grouping has
    /// `p < alpha`.
    DataDriven {
        alpha: f64,
        correction: Correction,
    },
    Fixed(Vec<Factor>),
}

impl Default for CovariatePolicy {
    fn default() -> Self {
        CovariatePolicy::DataDriven {
            alpha: 0.05,
            correction: Correction::Yates,
        }
    }
}

pub fn select_covariates(
    cohort: &Cohort,
    policy: &CovariatePolicy,
) -> Result<Vec<Factor>, CohortError> {
    match policy {
        CovariatePolicy::Fixed(f) => Ok(f.clone()),
        CovariatePolicy::DataDriven { alpha, correction } => {
            let mut chosen = BTreeSet::new();
            for g in [Grouping::Dep, Grouping::Anx] {
                for row in demographic_tests(cohort, g, *correction)? {
                    if row.result.is_some_and(|r| r.p < *alpha) {
                        chosen.insert(row.factor);
                    }
                }
            }
            Ok(chosen.into_iter().collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub variable: Variable,
    /// In-group summary.
    pub a: Option<GroupSummary>,
    /// Comparison-group summary.
    pub b: Option<GroupSummary>,
    pub test: Option<StatTestResult>,
    pub error: Option<String>,
    pub holm_reject: bool,
    pub uncorrected_reject: bool,
    /// Participants dropped from this row for degenerate input.
    pub degenerate: usize,
    pub unreliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupAnalysis {
    pub grouping: Grouping,
    pub covariates: Vec<Factor>,
    pub alpha: f64,
    pub n_analyzed: usize,
    pub n_group: usize,
    /// Excluded listwise for a missing survey round.
    pub n_missing_survey: usize,
    pub rows: Vec<ReportRow>,
}

fn check_ids<'a>(
    people: &[(&'a Participant, GroupLabels)],
    features: &'a [FeatureDelta],
) -> Result<BTreeMap<&'a str, &'a FeatureDelta>, CohortError> {
    let mut by_id = BTreeMap::new();
    for f in features {
        if by_id.insert(f.participant_id.as_str(), f).is_some() {
            return Err(CohortError::DuplicateId(f.participant_id.clone()));
        }
    }
    let cohort_ids: BTreeSet<&str> = people.iter().map(|(p, _)| p.id.as_str()).collect();
    let missing: Vec<&str> = cohort_ids
        .iter()
        .filter(|id| !by_id.contains_key(*id))
        .copied()
        .collect();
    let unknown: Vec<&str> = by_id
        .keys()
        .filter(|id| !cohort_ids.contains(*id))
        .copied()
        .collect();
    if missing.is_empty() && unknown.is_empty() {
        return Ok(by_id);
    }
    let mut parts = Vec::new();
    if !missing.is_empty() {
        parts.push(format!("no features for [{}]", missing.join(", ")));
    }
    if !unknown.is_empty() {
        parts.push(format!("not in cohort [{}]", unknown.join(", ")));
    }
    Err(CohortError::InconsistentIds(parts.join("; ")))
}

/// Per-variable group summaries and ANCOVA, then Holm over the row p-values.
/// Participants are processed in id order, so input order never matters.
pub fn run_group_analysis(
    cohort: &Cohort,
    grouping: Grouping,
    features: &[FeatureDelta],
    covariates: &[Factor],
    alpha: f64,
) -> Result<GroupAnalysis, CohortError> {
    let (mut people, n_missing_survey) = labeled(cohort)?;
    people.sort_by(|a, b| a.0.id.cmp(&b.0.id));
    let by_id = check_ids(&people, features)?;
    let n_group = people.iter().filter(|(_, l)| grouping.member(l)).count();
    if n_group == 0 {
        return Err(CohortError::EmptyGroup(grouping.name().into()));
    }
    if n_group == people.len() {
        return Err(CohortError::NoComparison(grouping.name().into()));
    }

    let mut rows = Vec::new();
    for v in Variable::ALL {
        let mut y = Vec::new();
        let mut g = Vec::new();
        let mut covs: Vec<Vec<f64>> = vec![Vec::new(); covariates.len()];
        let mut degenerate = 0;
        for (p, l) in &people {
            let f = by_id[p.id.as_str()];
            match f.get(v) {
                Some(x) if !f.is_degenerate(v) => {
                    y.push(x);
                    g.push(grouping.member(l));
                    for (c, factor) in covs.iter_mut().zip(covariates) {
                        c.push(factor.dummy(p));
                    }
                }
                _ => degenerate += 1,
            }
        }
        let pick = |want: bool| -> Vec<f64> {
            y.iter()
                .zip(&g)
                .filter(|(_, gi)| **gi == want)
                .map(|(v, _)| *v)
                .collect()
        };
        let cov_refs: Vec<&[f64]> = covs.iter().map(Vec::as_slice).collect();
        let (test, error) = match ancova(&y, &g, &cov_refs) {
            Ok(t) => (Some(t), None),
            Err(e) => (None, Some(e.to_string())),
        };
        rows.push(ReportRow {
            variable: v,
            a: group_summary(&pick(true)).ok(),
            b: group_summary(&pick(false)).ok(),
            test,
            error,
            holm_reject: false,
            uncorrected_reject: false,
            degenerate,
            unreliable: degenerate as f64 > UNRELIABLE_SHARE * people.len() as f64,
        });
    }

    let tested: Vec<usize> = (0..rows.len())
        .filter(|&i| rows[i].test.is_some())
        .collect();
    let pvals: Vec<f64> = tested
        .iter()
        .map(|&i| rows[i].test.as_ref().unwrap().p)
        .collect();
    let h = holm(&pvals, alpha)?;
    let u = uncorrected(&pvals, alpha)?;
    for (k, &i) in tested.iter().enumerate() {
        rows[i].holm_reject = h[k];
        rows[i].uncorrected_reject = u[k];
    }

    Ok(GroupAnalysis {
        grouping,
        covariates: covariates.to_vec(),
        alpha,
        n_analyzed: people.len(),
        n_group,
        n_missing_survey,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeasonalRow {
    pub variable: Variable,
    pub n: usize,
    /// Pairs dropped because one year's value was degenerate.
    pub excluded: usize,
    pub result: Option<StatTestResult>,
    pub error: Option<String>,
}

/// Paired t-test per variable between each participant's change in the
/// study year and in the control year.
pub fn seasonal_control(
    control_year: &[FeatureDelta],
    study_year: &[FeatureDelta],
) -> Result<Vec<SeasonalRow>, CohortError> {
    let a: BTreeMap<&str, &FeatureDelta> = control_year
        .iter()
        .map(|f| (f.participant_id.as_str(), f))
        .collect();
    let mut pairs: Vec<(&FeatureDelta, &FeatureDelta)> = study_year
        .iter()
        .filter_map(|b| a.get(b.participant_id.as_str()).map(|a| (*a, b)))
        .collect();
    pairs.sort_by(|x, y| x.1.participant_id.cmp(&y.1.participant_id));
    if pairs.len() < 2 {
        return Err(CohortError::TooFew(pairs.len()));
    }
    let mut rows = Vec::new();
    for v in Variable::ALL {
        let mut xa = Vec::new();
        let mut xb = Vec::new();
        for (fa, fb) in &pairs {
            match (fa.get(v), fb.get(v)) {
                (Some(x), Some(y)) if !fa.is_degenerate(v) && !fb.is_degenerate(v) => {
                    xa.push(x);
                    xb.push(y);
                }
                _ => {}
            }
        }
        let excluded = study_year.len() - xa.len();
        let (result, error) = if xa.len() < 2 {
            (None, Some(CohortError::TooFew(xa.len()).to_string()))
        } else {
            match paired_t_test(&xb, &xa) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            }
        };
        rows.push(SeasonalRow {
            variable: v,
            n: xa.len(),
            excluded,
            result,
            error,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Flag, FlagReason};
    use proptest::prelude::*;

    fn round(gad: u32, phq: u32) -> SurveyRound {
        fn fill(total: u32, n: usize) -> Vec<u8> {
            let mut left = total;
            (0..n)
                .map(|_| {
                    let v = left.min(3);
                    left -= v;
                    v as u8
                })
                .collect()
        }
        SurveyRound {
            gad7: fill(gad, 7),
            phq9: fill(phq, 9),
        }
    }

    fn person(
        id: &str,
        gender: Gender,
        citizen: bool,
        lower: bool,
        dep: bool,
        anx: bool,
    ) -> Participant {
        Participant {
            id: id.into(),
            gender,
            us_citizen: citizen,
            class_year: if lower {
                ClassYear::Lower
            } else {
                ClassYear::Upper
            },
            tz_offset: -300,
            surveys: Surveys {
                r1: Some(round(3, 4)),
                r2: Some(round(
                    3 + if anx { 6 } else { 1 },
                    4 + if dep { 7 } else { 2 },
                )),
            },
            events: None,
        }
    }

    /// Cohort matching the published demographic margins.
    pub(crate) fn table1_cohort() -> Cohort {
        // (dep, anx, count, female, citizen, lower)
        let cells = [
            (true, true, 18, 15, 14, 12),
            (true, false, 2, 2, 1, 1),
            (false, true, 4, 2, 3, 3),
            (false, false, 25, 11, 21, 15),
        ];
        let mut ps = Vec::new();
        let mut nonfemale = 0;
        for (dep, anx, n, female, citizen, lower) in cells {
            for i in 0..n {
                let gender = if i < female {
                    Gender::Female
                } else {
                    nonfemale += 1;
                    if nonfemale <= 2 {
                        Gender::Nonbinary
                    } else {
                        Gender::Male
                    }
                };
                let id = format!("p{:02}", ps.len());
                ps.push(person(&id, gender, i < citizen, i < lower, dep, anx));
            }
        }
        Cohort { participants: ps }
    }

    #[test]
    fn scoring() {
        assert_eq!(score_gad7(&[0; 7]), Ok(0));
        assert_eq!(score_gad7(&[3; 7]), Ok(21));
        assert_eq!(score_phq9(&[3; 9]), Ok(27));
        assert_eq!(score_gad7(&[1; 7]), Ok(7));
        assert!(matches!(
            score_gad7(&[1; 6]),
            Err(CohortError::ItemCount { .. })
        ));
        assert!(matches!(
            score_phq9(&[0, 0, 4, 0, 0, 0, 0, 0, 0]),
            Err(CohortError::ItemRange { index: 2, .. })
        ));
    }

    #[test]
    fn labels_at_boundary() {
        let mut p = person("x", Gender::Male, true, true, false, false);
        p.surveys.r2 = Some(round(0, 9));
        let l = label_groups(&p).unwrap();
        assert_eq!(l.delta_phq9, 5);
        assert!(l.dep);
        assert_eq!(l.delta_gad7, -3);
        assert!(!l.anx);
        p.surveys.r2 = Some(round(0, 8));
        assert!(!label_groups(&p).unwrap().dep);
        p.surveys.r2 = None;
        assert_eq!(label_groups(&p), Err(CohortError::MissingRound("x".into())));
    }

    #[test]
    fn table1_proportions() {
        let c = table1_cohort();
        assert_eq!(c.participants.len(), 49);
        let (people, _) = labeled(&c).unwrap();
        let dep = people.iter().filter(|(_, l)| l.dep).count();
        let anx = people.iter().filter(|(_, l)| l.anx).count();
        let both = people.iter().filter(|(_, l)| l.dep && l.anx).count();
        assert_eq!((dep, anx, both), (20, 22, 18));
        let female = c
            .participants
            .iter()
            .filter(|p| p.gender == Gender::Female)
            .count();
        let lower = c
            .participants
            .iter()
            .filter(|p| p.class_year == ClassYear::Lower)
            .count();
        assert_eq!((female, lower), (30, 31));
    }

    #[test]
    fn table1_chi_squares() {
        let c = table1_cohort();
        let anx = demographic_tests(&c, Grouping::Anx, Correction::Yates).unwrap();
        assert_eq!(anx[0].table, [[17, 5], [13, 14]]);
        let female = anx[0].result.as_ref().unwrap();
        assert!((female.statistic - 3.2).abs() < 0.05);
        assert!((female.p - 0.07).abs() < 0.01);
        let citizen = anx[1].result.as_ref().unwrap();
        assert!(citizen.statistic < 0.1 && (citizen.p - 0.99).abs() < 0.01);
        let dep = demographic_tests(&c, Grouping::Dep, Correction::Yates).unwrap();
        assert_eq!(dep[0].table, [[17, 3], [13, 16]]);
        let female = dep[0].result.as_ref().unwrap();
        assert!((female.statistic - 6.4).abs() < 0.05);
        assert!((female.p - 0.01).abs() < 0.005);
        assert_eq!(
            select_covariates(&c, &CovariatePolicy::default()).unwrap(),
            vec![Factor::Female]
        );
    }

    #[test]
    fn all_female_is_untestable() {
        let mut c = table1_cohort();
        for p in &mut c.participants {
            p.gender = Gender::Female;
        }
        let rows = demographic_tests(&c, Grouping::Dep, Correction::Yates).unwrap();
        assert!(rows[0].result.is_none());
        assert!(rows[0].untestable.is_some());
        assert!(rows[1].result.is_some());
    }

    fn deltas(c: &Cohort, f: impl Fn(usize, &Participant) -> f64) -> Vec<FeatureDelta> {
        c.participants
            .iter()
            .enumerate()
            .map(|(i, p)| FeatureDelta {
                participant_id: p.id.clone(),
                values: [Some(f(i, p)); 9],
                flags: vec![],
                unresolved: [0, 0],
            })
            .collect()
    }

    fn wiggle(i: usize) -> f64 {
        ((i * 37 % 11) as f64 - 5.0) / 20.0
    }

    #[test]
    fn planted_effect_and_reordering() {
        let c = table1_cohort();
        let (people, _) = labeled(&c).unwrap();
        let dep: BTreeMap<String, bool> =
            people.iter().map(|(p, l)| (p.id.clone(), l.dep)).collect();
        let mut feats = deltas(&c, |i, _| wiggle(i));
        for f in &mut feats {
            if dep[&f.participant_id] {
                f.values[0] = Some(f.values[0].unwrap() + 1.0);
            }
        }
        let a = run_group_analysis(&c, Grouping::Dep, &feats, &[Factor::Female], 0.05).unwrap();
        assert_eq!(a.rows[0].test.as_ref().unwrap().df.as_pair(), (1.0, 46.0));
        assert!(a.rows[0].holm_reject);
        assert!(a.rows[1..].iter().all(|r| !r.holm_reject));
        assert_eq!(a.rows[0].a.unwrap().n, 20);
        assert_eq!(a.rows[0].b.unwrap().n, 29);

        let mut shuffled_cohort = c.clone();
        shuffled_cohort.participants.reverse();
        let mut shuffled_feats = feats.clone();
        shuffled_feats.rotate_left(7);
        let b = run_group_analysis(
            &shuffled_cohort,
            Grouping::Dep,
            &shuffled_feats,
            &[Factor::Female],
            0.05,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unreliable_and_constant_covariate() {
        let c = table1_cohort();
        let mut feats = deltas(&c, |i, _| wiggle(i));
        for f in feats.iter_mut().take(11) {
            f.values[2] = None;
            f.flags.push(Flag {
                variable: Variable::SeiPct,
                reason: FlagReason::ZeroBaseline,
            });
        }
        let a = run_group_analysis(&c, Grouping::Anx, &feats, &[Factor::Female], 0.05).unwrap();
        assert!(a.rows[2].unreliable);
        assert_eq!(a.rows[2].degenerate, 11);
        assert!(!a.rows[0].unreliable);

        let mut all_f = c.clone();
        all_f
            .participants
            .iter_mut()
            .for_each(|p| p.gender = Gender::Female);
        let s = run_group_analysis(&all_f, Grouping::Anx, &feats, &[Factor::Female], 0.05).unwrap();
        assert!(s.rows.iter().all(|r| r.test.is_none()));
        assert!(s.rows[0].error.as_deref().unwrap().contains("singular"));
    }

    #[test]
    fn group_errors() {
        let c = table1_cohort();
        let feats = deltas(&c, |i, _| wiggle(i));
        let mut none_dep = c.clone();
        for p in &mut none_dep.participants {
            p.surveys.r2 = p.surveys.r1.clone();
        }
        assert_eq!(
            run_group_analysis(&none_dep, Grouping::Dep, &feats, &[], 0.05).unwrap_err(),
            CohortError::EmptyGroup("DEP".into())
        );
        let err = run_group_analysis(&c, Grouping::Dep, &feats[1..], &[], 0.05).unwrap_err();
        assert!(err.to_string().contains("p00"));
    }

    #[test]
    fn no_covariate_matches_pooled_t() {
        let c = table1_cohort();
        let feats = deltas(&c, |i, p| {
            wiggle(i) + if p.gender == Gender::Female { 0.3 } else { 0.0 }
        });
        let a = run_group_analysis(&c, Grouping::Anx, &feats, &[], 0.05).unwrap();
        let (people, _) = labeled(&c).unwrap();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (i, (p, l)) in people.iter().enumerate() {
            let v = feats[i].values[0].unwrap();
            assert_eq!(feats[i].participant_id, p.id);
            if l.anx {
                x.push(v)
            } else {
                y.push(v)
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let ss = |v: &[f64]| {
            let m = mean(v);
            v.iter().map(|a| (a - m) * (a - m)).sum::<f64>()
        };
        let (n1, n2) = (x.len() as f64, y.len() as f64);
        let sp2 = (ss(&x) + ss(&y)) / (n1 + n2 - 2.0);
        let t = (mean(&x) - mean(&y)) / (sp2 * (1.0 / n1 + 1.0 / n2)).sqrt();
        let f = a.rows[0].test.as_ref().unwrap().statistic;
        assert!((f - t * t).abs() < 1e-9 * f.max(1.0));
    }

    #[test]
    fn seasonal_control_cases() {
        let c = table1_cohort();
        let year_a = deltas(&c, |i, _| wiggle(i));
        let mut year_b = deltas(&c, |i, _| wiggle(i) + 0.3 + wiggle(i * 7 + 3) * 0.1);
        year_b[0].values = [None; 9];
        year_b[0].flags = Variable::ALL
            .iter()
            .map(|v| Flag {
                variable: *v,
                reason: FlagReason::EmptyWindow,
            })
            .collect();
        let rows = seasonal_control(&year_a, &year_b).unwrap();
        assert_eq!(rows[0].n, 48);
        assert_eq!(rows[0].excluded, 1);
        let r = rows[0].result.as_ref().unwrap();
        assert!(r.statistic > 0.0 && r.p < 0.001);

        let same = seasonal_control(&year_a, &year_a).unwrap();
        assert!(same[0].result.is_none());
        assert!(same[0].error.as_deref().unwrap().contains("degenerate"));
        assert_eq!(
            seasonal_control(&year_a[..1], &year_a[..1]).unwrap_err(),
            CohortError::TooFew(1)
        );
    }

    #[test]
    fn cohort_json_round_trip() {
        let c = table1_cohort();
        let back = Cohort::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        let doc = r#"{"participants":[{"id":"a","gender":"female","us_citizen":true,"class_year":"lower","tz_offset":-300,
            "surveys":{"r1":{"gad7":[0,0,0,0,0,0,0],"phq9":[0,0,0,0,0,0,0,0,0]},"r2":{"gad7":[1,1,1,1,1,1,1],"phq9":[3,3,0,0,0,0,0,0,0]}},
            "events":"events/a.ndjson"}]}"#;
        let c = Cohort::from_json(doc).unwrap();
        let l = label_groups(&c.participants[0]).unwrap();
        assert!(l.dep && l.anx);
        let bad = doc.replace("[3,3,0", "[4,3,0");
        assert!(matches!(
            Cohort::from_json(&bad),
            Err(CohortError::ItemRange { .. })
        ));
    }

    proptest! {
        #[test]
        fn scores_are_monotone(items in prop::collection::vec(0u8..=3, 9), idx in 0usize..9) {
            let base = score_phq9(&items).unwrap();
            let mut up = items.clone();
            if up[idx] < 3 {
                up[idx] += 1;
            }
            prop_assert!(score_phq9(&up).unwrap() >= base);
            let g = &items[..7];
            prop_assert!(score_gad7(g).unwrap() <= 21);
        }
    }
}
