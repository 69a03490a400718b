//! Simulation oracles: planted shifts must be recovered, null shifts must not.

use rayon::prelude::*;

use shiftlens::cohort::{run_group_analysis, seasonal_control, Factor, Grouping};
use shiftlens::features::{extract_feature_delta, FeatureDelta, Variable};
use shiftlens::lexicon::{Lexicon, OfflineProvider};
use shiftlens::synth::{
    derive_seed, generate_cohort, generate_stream, scaled, BehaviorProfile, ShiftSpec, SynthSpec,
};
use shiftlens::timeline::AnalysisConfig;

fn short_config(days: u32) -> AnalysisConfig {
    AnalysisConfig {
        window_days: days,
        ..AnalysisConfig::default()
    }
}

fn features_for(spec: &SynthSpec) -> (Vec<FeatureDelta>, Vec<bool>) {
    let synth = generate_cohort(spec).unwrap();
    let f = synth.features(
        &spec.analysis,
        &Lexicon::demo(),
        &OfflineProvider::bundled(),
    );
    let affected = synth
        .cohort
        .participants
        .iter()
        .map(|p| synth.ground_truth.affected.contains(&p.id))
        .collect();
    (f, affected)
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

#[test]
fn null_shift_centers_changes() {
    let mut pooled: Vec<Vec<f64>> = vec![Vec::new(); Variable::ALL.len()];
    for seed in 0..10 {
        let spec = SynthSpec {
            n: 20,
            group_fraction: 0.5,
            seed,
            ..SynthSpec::default()
        };
        let (f, _) = features_for(&spec);
        for row in &f {
            for (i, v) in Variable::ALL.iter().enumerate() {
                if let Some(x) = row.get(*v) {
                    pooled[i].push(x);
                }
            }
        }
    }
    for (i, v) in Variable::ALL.iter().enumerate() {
        if !v.is_fraction() {
            continue;
        }
        let xs = &mut pooled[i];
        let (_, sd) = mean_sd(xs);
        // asymptotic standard error of a sample median is 1.2533 sd / sqrt(n)
        let floor = 4.0 * 1.2533 * sd / (xs.len() as f64).sqrt();
        let med = median(xs);
        assert!(
            med.abs() < floor,
            "{v}: median {med} beyond noise floor {floor}"
        );
    }
}

#[test]
fn planted_lna_mean_recovered_at_two_sizes() {
    let mut spreads = Vec::new();
    for intensity in [1.0, 6.0] {
        let mut spec = SynthSpec {
            n: 40,
            group_fraction: 0.5,
            seed: 21,
            heterogeneity: 0.0,
            shift: ShiftSpec {
                lna_intensity_mult: 1.2,
                ..ShiftSpec::null()
            },
            ..SynthSpec::default()
        };
        spec.base_profile = scaled(&spec.base_profile, intensity);
        let (f, affected) = features_for(&spec);
        let hit: Vec<f64> = f
            .iter()
            .zip(&affected)
            .filter(|(_, a)| **a)
            .filter_map(|(r, _)| r.lna_change())
            .collect();
        let (m, sd) = mean_sd(&hit);
        let se = sd / (hit.len() as f64).sqrt();
        assert!(
            (m - 0.2).abs() < 3.0 * se + 0.01,
            "x{intensity}: mean {m}, se {se}"
        );
        spreads.push(sd);
    }
    assert!(
        spreads[1] < spreads[0],
        "spread did not shrink: {spreads:?}"
    );
}

#[test]
fn sleep_shift_raises_inactivity_divergence() {
    let wins: usize = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let spec = SynthSpec {
                n: 10,
                group_fraction: 0.5,
                seed,
                analysis: short_config(28),
                shift: ShiftSpec {
                    sleep_gap_shift_hours: 3.0,
                    ..ShiftSpec::null()
                },
                ..SynthSpec::default()
            };
            let (f, affected) = features_for(&spec);
            let pick = |want: bool| -> f64 {
                let xs: Vec<f64> = f
                    .iter()
                    .zip(&affected)
                    .filter(|(_, a)| **a == want)
                    .filter_map(|(r, _)| r.inactivity_kl())
                    .collect();
                xs.iter().sum::<f64>() / xs.len() as f64
            };
            usize::from(pick(true) > pick(false))
        })
        .sum();
    assert!(
        wins >= 95,
        "affected divergence higher in only {wins}/100 seeds"
    );
}

#[test]
fn planted_lna_survives_holm() {
    let outcomes: Vec<(bool, Vec<Variable>)> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let spec = SynthSpec {
                seed: 500 + seed,
                shift: ShiftSpec {
                    lna_intensity_mult: 1.2,
                    ..ShiftSpec::null()
                },
                ..SynthSpec::default()
            };
            let synth = generate_cohort(&spec).unwrap();
            let f = synth.features(
                &spec.analysis,
                &Lexicon::demo(),
                &OfflineProvider::bundled(),
            );
            let a = run_group_analysis(&synth.cohort, Grouping::Dep, &f, &[Factor::Female], 0.05)
                .unwrap();
            let lna = a
                .rows
                .iter()
                .any(|r| r.variable == Variable::LnaPct && r.holm_reject);
            let others = a
                .rows
                .iter()
                .filter(|r| r.variable != Variable::LnaPct && r.holm_reject)
                .map(|r| r.variable)
                .collect();
            (lna, others)
        })
        .collect();
    let detected = outcomes.iter().filter(|(l, _)| *l).count();
    assert!(detected >= 90, "lna rejected after Holm in {detected}/100");
    for v in Variable::ALL.into_iter().filter(|v| *v != Variable::LnaPct) {
        let hits = outcomes.iter().filter(|(_, o)| o.contains(&v)).count();
        assert!(hits <= 5, "{v} rejected in {hits}/100 seeds");
    }
}

/// LNA change of every participant in the control and study years.
fn two_years(
    seed: u64,
    study_mult: f64,
    cfg: &AnalysisConfig,
) -> (Vec<FeatureDelta>, Vec<FeatureDelta>) {
    let control = cfg.shifted_years(-1).unwrap();
    let lexicon = Lexicon::demo();
    let provider = OfflineProvider::bundled();
    let base = BehaviorProfile::default();
    let study = ShiftSpec {
        lna_intensity_mult: study_mult,
        ..ShiftSpec::null()
    }
    .apply(&base)
    .unwrap();
    let tz = -300;
    let year = |c: &AnalysisConfig, after: &BehaviorProfile, pid: &str, s: u64| {
        let w = c.windows(tz);
        let len = w.before.end - w.before.start;
        let mut xs = generate_stream(pid, &base, w.before.clone(), tz, derive_seed(s, 0));
        xs.extend(generate_stream(
            pid,
            after,
            w.after.start..w.after.start + len,
            tz,
            derive_seed(s, 1),
        ));
        extract_feature_delta(pid, &xs, c, tz, &lexicon, &provider)
    };
    (0..49)
        .map(|i| {
            let pid = format!("p{i:03}");
            let s = derive_seed(seed, i);
            (
                year(&control, &base, &pid, s),
                year(cfg, &study, &pid, derive_seed(s, 2)),
            )
        })
        .unzip()
}

#[test]
fn seasonal_control_detects_study_year_shift() {
    let cfg = short_config(21);
    let hits: usize = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let (a, b) = two_years(seed, 1.3, &cfg);
            let rows = seasonal_control(&a, &b).unwrap();
            let lna = rows
                .iter()
                .find(|r| r.variable == Variable::LnaPct)
                .unwrap();
            usize::from(
                lna.result
                    .as_ref()
                    .is_some_and(|t| t.p < 0.001 && t.statistic > 0.0),
            )
        })
        .sum();
    assert!(hits >= 95, "p < .001 in only {hits}/100 seeds");
}

#[test]
fn seasonal_control_null_is_quiet() {
    let cfg = short_config(21);
    let (a, b) = two_years(3, 1.0, &cfg);
    let rows = seasonal_control(&a, &b).unwrap();
    let lna = rows
        .iter()
        .find(|r| r.variable == Variable::LnaPct)
        .unwrap();
    assert!(lna.result.as_ref().unwrap().p > 0.001);
}
