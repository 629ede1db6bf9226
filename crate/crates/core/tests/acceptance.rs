//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//! Run with `cargo test --test acceptance -- --nocapture` to see every line.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, resume_unwind, UnwindSafe};
use std::time::{Duration, Instant};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use da_seqlab::config::PipelineConfig;
use da_seqlab::corpus::{
    flatten_corpus, Corpus, DACode, DALabel, EventStream, Session, SpeakerRole, Turn,
};
use da_seqlab::freqstats::{chisq_2x2_yates, holm_bonferroni};
use da_seqlab::permtest::{
    exact_permutation_test, monte_carlo_permutation_test, test_pattern_set, ClusterDesign,
    PermStrategy, PermTestSettings, DEFAULT_EXACT_CAP,
};
use da_seqlab::pipeline::{run_all, stage_synth, SynthOptions};
use da_seqlab::reliability::{kappa_all, kappa_per_code, DualAnnotation};
use da_seqlab::scoring::{
    composite_scores, default_orientation, gains_and_groups, zscore, CompositeScore, Group,
    GroupAssignment, Indicator, Orientation, ProficiencyRecord, StandardizationScope, Timepoint,
};
use da_seqlab::seqmine::{
    brute_force_mine, mine, occurs, GroupSupport, MiningParams, Pattern, SupportThreshold,
};
use da_seqlab::synth::{generate, GeneratorSpec};

fn criterion(name: &str, body: impl FnOnce() + UnwindSafe) {
    let result = catch_unwind(body);
    match &result {
        Ok(()) => println!("[acceptance] {name}: PASS"),
        Err(_) => println!("[acceptance] {name}: FAIL"),
    }
    if let Err(cause) = result {
        resume_unwind(cause);
    }
}

fn assert_within(elapsed: Duration, budget: Duration, what: &str) {
    assert!(
        elapsed <= budget,
        "{what} took {elapsed:?}, budget {budget:?}"
    );
}

#[test]
fn c1_chi_square_regression() {
    criterion("C1 chi-square regression on reference counts", || {
        let start = Instant::now();
        let cases = [
            (45u64, 3603u64, 83u64, 3354u64, 13.78),
            (75, 3603, 35, 3354, 11.37),
            (98, 3603, 71, 3354, 2.42),
            (13, 3603, 3, 3354, 4.45),
        ];
        for (k1, n1, k2, n2, expected) in cases {
            let got = chisq_2x2_yates(k1, n1, k2, n2).unwrap().statistic;
            assert!(
                (got - expected).abs() <= 0.01,
                "({k1},{n1},{k2},{n2}): {got} vs {expected}"
            );
        }
        assert_within(start.elapsed(), Duration::from_secs(1), "chi-square cases");
    });
}

#[test]
fn c2_holm_regression() {
    criterion("C2 Holm-Bonferroni regression", || {
        // Raw p 0.0348 ranked third among 19 multiplies by 17.
        let mut p = vec![0.0002, 0.0007, 0.0348];
        p.extend(std::iter::repeat_n(0.5, 16));
        let adjusted = holm_bonferroni(&p).unwrap();
        assert!(
            (adjusted[2] - 0.592).abs() <= 0.003,
            "rank-3 adjustment {}",
            adjusted[2]
        );

        let hand = holm_bonferroni(&[0.01, 0.02, 0.03]).unwrap();
        assert_eq!(hand, vec![0.03, 0.04, 0.04]);
    });
}

/// Randomized corpora shared by criteria 3 and 4: at most 20 sessions of at
/// most 60 events over at most 10 labels, params with max_gap in {1,2,3}.
fn random_corpus(rng: &mut ChaCha8Rng) -> (Vec<EventStream>, MiningParams) {
    let alphabet: Vec<DALabel> = DALabel::all().take(rng.gen_range(3..=10)).collect();
    let n_streams = rng.gen_range(2..=20);
    let streams: Vec<EventStream> = (0..n_streams)
        .map(|i| EventStream {
            session_id: format!("s{i}"),
            events: (0..rng.gen_range(1..=60))
                .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
                .collect(),
        })
        .collect();
    let min_len = rng.gen_range(1..=2);
    let params = MiningParams {
        min_len,
        max_len: min_len + rng.gen_range(1..=2),
        max_gap: rng.gen_range(1..=3),
        min_support: SupportThreshold::Sessions(rng.gen_range(2..=4)),
    };
    (streams, params)
}

#[test]
fn c3_miner_oracle_equivalence() {
    criterion("C3 miner-oracle equivalence on 100 random corpora", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(20_240_001);
        for case in 0..100 {
            let (streams, params) = random_corpus(&mut rng);
            let fast = mine(&streams, &params, None).unwrap();
            let slow = brute_force_mine(&streams, &params, None).unwrap();
            assert_eq!(fast, slow, "case {case} with {params:?}");
        }
        assert_within(
            start.elapsed(),
            Duration::from_secs(30),
            "100 equivalence cases",
        );
    });
}

#[test]
fn c4_anti_monotonicity() {
    criterion("C4 contiguous-subsequence anti-monotonicity", || {
        let mut rng = ChaCha8Rng::seed_from_u64(20_240_001);
        let mut violations = 0usize;
        let mut patterns_checked = 0usize;
        for _ in 0..100 {
            let (streams, params) = random_corpus(&mut rng);
            for pattern in mine(&streams, &params, None).unwrap() {
                patterns_checked += 1;
                let k = pattern.labels.len();
                for start in 0..k {
                    for end in start + 1..=k {
                        let window = &pattern.labels[start..end];
                        let support = streams
                            .iter()
                            .filter(|s| occurs(&s.events, window, params.max_gap))
                            .count();
                        if support < pattern.support_total {
                            violations += 1;
                        }
                    }
                }
            }
        }
        assert!(patterns_checked > 0, "no patterns mined across 100 corpora");
        assert_eq!(violations, 0, "{violations} anti-monotonicity violations");
    });
}

/// Corpus fixture with controlled per-learner pattern presence. Pattern i is
/// the adjacent pair (chatbot code_i, student R); session j of learner l
/// contains pattern i iff j < presence[i][l].
fn presence_corpus(
    groups: &[Group],
    sessions_per_learner: usize,
    presence: &[Vec<u32>],
) -> (Corpus, GroupAssignment, Vec<Vec<DALabel>>) {
    let chatbot_codes = [
        DACode::Q,
        DACode::A,
        DACode::S,
        DACode::G,
        DACode::T,
        DACode::D,
        DACode::M,
        DACode::Cp,
        DACode::Cr,
    ];
    let patterns: Vec<Vec<DALabel>> = (0..presence.len())
        .map(|i| {
            vec![
                DALabel::chatbot(chatbot_codes[i]),
                DALabel::student(DACode::R),
            ]
        })
        .collect();

    let mut sessions = Vec::new();
    let mut assignment = GroupAssignment::default();
    for (learner_idx, &group) in groups.iter().enumerate() {
        let learner_id = format!("L{learner_idx:02}");
        assignment.learner_groups.insert(learner_id.clone(), group);
        for j in 0..sessions_per_learner {
            let mut turns = Vec::new();
            for (i, per_learner) in presence.iter().enumerate() {
                if (j as u32) < per_learner[learner_idx] {
                    turns.push(Turn {
                        index: turns.len(),
                        speaker: SpeakerRole::Chatbot,
                        codes: vec![chatbot_codes[i]],
                    });
                    turns.push(Turn {
                        index: turns.len(),
                        speaker: SpeakerRole::Student,
                        codes: vec![DACode::R],
                    });
                }
            }
            // Filler so every session is non-empty; Ce -> R never forms a
            // tested pattern.
            turns.push(Turn {
                index: turns.len(),
                speaker: SpeakerRole::Chatbot,
                codes: vec![DACode::Ce],
            });
            sessions.push(Session {
                session_id: format!("{learner_id}_s{j}"),
                learner_id: learner_id.clone(),
                turns,
            });
        }
    }
    (Corpus::from_sessions(sessions), assignment, patterns)
}

#[test]
fn c5_exact_permutation_correctness() {
    criterion("C5 exact permutation correctness", || {
        // Hand-enumerable 2v2: pattern in both observed-HP learners' single
        // sessions; |stat| = 2 in exactly 2 of the C(4,2) = 6 assignments.
        let groups = [Group::Hp, Group::Hp, Group::Lp, Group::Lp];
        let (corpus, assignment, patterns) = presence_corpus(&groups, 1, &[vec![1, 1, 0, 0]]);
        let streams = flatten_corpus(&corpus);
        let design = ClusterDesign::from_corpus(&corpus, &assignment).unwrap();
        let result =
            exact_permutation_test(&patterns[0], &streams, &design, 1, DEFAULT_EXACT_CAP).unwrap();
        assert_eq!(result.n_permutations, 6);
        assert_eq!(result.p_raw, 2.0 / 6.0);

        // 12-learner 6/6 fixture: exact p values are multiples of 1/924 and
        // Monte Carlo at n = 20,000 with a fixed seed lands within 0.02.
        let groups: Vec<Group> = (0..12)
            .map(|i| if i < 6 { Group::Hp } else { Group::Lp })
            .collect();
        let presence = vec![
            vec![6, 5, 4, 6, 3, 5, 2, 1, 3, 0, 2, 1],
            vec![3, 3, 2, 4, 3, 2, 3, 2, 4, 3, 2, 3],
            vec![6, 6, 5, 6, 6, 5, 1, 0, 1, 2, 0, 1],
        ];
        let (corpus, assignment, patterns) = presence_corpus(&groups, 6, &presence);
        let streams = flatten_corpus(&corpus);
        let design = ClusterDesign::from_corpus(&corpus, &assignment).unwrap();
        assert_eq!(design.assignment_count(), Some(924));
        for pattern in &patterns {
            let exact =
                exact_permutation_test(pattern, &streams, &design, 1, DEFAULT_EXACT_CAP).unwrap();
            let scaled = exact.p_raw * 924.0;
            assert!(
                (scaled - scaled.round()).abs() < 1e-9,
                "p = {} is not a multiple of 1/924",
                exact.p_raw
            );
            assert!(exact.p_raw >= 1.0 / 924.0);

            let mc =
                monte_carlo_permutation_test(pattern, &streams, &design, 1, 20_000, 271).unwrap();
            assert!(
                (mc.p_raw - exact.p_raw).abs() <= 0.02,
                "mc {} vs exact {}",
                mc.p_raw,
                exact.p_raw
            );
        }
    });
}

fn planted_labels() -> Vec<DALabel> {
    vec![
        DALabel::chatbot(DACode::Q),
        DALabel::student(DACode::R),
        DALabel::chatbot(DACode::Cp),
    ]
}

fn synth_run_all(
    dir: &std::path::Path,
    seed: u64,
    rate_hp: f64,
    rate_lp: f64,
) -> da_seqlab::pipeline::RunAllOutput {
    let data_dir = dir.join(format!("data_{seed}_{rate_hp}"));
    let synth_config = PipelineConfig {
        out_dir: data_dir.clone(),
        ..PipelineConfig::default()
    };
    let options = SynthOptions {
        n_learners: 12,
        sessions_per_learner: 6,
        turns_min: 60,
        turns_max: 80,
        planted: Some(planted_labels()),
        rate_hp,
        rate_lp,
        seed,
        ..SynthOptions::default()
    };
    stage_synth(&synth_config, &options).unwrap();

    let mut config = PipelineConfig {
        corpus: Some(data_dir.join("corpus.jsonl")),
        groups: Some(data_dir.join("groups.csv")),
        out_dir: dir.join(format!("results_{seed}_{rate_hp}")),
        ..PipelineConfig::default()
    };
    config.permutation.seed = Some(seed);
    run_all(&config).unwrap()
}

#[test]
fn c6_end_to_end_planted_pattern_detection() {
    criterion("C6 end-to-end planted-pattern detection", || {
        let start = Instant::now();
        let dir = tempfile::tempdir().unwrap();

        // Planted run: trigram at 0.9 HP / 0.1 LP must come out significant.
        let output = synth_run_all(dir.path(), 42, 0.9, 0.1);
        let planted = planted_labels();
        let hit = output
            .perm_results
            .iter()
            .find(|r| r.labels == planted)
            .expect("planted trigram reaches the permutation stage");
        assert!(
            hit.significant && hit.p_adj < 0.05,
            "planted pattern adjusted p = {}",
            hit.p_adj
        );

        // Null injection: across 20 seeds at most one run flags anything.
        let mut flagged_runs = 0;
        for seed in 0..20 {
            let output = synth_run_all(dir.path(), seed, 0.0, 0.0);
            if output.perm_results.iter().any(|r| r.significant) {
                flagged_runs += 1;
            }
        }
        assert!(
            flagged_runs <= 1,
            "{flagged_runs} of 20 null runs reported a significant pattern"
        );
        assert_within(
            start.elapsed(),
            Duration::from_secs(60),
            "planted + 20 null runs",
        );
    });
}

#[test]
fn c7_kappa() {
    criterion("C7 Cohen's kappa fixture and symmetries", || {
        let presence = |code: DACode, a: &[u8], b: &[u8]| -> Vec<DualAnnotation> {
            a.iter()
                .zip(b)
                .enumerate()
                .map(|(i, (&pa, &pb))| DualAnnotation {
                    session_id: "s".into(),
                    turn: i,
                    coder_a: if pa == 1 {
                        [code].into()
                    } else {
                        Default::default()
                    },
                    coder_b: if pb == 1 {
                        [code].into()
                    } else {
                        Default::default()
                    },
                })
                .collect()
        };

        let anns = presence(
            DACode::R,
            &[1, 1, 1, 0, 0, 0, 0, 0, 0, 0],
            &[1, 1, 0, 1, 0, 0, 0, 0, 0, 0],
        );
        let r = kappa_per_code(&anns, DACode::R).unwrap();
        assert!((r.kappa - 0.5238).abs() <= 1e-4, "kappa {}", r.kappa);

        let identical = presence(DACode::Q, &[1, 0, 1, 0, 1], &[1, 0, 1, 0, 1]);
        assert_eq!(kappa_per_code(&identical, DACode::Q).unwrap().kappa, 1.0);

        // Coder swap leaves every kappa unchanged.
        let mut anns = presence(
            DACode::D,
            &[1, 1, 0, 1, 0, 0, 1, 0, 1, 0],
            &[1, 0, 0, 1, 1, 0, 0, 0, 1, 1],
        );
        for (i, ann) in anns.iter_mut().enumerate() {
            if i % 3 == 0 {
                ann.coder_a.insert(DACode::S);
            }
            if i % 4 == 0 {
                ann.coder_b.insert(DACode::S);
            }
        }
        let swapped: Vec<DualAnnotation> = anns
            .iter()
            .map(|a| DualAnnotation {
                session_id: a.session_id.clone(),
                turn: a.turn,
                coder_a: a.coder_b.clone(),
                coder_b: a.coder_a.clone(),
            })
            .collect();
        let original: BTreeMap<String, f64> = kappa_all(&anns)
            .unwrap()
            .into_iter()
            .map(|r| (r.key(), r.kappa))
            .collect();
        let mirrored: BTreeMap<String, f64> = kappa_all(&swapped)
            .unwrap()
            .into_iter()
            .map(|r| (r.key(), r.kappa))
            .collect();
        assert_eq!(original.len(), mirrored.len());
        for (key, kappa) in original {
            assert!(
                (kappa - mirrored[&key]).abs() < 1e-12,
                "{key} changed under coder swap"
            );
        }
    });
}

#[test]
fn c8_scoring_properties() {
    criterion("C8 scoring properties", || {
        // z-score normalization to machine precision.
        let z = zscore(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() <= 1e-12, "mean {mean}");
        assert!((sd - 1.0).abs() <= 1e-12, "sd {sd}");

        // Swapping pre/post negates gains and exchanges HP/LP membership.
        let score = |id: &str, tp: Timepoint, composite: f64| CompositeScore {
            learner_id: id.into(),
            timepoint: tp,
            z_indicators: [0.0; 6],
            composite,
        };
        let scores = vec![
            score("a", Timepoint::Pre, 0.3),
            score("a", Timepoint::Post, 1.4),
            score("b", Timepoint::Pre, -0.2),
            score("b", Timepoint::Post, 0.6),
            score("c", Timepoint::Pre, 0.5),
            score("c", Timepoint::Post, 0.1),
            score("d", Timepoint::Pre, 0.8),
            score("d", Timepoint::Post, -0.9),
        ];
        let swapped: Vec<CompositeScore> = scores
            .iter()
            .map(|s| CompositeScore {
                timepoint: match s.timepoint {
                    Timepoint::Pre => Timepoint::Post,
                    Timepoint::Post => Timepoint::Pre,
                },
                ..s.clone()
            })
            .collect();
        let (gains, groups, _) = gains_and_groups(&scores).unwrap();
        let (gains_swapped, groups_swapped, _) = gains_and_groups(&swapped).unwrap();
        for (g, gs) in gains.iter().zip(&gains_swapped) {
            assert_eq!(g.learner_id, gs.learner_id);
            assert!((g.gain + gs.gain).abs() <= 1e-12);
        }
        for (learner, group) in &groups.learner_groups {
            assert_eq!(
                groups_swapped.learner_groups[learner],
                group.opposite(),
                "{learner}"
            );
        }

        // Four-learner composite fixture against an independent recomputation.
        let record = |id: &str, tp: Timepoint, values: [f64; 6]| ProficiencyRecord {
            learner_id: id.into(),
            timepoint: tp,
            indicators: values,
        };
        let records = vec![
            record("a", Timepoint::Pre, [12.0, 1.8, 4.0, 6.0, 2.1, 9.0]),
            record("b", Timepoint::Pre, [15.0, 2.0, 3.5, 5.0, 2.4, 8.0]),
            record("c", Timepoint::Pre, [10.0, 1.5, 5.0, 7.5, 1.9, 11.0]),
            record("d", Timepoint::Pre, [18.0, 2.2, 2.0, 4.0, 2.8, 6.0]),
            record("a", Timepoint::Post, [14.0, 1.9, 3.0, 5.0, 2.3, 8.0]),
            record("b", Timepoint::Post, [15.5, 2.1, 3.4, 4.8, 2.5, 7.5]),
            record("c", Timepoint::Post, [11.0, 1.6, 4.5, 7.0, 2.0, 10.0]),
            record("d", Timepoint::Post, [18.5, 2.3, 1.8, 3.9, 2.9, 5.5]),
        ];
        let scores = composite_scores(
            &records,
            &default_orientation(),
            StandardizationScope::WithinTimepoint,
        )
        .unwrap();
        let orientation = default_orientation();
        for tp in [Timepoint::Pre, Timepoint::Post] {
            let cohort: Vec<&ProficiencyRecord> =
                records.iter().filter(|r| r.timepoint == tp).collect();
            for target in &cohort {
                let mut total = 0.0;
                for (idx, indicator) in Indicator::ALL.iter().enumerate() {
                    let column: Vec<f64> = cohort.iter().map(|r| r.indicators[idx]).collect();
                    let m = column.iter().sum::<f64>() / column.len() as f64;
                    let var = column.iter().map(|v| (v - m).powi(2)).sum::<f64>()
                        / (column.len() as f64 - 1.0);
                    let mut zval = (target.indicators[idx] - m) / var.sqrt();
                    if orientation[indicator] == Orientation::Lower {
                        zval = -zval;
                    }
                    total += zval;
                }
                let expected = total / 6.0;
                let got = scores
                    .iter()
                    .find(|s| s.learner_id == target.learner_id && s.timepoint == tp)
                    .unwrap()
                    .composite;
                assert!(
                    (got - expected).abs() <= 1e-12,
                    "{} at {tp}: {got} vs {expected}",
                    target.learner_id
                );
            }
        }
    });
}

#[test]
fn c9_performance_envelope() {
    criterion("C9 performance envelope", || {
        // 70 sessions of roughly 100 events at reference parameters.
        let spec = GeneratorSpec {
            n_learners: 14,
            sessions_per_learner: 5,
            turns_min: 68,
            turns_max: 74,
            seed: 99,
            ..GeneratorSpec::default()
        };
        let corpus = generate(&spec).unwrap().corpus;
        assert_eq!(corpus.sessions.len(), 70);
        let streams = flatten_corpus(&corpus);
        let mean_events =
            streams.iter().map(|s| s.events.len()).sum::<usize>() as f64 / streams.len() as f64;
        assert!(
            (90.0..=110.0).contains(&mean_events),
            "mean events {mean_events}"
        );

        let start = Instant::now();
        let patterns = mine(&streams, &MiningParams::default(), None).unwrap();
        assert_within(start.elapsed(), Duration::from_secs(5), "mining 70x~100");
        assert!(!patterns.is_empty());

        // Exact permutation across 924 assignments for 9 patterns.
        let groups: Vec<Group> = (0..12)
            .map(|i| if i < 6 { Group::Hp } else { Group::Lp })
            .collect();
        let presence: Vec<Vec<u32>> = (0..9)
            .map(|i| (0..12).map(|l| ((i + l) % 7) as u32).collect())
            .collect();
        let (corpus, assignment, pattern_labels) = presence_corpus(&groups, 6, &presence);
        let streams = flatten_corpus(&corpus);
        let design = ClusterDesign::from_corpus(&corpus, &assignment).unwrap();
        assert_eq!(design.assignment_count(), Some(924));
        let patterns: Vec<Pattern> = pattern_labels
            .into_iter()
            .map(|labels| Pattern {
                labels,
                support_total: 0,
                groups: Some(GroupSupport { hp: 0, lp: 0 }),
            })
            .collect();
        assert_eq!(patterns.len(), 9);

        let settings = PermTestSettings {
            strategy: PermStrategy::Exact,
            ..PermTestSettings::default()
        };
        let start = Instant::now();
        let results = test_pattern_set(&patterns, &streams, &design, &settings).unwrap();
        assert_within(
            start.elapsed(),
            Duration::from_secs(2),
            "924 x 9 exact tests",
        );
        assert_eq!(results.len(), 9);
    });
}
