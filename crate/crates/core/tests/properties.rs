//! Property tests for the module invariants: miner-oracle agreement, gap
//! monotonicity, Holm ordering, kappa symmetries, z-score normalization, and
//! serialization round-trips.

use proptest::prelude::*;
use std::collections::BTreeSet;

use da_seqlab::corpus::{parse_corpus_jsonl, write_corpus_jsonl, DACode, DALabel, EventStream};
use da_seqlab::freqstats::{chisq_2x2_yates, holm_bonferroni};
use da_seqlab::reliability::{kappa_per_code, DualAnnotation};
use da_seqlab::report::{parse_patterns_csv, patterns_csv};
use da_seqlab::scoring::zscore;
use da_seqlab::seqmine::{
    brute_force_mine, mine, occurs, GroupSupport, MiningParams, Pattern, SupportThreshold,
};
use da_seqlab::synth::{generate, GeneratorSpec};

fn label_strategy(alphabet: usize) -> impl Strategy<Value = DALabel> {
    let labels: Vec<DALabel> = DALabel::all().take(alphabet).collect();
    prop::sample::select(labels)
}

fn streams_strategy(
    max_streams: usize,
    max_events: usize,
    alphabet: usize,
) -> impl Strategy<Value = Vec<EventStream>> {
    prop::collection::vec(
        prop::collection::vec(label_strategy(alphabet), 1..=max_events),
        1..=max_streams,
    )
    .prop_map(|event_lists| {
        event_lists
            .into_iter()
            .enumerate()
            .map(|(i, events)| EventStream {
                session_id: format!("s{i}"),
                events,
            })
            .collect()
    })
}

fn params_strategy() -> impl Strategy<Value = MiningParams> {
    (1usize..=2, 0usize..=2, 1usize..=3, 1usize..=3).prop_map(
        |(min_len, extra_len, max_gap, min_support)| MiningParams {
            min_len,
            max_len: min_len + extra_len,
            max_gap,
            min_support: SupportThreshold::Sessions(min_support),
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn miner_agrees_with_oracle(
        streams in streams_strategy(10, 30, 6),
        params in params_strategy(),
    ) {
        let fast = mine(&streams, &params, None).unwrap();
        let slow = brute_force_mine(&streams, &params, None).unwrap();
        prop_assert_eq!(fast, slow);
    }

    #[test]
    fn occurs_is_monotone_in_gap(
        stream in prop::collection::vec(label_strategy(5), 1..40),
        pattern in prop::collection::vec(label_strategy(5), 1..4),
        gap in 1usize..4,
    ) {
        if occurs(&stream, &pattern, gap) {
            prop_assert!(occurs(&stream, &pattern, gap + 1));
        }
    }

    #[test]
    fn single_label_occurrence_is_membership(
        stream in prop::collection::vec(label_strategy(8), 1..40),
        label in label_strategy(8),
    ) {
        prop_assert_eq!(occurs(&stream, &[label], 1), stream.contains(&label));
    }

    #[test]
    fn mined_subsequences_stay_frequent(
        streams in streams_strategy(10, 30, 5),
    ) {
        let params = MiningParams {
            min_len: 1,
            max_len: 3,
            max_gap: 2,
            min_support: SupportThreshold::Sessions(2),
        };
        let support_of = |pattern: &[DALabel]| {
            streams.iter().filter(|s| occurs(&s.events, pattern, params.max_gap)).count()
        };
        for pattern in mine(&streams, &params, None).unwrap() {
            let k = pattern.labels.len();
            for start in 0..k {
                for end in start + 1..=k {
                    let window = &pattern.labels[start..end];
                    prop_assert!(
                        support_of(window) >= pattern.support_total,
                        "window {:?} of {:?}", window, pattern.labels
                    );
                }
            }
        }
    }

    #[test]
    fn holm_bounds_and_monotonicity(
        p in prop::collection::vec(0.0f64..=1.0, 1..20),
    ) {
        let adjusted = holm_bonferroni(&p).unwrap();
        let m = p.len() as f64;
        for (raw, adj) in p.iter().zip(&adjusted) {
            prop_assert!(*adj >= *raw - 1e-15);
            prop_assert!(*adj <= (m * raw).min(1.0) + 1e-12);
        }
        let mut pairs: Vec<(f64, f64)> = p.iter().copied().zip(adjusted).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in pairs.windows(2) {
            prop_assert!(w[0].1 <= w[1].1 + 1e-15);
        }
    }

    #[test]
    fn chisq_is_symmetric_under_group_swap(
        k1 in 0u64..200, n1_extra in 1u64..2000,
        k2 in 0u64..200, n2_extra in 1u64..2000,
    ) {
        let (n1, n2) = (k1 + n1_extra, k2 + n2_extra);
        let a = chisq_2x2_yates(k1, n1, k2, n2);
        let b = chisq_2x2_yates(k2, n2, k1, n1);
        match (a, b) {
            (Ok(x), Ok(y)) => {
                prop_assert!((x.statistic - y.statistic).abs() < 1e-9);
                prop_assert!(x.statistic >= 0.0);
            }
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "asymmetric outcome {:?}", other),
        }
    }

    #[test]
    fn chisq_grows_with_proportion_gap(
        n1 in 50u64..500, n2 in 50u64..500,
        k1a in 1u64..40, gap in 0u64..10,
    ) {
        // Holding group totals fixed, widening |k1/n1 - k2/n2| from a common
        // baseline never lowers the statistic beyond the correction floor.
        let k2 = k1a.min(n2 - 1);
        let near = chisq_2x2_yates(k1a.min(n1 - 1), n1, k2, n2);
        let k1b = (k1a + gap).min(n1 - 1);
        let far = chisq_2x2_yates(k1b, n1, k2, n2);
        if let (Ok(a), Ok(b)) = (near, far) {
            let p_near = (k1a.min(n1 - 1) as f64 / n1 as f64 - k2 as f64 / n2 as f64).abs();
            let p_far = (k1b as f64 / n1 as f64 - k2 as f64 / n2 as f64).abs();
            if p_far >= p_near {
                prop_assert!(b.statistic >= a.statistic - 1e-9);
            }
        }
    }

    #[test]
    fn kappa_symmetry_and_flip_invariance(
        presence in prop::collection::vec((any::<bool>(), any::<bool>()), 2..40),
    ) {
        let build = |pairs: &[(bool, bool)]| -> Vec<DualAnnotation> {
            pairs.iter().enumerate().map(|(i, (a, b))| DualAnnotation {
                session_id: "s".into(),
                turn: i,
                coder_a: if *a { [DACode::Q].into() } else { BTreeSet::new() },
                coder_b: if *b { [DACode::Q].into() } else { BTreeSet::new() },
            }).collect()
        };
        let swapped: Vec<(bool, bool)> = presence.iter().map(|(a, b)| (*b, *a)).collect();
        let flipped: Vec<(bool, bool)> = presence.iter().map(|(a, b)| (!*a, !*b)).collect();

        let base = kappa_per_code(&build(&presence), DACode::Q).unwrap();
        let swap = kappa_per_code(&build(&swapped), DACode::Q).unwrap();
        let flip = kappa_per_code(&build(&flipped), DACode::Q).unwrap();
        prop_assert!((base.kappa - swap.kappa).abs() < 1e-12);
        prop_assert!((base.kappa - flip.kappa).abs() < 1e-12);

        // kappa = 1 exactly when the vectors agree everywhere (p_e < 1 or not).
        let identical = presence.iter().all(|(a, b)| a == b);
        prop_assert_eq!(base.kappa == 1.0, identical);
    }

    #[test]
    fn zscore_standardizes(values in prop::collection::vec(-1e3f64..1e3, 2..50)) {
        match zscore(&values) {
            Ok(z) => {
                let n = z.len() as f64;
                let mean = z.iter().sum::<f64>() / n;
                let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                prop_assert!(mean.abs() < 1e-9);
                prop_assert!((sd - 1.0).abs() < 1e-9);
            }
            Err(_) => {
                let first = values[0];
                prop_assert!(values.iter().all(|v| *v == first));
            }
        }
    }

    #[test]
    fn corpus_jsonl_round_trip(seed in 0u64..500) {
        let spec = GeneratorSpec {
            n_learners: 3,
            sessions_per_learner: 2,
            turns_min: 3,
            turns_max: 12,
            seed,
            ..GeneratorSpec::default()
        };
        let corpus = generate(&spec).unwrap().corpus;
        let mut buf = Vec::new();
        write_corpus_jsonl(&corpus, &mut buf).unwrap();
        let reloaded = parse_corpus_jsonl(std::io::Cursor::new(buf)).unwrap();
        prop_assert_eq!(reloaded.corpus, corpus);
        prop_assert_eq!(reloaded.removed_empty_turns, 0);
    }

    #[test]
    fn pattern_csv_round_trip(
        labels in prop::collection::vec(label_strategy(22), 1..5),
        hp in 0usize..40,
        lp in 0usize..40,
        grouped in any::<bool>(),
    ) {
        let pattern = Pattern {
            labels,
            support_total: hp + lp,
            groups: grouped.then_some(GroupSupport { hp, lp }),
        };
        let csv = patterns_csv(std::slice::from_ref(&pattern));
        let parsed = parse_patterns_csv(std::io::Cursor::new(csv)).unwrap();
        prop_assert_eq!(parsed, vec![pattern]);
    }
}
