//! Seeded synthetic corpus generator: Markov DA streams over alternating
//! speaker turns, with optional planted-pattern enrichment per group.
//!
//! Generation derives one RNG stream per session from the master seed, so
//! output is byte-identical for a seed regardless of generation order.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DACode, DALabel, Session, SpeakerRole, Turn};
use crate::error::{Error, Result};
use crate::scoring::{Group, GroupAssignment};

/// A label run spliced into sessions at a per-group rate.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedPattern {
    pub labels: Vec<DALabel>,
    pub rate_hp: f64,
    pub rate_lp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub n_learners: usize,
    pub sessions_per_learner: usize,
    pub turns_min: usize,
    pub turns_max: usize,
    /// Sampling alphabet; must contain labels of both roles.
    pub alphabet: Vec<DALabel>,
    /// Initial label distribution over the alphabet.
    pub initial: Vec<f64>,
    /// Row-stochastic transition matrix over the alphabet.
    pub transition: Vec<Vec<f64>>,
    /// Chance that a turn carries two codes (events per turn ~= 1 + rate).
    pub two_code_rate: f64,
    /// Spread of per-learner label propensities: each learner's label
    /// weights are scaled by exp(variation * u), u uniform on [-1, 1], and
    /// renormalized. Zero (the default) makes all learners share the base
    /// distributions; positive values correlate sessions within a learner,
    /// the nesting the cluster permutation design exists for, and inflate
    /// chance group contrasts accordingly.
    pub learner_variation: f64,
    pub planted: Option<PlantedPattern>,
    pub seed: u64,
}

/// The default alphabet: every label attested in the reference distribution,
/// most frequent first.
const DEFAULT_ALPHABET: [&str; 19] = [
    "[t]Q", "[s]R", "[t]A", "[t]S", "[t]R", "[t]Cp", "[s]S", "[s]Q", "[s]M", "[s]G", "[t]G",
    "[t]Ce", "[s]T", "[t]Cr", "[t]T", "[s]D", "[s]A", "[t]D", "[t]M",
];

/// Labels outside the dominant question-response-acknowledgement loop.
/// They occur as low-rate deviations that immediately route back to the loop.
const STUDENT_TAILS: [&str; 6] = ["[s]S", "[s]M", "[s]G", "[s]T", "[s]D", "[s]A"];
const CHATBOT_TAILS: [&str; 9] = [
    "[t]S", "[t]R", "[t]Cp", "[t]G", "[t]Ce", "[t]Cr", "[t]T", "[t]D", "[t]M",
];

impl Default for GeneratorSpec {
    /// Chatbot-led conversational loop: the chatbot asks ([t]Q), often
    /// acknowledging first ([t]A + [t]Q two-code turns), the student responds
    /// ([s]R), sometimes adding a question of their own ([s]Q) which the
    /// chatbot answers ([t]R). All other labels appear as sparse deviations.
    /// The dominant-label ordering ([t]Q, [s]R, [t]A at the top) follows the
    /// reference distribution.
    fn default() -> Self {
        let alphabet: Vec<DALabel> = DEFAULT_ALPHABET
            .iter()
            .map(|text| DALabel::parse(text).unwrap())
            .collect();
        let index: std::collections::BTreeMap<&str, usize> = DEFAULT_ALPHABET
            .iter()
            .enumerate()
            .map(|(i, text)| (*text, i))
            .collect();

        // A row is the unit-sum mixture of its student-side and chatbot-side
        // conditionals; sampling renormalizes within the role a turn forces,
        // so only within-role proportions matter.
        let build_row = |student: &[(&str, f64)], chatbot: &[(&str, f64)]| -> Vec<f64> {
            let mut row = vec![0.0; DEFAULT_ALPHABET.len()];
            for (side, weights) in [
                (student, STUDENT_TAILS.as_slice()),
                (chatbot, CHATBOT_TAILS.as_slice()),
            ] {
                let explicit: f64 = side.iter().map(|(_, w)| w).sum();
                let spread_targets: Vec<&str> = weights
                    .iter()
                    .copied()
                    .filter(|t| side.iter().all(|(l, _)| l != t))
                    .collect();
                for (label, weight) in side {
                    row[index[label]] += 0.5 * weight;
                }
                // Remaining mass spreads thinly over that role's tail labels.
                if !spread_targets.is_empty() {
                    let rest = (1.0 - explicit).max(0.0) / spread_targets.len() as f64;
                    for label in spread_targets {
                        row[index[label]] += 0.5 * rest;
                    }
                }
            }
            row
        };

        let loop_student = [("[s]R", 0.985)];
        let mut transition = vec![Vec::new(); DEFAULT_ALPHABET.len()];
        // Questions close an acknowledgement turn ([t]A + [t]Q) rather than
        // opening one, so the cycle R -> A(+Q) -> R -> ... stays tight.
        transition[index["[t]Q"]] = build_row(&loop_student, &[]);
        transition[index["[s]R"]] = build_row(&[("[s]Q", 0.97)], &[("[t]A", 0.985)]);
        transition[index["[t]A"]] = build_row(&loop_student, &[("[t]Q", 0.95)]);
        transition[index["[s]Q"]] = build_row(&[("[s]R", 0.96)], &[("[t]R", 0.985)]);
        transition[index["[t]R"]] = build_row(&loop_student, &[("[t]Q", 0.97)]);
        // Deviations return straight to the loop.
        let tail_row = build_row(&loop_student, &[("[t]A", 0.985)]);
        for row in transition.iter_mut() {
            if row.is_empty() {
                *row = tail_row.clone();
            }
        }

        // Sessions open with a chatbot move, nearly always a question.
        let mut initial = vec![0.0; DEFAULT_ALPHABET.len()];
        initial[index["[t]Q"]] = 0.97;
        initial[index["[t]G"]] = 0.02;
        let rest = 0.01 / (CHATBOT_TAILS.len() - 1) as f64;
        for tail in CHATBOT_TAILS.iter().filter(|t| **t != "[t]G") {
            initial[index[tail]] = rest;
        }

        GeneratorSpec {
            n_learners: 12,
            sessions_per_learner: 6,
            turns_min: 50,
            turns_max: 90,
            alphabet,
            initial,
            transition,
            two_code_rate: 0.4,
            learner_variation: 0.0,
            planted: None,
            seed: 0,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidSpec { msg });
        if self.n_learners == 0 || self.sessions_per_learner == 0 {
            return fail("need at least one learner and one session per learner".into());
        }
        if self.turns_min == 0 || self.turns_max < self.turns_min {
            return fail(format!(
                "bad turn range {}..={}",
                self.turns_min, self.turns_max
            ));
        }
        if self.alphabet.is_empty() {
            return fail("empty alphabet".into());
        }
        for role in [SpeakerRole::Student, SpeakerRole::Chatbot] {
            if !self.alphabet.iter().any(|l| l.role == role) {
                return fail(format!("alphabet has no {role} labels"));
            }
        }
        if self.initial.len() != self.alphabet.len() {
            return fail("initial distribution length does not match alphabet".into());
        }
        check_distribution(&self.initial, "initial")?;
        if self.transition.len() != self.alphabet.len() {
            return fail("transition matrix must have one row per label".into());
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.len() != self.alphabet.len() {
                return fail(format!("transition row {i} has wrong length"));
            }
            check_distribution(row, &format!("transition row {i}"))?;
        }
        if !(0.0..=1.0).contains(&self.two_code_rate) {
            return fail(format!(
                "two_code_rate {} outside [0, 1]",
                self.two_code_rate
            ));
        }
        if !self.learner_variation.is_finite() || self.learner_variation < 0.0 {
            return fail(format!(
                "learner_variation {} must be a non-negative number",
                self.learner_variation
            ));
        }
        if let Some(planted) = &self.planted {
            if planted.labels.is_empty() {
                return fail("planted pattern has no labels".into());
            }
            for rate in [planted.rate_hp, planted.rate_lp] {
                if !(0.0..=1.0).contains(&rate) {
                    return fail(format!("injection rate {rate} outside [0, 1]"));
                }
            }
        }
        Ok(())
    }
}

fn check_distribution(weights: &[f64], what: &str) -> Result<()> {
    if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
        return Err(Error::InvalidSpec {
            msg: format!("{what} has a negative or non-finite weight"),
        });
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidSpec {
            msg: format!("{what} sums to {sum}, not 1"),
        });
    }
    Ok(())
}

/// Where a planted run was spliced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Injection {
    pub session_id: String,
    /// Turn boundary the run was inserted at (index of its first turn).
    pub turn_index: usize,
    pub labels: Vec<String>,
}

/// Ground truth for a generated corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub planted_pattern: Option<Vec<String>>,
    pub injections: Vec<Injection>,
}

#[derive(Debug)]
pub struct SynthOutput {
    pub corpus: Corpus,
    pub groups: GroupAssignment,
    pub manifest: Manifest,
}

/// Generate a corpus, its learner grouping (first half HP), and the
/// injection manifest. Deterministic for a given spec.
pub fn generate(spec: &GeneratorSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let id_width = spec.n_learners.to_string().len().max(2);
    let n_hp = spec.n_learners / 2;

    let mut sessions = Vec::new();
    let mut groups = GroupAssignment::default();
    let mut injections = Vec::new();

    for learner_idx in 0..spec.n_learners {
        let learner_id = format!("L{:0width$}", learner_idx + 1, width = id_width);
        let group = if learner_idx < n_hp {
            Group::Hp
        } else {
            Group::Lp
        };
        groups.learner_groups.insert(learner_id.clone(), group);
        let profile = learner_profile(spec, learner_idx);

        for session_idx in 0..spec.sessions_per_learner {
            let global = learner_idx * spec.sessions_per_learner + session_idx;
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(global as u64 + 1);

            let session_id = format!("{learner_id}_s{:02}", session_idx + 1);
            let mut turns = sample_turns(spec, &profile, &mut rng);

            if let Some(planted) = &spec.planted {
                let rate = match group {
                    Group::Hp => planted.rate_hp,
                    Group::Lp => planted.rate_lp,
                };
                if rate > 0.0 && rng.gen_bool(rate) {
                    let boundary = rng.gen_range(0..=turns.len());
                    let run = labels_to_turns(&planted.labels);
                    for (offset, turn) in run.into_iter().enumerate() {
                        turns.insert(boundary + offset, turn);
                    }
                    injections.push(Injection {
                        session_id: session_id.clone(),
                        turn_index: boundary,
                        labels: planted.labels.iter().map(|l| l.to_string()).collect(),
                    });
                }
            }

            for (index, turn) in turns.iter_mut().enumerate() {
                turn.index = index;
            }
            sessions.push(Session {
                session_id,
                learner_id: learner_id.clone(),
                turns,
            });
        }
    }

    Ok(SynthOutput {
        corpus: Corpus::from_sessions(sessions),
        groups,
        manifest: Manifest {
            seed: spec.seed,
            planted_pattern: spec
                .planted
                .as_ref()
                .map(|p| p.labels.iter().map(|l| l.to_string()).collect()),
            injections,
        },
    })
}

/// One learner's jittered sampling distributions; sessions within a learner
/// share it, which is what nests sessions inside learners.
struct LearnerProfile {
    initial: Vec<f64>,
    transition: Vec<Vec<f64>>,
}

fn learner_profile(spec: &GeneratorSpec, learner_idx: usize) -> LearnerProfile {
    if spec.learner_variation == 0.0 {
        return LearnerProfile {
            initial: spec.initial.clone(),
            transition: spec.transition.clone(),
        };
    }
    // Learner streams count down from u64::MAX; session streams count up
    // from 1, so the two never collide.
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(u64::MAX - learner_idx as u64);
    let factors: Vec<f64> = (0..spec.alphabet.len())
        .map(|_| (spec.learner_variation * (2.0 * rng.gen::<f64>() - 1.0)).exp())
        .collect();
    let scale = |row: &[f64]| -> Vec<f64> {
        let scaled: Vec<f64> = row.iter().zip(&factors).map(|(w, f)| w * f).collect();
        let total: f64 = scaled.iter().sum();
        if total > 0.0 {
            scaled.iter().map(|w| w / total).collect()
        } else {
            row.to_vec()
        }
    };
    LearnerProfile {
        initial: scale(&spec.initial),
        transition: spec.transition.iter().map(|row| scale(row)).collect(),
    }
}

fn sample_turns(spec: &GeneratorSpec, profile: &LearnerProfile, rng: &mut ChaCha8Rng) -> Vec<Turn> {
    let n_turns = rng.gen_range(spec.turns_min..=spec.turns_max);
    let mut turns = Vec::with_capacity(n_turns);
    let mut prev: Option<usize> = None;
    for t in 0..n_turns {
        let role = if t % 2 == 0 {
            SpeakerRole::Chatbot
        } else {
            SpeakerRole::Student
        };
        let first = match sample_code(spec, profile, rng, prev, role, None) {
            Some(idx) => idx,
            None => continue,
        };
        let mut codes = vec![spec.alphabet[first].code];
        prev = Some(first);
        if rng.gen_bool(spec.two_code_rate) {
            if let Some(second) = sample_code(
                spec,
                profile,
                rng,
                prev,
                role,
                Some(spec.alphabet[first].code),
            ) {
                codes.push(spec.alphabet[second].code);
                prev = Some(second);
            }
        }
        turns.push(Turn {
            index: t,
            speaker: role,
            codes,
        });
    }
    turns
}

/// Weighted draw of an alphabet index with the turn's role, excluding a code
/// already used in the turn. Falls back from the transition row to the
/// initial distribution to uniform when the admissible mass is zero.
fn sample_code(
    spec: &GeneratorSpec,
    profile: &LearnerProfile,
    rng: &mut ChaCha8Rng,
    prev: Option<usize>,
    role: SpeakerRole,
    exclude: Option<DACode>,
) -> Option<usize> {
    let admissible = |i: usize| {
        let label = spec.alphabet[i];
        label.role == role && Some(label.code) != exclude
    };
    let row: Option<&[f64]> = prev.map(|p| profile.transition[p].as_slice());
    for weights in [row, Some(profile.initial.as_slice()), None] {
        let weight_of = |i: usize| match weights {
            Some(w) => w[i],
            None => 1.0,
        };
        let total: f64 = (0..spec.alphabet.len())
            .filter(|&i| admissible(i))
            .map(weight_of)
            .sum();
        if total <= 0.0 {
            continue;
        }
        let mut draw = rng.gen::<f64>() * total;
        let mut last = None;
        for i in (0..spec.alphabet.len()).filter(|&i| admissible(i)) {
            draw -= weight_of(i);
            last = Some(i);
            if draw <= 0.0 {
                return Some(i);
            }
        }
        return last;
    }
    None
}

/// Chunk a label run into turns: consecutive same-role labels pair up (two
/// distinct codes at most per turn).
fn labels_to_turns(labels: &[DALabel]) -> Vec<Turn> {
    let mut turns: Vec<Turn> = Vec::new();
    for &label in labels {
        if let Some(last) = turns.last_mut() {
            if last.speaker == label.role && last.codes.len() == 1 && last.codes[0] != label.code {
                last.codes.push(label.code);
                continue;
            }
        }
        turns.push(Turn {
            index: turns.len(),
            speaker: label.role,
            codes: vec![label.code],
        });
    }
    turns
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{flatten, validate_corpus, write_corpus_jsonl};
    use crate::seqmine::occurs;

    fn small_spec(seed: u64) -> GeneratorSpec {
        GeneratorSpec {
            n_learners: 4,
            sessions_per_learner: 2,
            turns_min: 10,
            turns_max: 16,
            seed,
            ..GeneratorSpec::default()
        }
    }

    fn planted_trigram() -> Vec<DALabel> {
        ["[t]Q", "[s]R", "[t]Cp"]
            .iter()
            .map(|t| DALabel::parse(t).unwrap())
            .collect()
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let a = generate(&small_spec(1)).unwrap();
        let b = generate(&small_spec(1)).unwrap();
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        write_corpus_jsonl(&a.corpus, &mut buf_a).unwrap();
        write_corpus_jsonl(&b.corpus, &mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
        assert_eq!(a.groups, b.groups);

        let c = generate(&small_spec(2)).unwrap();
        let mut buf_c = Vec::new();
        write_corpus_jsonl(&c.corpus, &mut buf_c).unwrap();
        assert_ne!(buf_a, buf_c);
    }

    #[test]
    fn generated_corpora_validate_cleanly() {
        for seed in 0..5 {
            let out = generate(&small_spec(seed)).unwrap();
            let report = validate_corpus(&out.corpus);
            assert_eq!(report.error_count(), 0, "seed {seed}");
        }
    }

    #[test]
    fn groups_split_learners_in_half() {
        let out = generate(&small_spec(0)).unwrap();
        assert_eq!(out.groups.learners_in(Group::Hp).count(), 2);
        assert_eq!(out.groups.learners_in(Group::Lp).count(), 2);
        assert_eq!(out.corpus.sessions.len(), 8);
    }

    #[test]
    fn mean_extra_codes_per_turn_tracks_rate() {
        let spec = GeneratorSpec {
            n_learners: 12,
            sessions_per_learner: 12,
            turns_min: 70,
            turns_max: 90,
            seed: 5,
            ..GeneratorSpec::default()
        };
        let out = generate(&spec).unwrap();
        let turns = out.corpus.total_turns();
        assert!(turns >= 10_000, "need a large sample, got {turns}");
        let events = out.corpus.total_events();
        let extra_rate = (events - turns) as f64 / turns as f64;
        assert!(
            (extra_rate - spec.two_code_rate).abs() < 0.05,
            "extra-code rate {extra_rate} vs configured {}",
            spec.two_code_rate
        );
    }

    #[test]
    fn zero_rate_injection_leaves_manifest_empty() {
        let spec = GeneratorSpec {
            planted: Some(PlantedPattern {
                labels: planted_trigram(),
                rate_hp: 0.0,
                rate_lp: 0.0,
            }),
            ..small_spec(3)
        };
        let out = generate(&spec).unwrap();
        assert!(out.manifest.injections.is_empty());
        assert!(out.manifest.planted_pattern.is_some());
    }

    #[test]
    fn injected_sessions_contain_the_pattern() {
        let spec = GeneratorSpec {
            planted: Some(PlantedPattern {
                labels: planted_trigram(),
                rate_hp: 1.0,
                rate_lp: 0.0,
            }),
            ..small_spec(4)
        };
        let out = generate(&spec).unwrap();
        let hp_sessions = spec.sessions_per_learner * 2;
        assert_eq!(out.manifest.injections.len(), hp_sessions);
        let pattern = planted_trigram();
        for injection in &out.manifest.injections {
            let session = out
                .corpus
                .sessions
                .iter()
                .find(|s| s.session_id == injection.session_id)
                .unwrap();
            assert!(occurs(&flatten(session).events, &pattern, 1));
        }
    }

    #[test]
    fn enriched_injection_separates_groups_across_seeds() {
        let pattern = planted_trigram();
        let mut positive = 0;
        for seed in 0..100 {
            let spec = GeneratorSpec {
                n_learners: 12,
                sessions_per_learner: 6,
                turns_min: 20,
                turns_max: 30,
                planted: Some(PlantedPattern {
                    labels: pattern.clone(),
                    rate_hp: 0.9,
                    rate_lp: 0.1,
                }),
                seed,
                ..GeneratorSpec::default()
            };
            let out = generate(&spec).unwrap();
            let session_groups = out.groups.session_groups(&out.corpus).unwrap();
            let mut diff = 0i64;
            for session in &out.corpus.sessions {
                if occurs(&flatten(session).events, &pattern, 1) {
                    diff += match session_groups[&session.session_id] {
                        Group::Hp => 1,
                        Group::Lp => -1,
                    };
                }
            }
            if diff > 0 {
                positive += 1;
            }
        }
        assert!(positive >= 95, "positive diff in only {positive}/100 seeds");
    }

    #[test]
    fn labels_to_turns_groups_same_role_runs() {
        let labels: Vec<DALabel> = ["[t]Cp", "[t]Q", "[s]R"]
            .iter()
            .map(|t| DALabel::parse(t).unwrap())
            .collect();
        let turns = labels_to_turns(&labels);
        assert_eq!(turns.len(), 2);
        assert_eq!(turns[0].speaker, SpeakerRole::Chatbot);
        assert_eq!(turns[0].codes, vec![DACode::Cp, DACode::Q]);
        assert_eq!(turns[1].codes, vec![DACode::R]);

        // A same-role repeat cannot share a turn.
        let repeat: Vec<DALabel> = ["[t]Q", "[t]Q"]
            .iter()
            .map(|t| DALabel::parse(t).unwrap())
            .collect();
        let turns = labels_to_turns(&repeat);
        assert_eq!(turns.len(), 2);
    }

    #[test]
    fn spec_validation_rejects_bad_inputs() {
        let mut spec = small_spec(0);
        spec.initial[0] += 0.5;
        assert!(matches!(generate(&spec), Err(Error::InvalidSpec { .. })));

        let mut spec = small_spec(0);
        spec.two_code_rate = 1.5;
        assert!(matches!(generate(&spec), Err(Error::InvalidSpec { .. })));

        let mut spec = small_spec(0);
        spec.planted = Some(PlantedPattern {
            labels: planted_trigram(),
            rate_hp: -0.1,
            rate_lp: 0.0,
        });
        assert!(matches!(generate(&spec), Err(Error::InvalidSpec { .. })));

        let mut spec = small_spec(0);
        spec.alphabet.retain(|l| l.role == SpeakerRole::Chatbot);
        assert!(matches!(generate(&spec), Err(Error::InvalidSpec { .. })));
    }
}
