//! Learner-clustered permutation tests of group differences in pattern
//! prevalence. Group labels are shuffled across learners, never across
//! individual sessions, preserving within-learner dependency; the test is
//! two-sided on the HP-LP support difference.

use std::collections::{BTreeMap, HashMap};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, DALabel, EventStream};
use crate::error::{Error, Result};
use crate::freqstats::holm_bonferroni;
use crate::scoring::{Group, GroupAssignment};
use crate::seqmine::{occurs, Pattern};

/// Learners with their sessions and observed group, the unit of shuffling.
#[derive(Debug, Clone)]
pub struct ClusterDesign {
    learners: Vec<LearnerCluster>,
}

#[derive(Debug, Clone)]
struct LearnerCluster {
    learner_id: String,
    session_ids: Vec<String>,
    group: Group,
}

impl ClusterDesign {
    /// Build from a corpus and its learner-level assignment. Learners without
    /// sessions contribute nothing and are left out.
    pub fn from_corpus(corpus: &Corpus, groups: &GroupAssignment) -> Result<ClusterDesign> {
        let mut by_learner: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for session in &corpus.sessions {
            by_learner
                .entry(session.learner_id.clone())
                .or_default()
                .push(session.session_id.clone());
        }
        let mut learners = Vec::with_capacity(by_learner.len());
        for (learner_id, session_ids) in by_learner {
            let group =
                groups
                    .group_of_learner(&learner_id)
                    .ok_or_else(|| Error::UngroupedSession {
                        session_id: session_ids[0].clone(),
                    })?;
            learners.push(LearnerCluster {
                learner_id,
                session_ids,
                group,
            });
        }
        Ok(ClusterDesign { learners })
    }

    pub fn n_learners(&self) -> usize {
        self.learners.len()
    }

    pub fn n_hp_learners(&self) -> usize {
        self.learners
            .iter()
            .filter(|l| l.group == Group::Hp)
            .count()
    }

    pub fn learner_ids(&self) -> impl Iterator<Item = &str> {
        self.learners.iter().map(|l| l.learner_id.as_str())
    }

    /// Number of distinct learner-to-group assignments with the observed
    /// group sizes; None on overflow.
    pub fn assignment_count(&self) -> Option<u128> {
        binomial(self.n_learners(), self.n_hp_learners())
    }

    /// Per-learner counts of sessions containing the pattern.
    fn presence_counts(
        &self,
        pattern: &[DALabel],
        streams: &[EventStream],
        max_gap: usize,
    ) -> Result<Vec<u32>> {
        let by_id: HashMap<&str, &EventStream> =
            streams.iter().map(|s| (s.session_id.as_str(), s)).collect();
        let mut counts = Vec::with_capacity(self.learners.len());
        for learner in &self.learners {
            let mut count = 0u32;
            for sid in &learner.session_ids {
                let stream = by_id.get(sid.as_str()).ok_or_else(|| {
                    Error::Other(format!(
                        "design references session {sid:?} with no event stream"
                    ))
                })?;
                if occurs(&stream.events, pattern, max_gap) {
                    count += 1;
                }
            }
            counts.push(count);
        }
        Ok(counts)
    }
}

pub fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 0..k {
        result = result.checked_mul((n - i) as u128)?;
        result /= (i + 1) as u128;
    }
    Some(result)
}

/// Support difference HP minus LP for a pattern under a session-level group
/// map, presence via `occurs` with the mining max_gap.
pub fn pattern_stat(
    pattern: &[DALabel],
    streams: &[EventStream],
    session_groups: &BTreeMap<String, Group>,
    max_gap: usize,
) -> Result<i64> {
    let mut stat = 0i64;
    for stream in streams {
        let group =
            session_groups
                .get(&stream.session_id)
                .ok_or_else(|| Error::UngroupedSession {
                    session_id: stream.session_id.clone(),
                })?;
        if occurs(&stream.events, pattern, max_gap) {
            stat += match group {
                Group::Hp => 1,
                Group::Lp => -1,
            };
        }
    }
    Ok(stat)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PermMode {
    Exact,
    MonteCarlo,
}

impl std::fmt::Display for PermMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PermMode::Exact => f.write_str("exact"),
            PermMode::MonteCarlo => f.write_str("monte_carlo"),
        }
    }
}

/// Permutation test outcome for one pattern.
#[derive(Debug, Clone)]
pub struct PermutationResult {
    pub labels: Vec<DALabel>,
    pub support_hp: u32,
    pub support_lp: u32,
    /// HP minus LP session support under the observed assignment.
    pub observed_stat: i64,
    pub p_raw: f64,
    pub p_adj: f64,
    pub mode: PermMode,
    pub n_permutations: u64,
    pub seed: Option<u64>,
    pub significant: bool,
    pub marginal: bool,
}

impl PermutationResult {
    pub fn text(&self) -> String {
        let parts: Vec<String> = self.labels.iter().map(|l| l.to_string()).collect();
        parts.join(" \u{2192} ")
    }

    pub fn flag(&self) -> &'static str {
        if self.significant {
            "*"
        } else if self.marginal {
            "\u{2020}"
        } else {
            ""
        }
    }
}

pub const DEFAULT_EXACT_CAP: u128 = 1_000_000;

/// Test statistic recomputed under each assignment. The raw support
/// difference suits balanced designs; the proportion difference divides each
/// group's support by the sessions the assigned learners contribute, for
/// unbalanced ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermStatistic {
    #[default]
    SupportDiff,
    ProportionDiff,
}

struct StatEvaluator<'a> {
    statistic: PermStatistic,
    counts: &'a [u32],
    sessions: Vec<i64>,
    total_count: i64,
    total_sessions: i64,
}

impl<'a> StatEvaluator<'a> {
    fn new(statistic: PermStatistic, counts: &'a [u32], design: &ClusterDesign) -> Self {
        let sessions: Vec<i64> = design
            .learners
            .iter()
            .map(|l| l.session_ids.len() as i64)
            .collect();
        StatEvaluator {
            statistic,
            counts,
            total_count: counts.iter().map(|&c| c as i64).sum(),
            total_sessions: sessions.iter().sum(),
            sessions,
        }
    }

    fn eval(&self, chosen: &[usize]) -> f64 {
        let hp_count: i64 = chosen.iter().map(|&i| self.counts[i] as i64).sum();
        match self.statistic {
            PermStatistic::SupportDiff => (2 * hp_count - self.total_count) as f64,
            PermStatistic::ProportionDiff => {
                let hp_sessions: i64 = chosen.iter().map(|&i| self.sessions[i]).sum();
                let lp_sessions = self.total_sessions - hp_sessions;
                if hp_sessions == 0 || lp_sessions == 0 {
                    return 0.0;
                }
                hp_count as f64 / hp_sessions as f64
                    - (self.total_count - hp_count) as f64 / lp_sessions as f64
            }
        }
    }

    fn observed(&self, design: &ClusterDesign) -> f64 {
        let chosen: Vec<usize> = design
            .learners
            .iter()
            .enumerate()
            .filter(|(_, l)| l.group == Group::Hp)
            .map(|(i, _)| i)
            .collect();
        self.eval(&chosen)
    }
}

// Float slack for proportion statistics; support differences are exact
// small integers in f64.
const STAT_TIE_EPS: f64 = 1e-12;

fn result_from_counts(
    pattern: &[DALabel],
    counts: &[u32],
    design: &ClusterDesign,
    p_raw: f64,
    mode: PermMode,
    n_permutations: u64,
    seed: Option<u64>,
) -> PermutationResult {
    let (mut hp, mut lp) = (0u32, 0u32);
    for (learner, &count) in design.learners.iter().zip(counts) {
        match learner.group {
            Group::Hp => hp += count,
            Group::Lp => lp += count,
        }
    }
    PermutationResult {
        labels: pattern.to_vec(),
        support_hp: hp,
        support_lp: lp,
        observed_stat: hp as i64 - lp as i64,
        p_raw,
        p_adj: p_raw,
        mode,
        n_permutations,
        seed,
        significant: false,
        marginal: false,
    }
}

/// Exact test: enumerate every learner-to-group assignment with the observed
/// group sizes; two-sided p is the fraction with |stat| at least the observed
/// |stat| (the observed assignment is part of the enumeration).
pub fn exact_permutation_test(
    pattern: &[DALabel],
    streams: &[EventStream],
    design: &ClusterDesign,
    max_gap: usize,
    exact_cap: u128,
) -> Result<PermutationResult> {
    exact_permutation_test_with(
        pattern,
        streams,
        design,
        max_gap,
        exact_cap,
        PermStatistic::SupportDiff,
    )
}

pub fn exact_permutation_test_with(
    pattern: &[DALabel],
    streams: &[EventStream],
    design: &ClusterDesign,
    max_gap: usize,
    exact_cap: u128,
    statistic: PermStatistic,
) -> Result<PermutationResult> {
    let n = design.n_learners();
    let k = design.n_hp_learners();
    let combinations =
        binomial(n, k)
            .filter(|&c| c <= exact_cap)
            .ok_or(Error::ExactCapExceeded {
                combinations: binomial(n, k).unwrap_or(u128::MAX),
                cap: exact_cap,
            })?;

    let counts = design.presence_counts(pattern, streams, max_gap)?;
    let observed = result_from_counts(
        pattern,
        &counts,
        design,
        0.0,
        PermMode::Exact,
        combinations as u64,
        None,
    );
    let evaluator = StatEvaluator::new(statistic, &counts, design);
    let threshold = evaluator.observed(design).abs() - STAT_TIE_EPS;

    let mut extreme = 0u64;
    for_each_combination(n, k, |chosen| {
        if evaluator.eval(chosen).abs() >= threshold {
            extreme += 1;
        }
    });

    Ok(PermutationResult {
        p_raw: extreme as f64 / combinations as f64,
        p_adj: extreme as f64 / combinations as f64,
        ..observed
    })
}

/// Monte-Carlo test with the add-one estimator p = (1 + hits) / (1 + n).
///
/// Each draw uses its own counter-derived RNG stream, so the result for a
/// given seed does not depend on evaluation order.
pub fn monte_carlo_permutation_test(
    pattern: &[DALabel],
    streams: &[EventStream],
    design: &ClusterDesign,
    max_gap: usize,
    n_draws: usize,
    seed: u64,
) -> Result<PermutationResult> {
    monte_carlo_permutation_test_with(
        pattern,
        streams,
        design,
        max_gap,
        n_draws,
        seed,
        PermStatistic::SupportDiff,
    )
}

pub fn monte_carlo_permutation_test_with(
    pattern: &[DALabel],
    streams: &[EventStream],
    design: &ClusterDesign,
    max_gap: usize,
    n_draws: usize,
    seed: u64,
    statistic: PermStatistic,
) -> Result<PermutationResult> {
    if n_draws < 100 {
        return Err(Error::InvalidPermutationCount {
            n: n_draws,
            min: 100,
        });
    }
    let n = design.n_learners();
    let k = design.n_hp_learners();
    let counts = design.presence_counts(pattern, streams, max_gap)?;
    let observed = result_from_counts(
        pattern,
        &counts,
        design,
        0.0,
        PermMode::MonteCarlo,
        n_draws as u64,
        Some(seed),
    );
    let evaluator = StatEvaluator::new(statistic, &counts, design);
    let threshold = evaluator.observed(design).abs() - STAT_TIE_EPS;

    let mut hits = 0u64;
    let mut indices: Vec<usize> = (0..n).collect();
    for draw in 0..n_draws {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(draw as u64 + 1);
        for slot in 0..k {
            let pick = rng.gen_range(slot..n);
            indices.swap(slot, pick);
        }
        if evaluator.eval(&indices[..k]).abs() >= threshold {
            hits += 1;
        }
        indices.sort_unstable();
    }

    let p = (1 + hits) as f64 / (1 + n_draws) as f64;
    Ok(PermutationResult {
        p_raw: p,
        p_adj: p,
        ..observed
    })
}

/// How to obtain permutation p-values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PermStrategy {
    /// Exact when the assignment count fits the cap, Monte Carlo otherwise.
    #[default]
    Auto,
    Exact,
    #[serde(rename = "mc")]
    MonteCarlo,
}

impl std::str::FromStr for PermStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(PermStrategy::Auto),
            "exact" => Ok(PermStrategy::Exact),
            "mc" => Ok(PermStrategy::MonteCarlo),
            other => Err(Error::Config(format!("unknown permutation mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PermTestSettings {
    pub strategy: PermStrategy,
    pub statistic: PermStatistic,
    pub n_draws: usize,
    pub seed: u64,
    pub exact_cap: u128,
    pub max_gap: usize,
    pub alpha: f64,
    pub marginal_band: f64,
}

impl Default for PermTestSettings {
    fn default() -> Self {
        PermTestSettings {
            strategy: PermStrategy::Auto,
            statistic: PermStatistic::SupportDiff,
            n_draws: 10_000,
            seed: 0,
            exact_cap: DEFAULT_EXACT_CAP,
            max_gap: 1,
            alpha: 0.05,
            marginal_band: 0.10,
        }
    }
}

/// Test every pattern of the filtered set, Holm-correcting across the set,
/// and flag significant (adjusted p below alpha) and marginal (between alpha
/// and the marginal band) results.
pub fn test_pattern_set(
    patterns: &[Pattern],
    streams: &[EventStream],
    design: &ClusterDesign,
    settings: &PermTestSettings,
) -> Result<Vec<PermutationResult>> {
    let use_exact = match settings.strategy {
        PermStrategy::Exact => true,
        PermStrategy::MonteCarlo => false,
        PermStrategy::Auto => design
            .assignment_count()
            .is_some_and(|c| c <= settings.exact_cap),
    };

    let mut results = Vec::with_capacity(patterns.len());
    for pattern in patterns {
        let result = if use_exact {
            exact_permutation_test_with(
                &pattern.labels,
                streams,
                design,
                settings.max_gap,
                settings.exact_cap,
                settings.statistic,
            )?
        } else {
            monte_carlo_permutation_test_with(
                &pattern.labels,
                streams,
                design,
                settings.max_gap,
                settings.n_draws,
                settings.seed,
                settings.statistic,
            )?
        };
        results.push(result);
    }

    let raw: Vec<f64> = results.iter().map(|r| r.p_raw).collect();
    let adjusted = holm_bonferroni(&raw)?;
    for (result, p_adj) in results.iter_mut().zip(adjusted) {
        result.p_adj = p_adj;
        result.significant = p_adj < settings.alpha;
        result.marginal =
            !result.significant && p_adj > settings.alpha && p_adj < settings.marginal_band;
    }
    Ok(results)
}

/// Visit every k-subset of 0..n in lexicographic order.
fn for_each_combination(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    if k == 0 {
        visit(&[]);
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        let mut i = k;
        while i > 0 {
            i -= 1;
            if idx[i] != n - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
            if i == 0 {
                return;
            }
        }
    }
}
