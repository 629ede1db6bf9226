//! CAF composite oral-proficiency scoring: per-indicator z-scores across
//! learners, orientation-corrected averaging, pre-post gains, and the
//! high-/low-progress (HP/LP) median split that sessions inherit.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Session};
use crate::error::{Error, Result};

/// The six CAF indicators, in proficiency-file column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Indicator {
    /// Non-A1 words per 100 words.
    LexicalComplexity,
    /// Clauses per AS-unit.
    GrammaticalComplexity,
    /// Lexical misuses per 100 words.
    LexicalAccuracy,
    /// Grammatical errors per 100 words.
    GrammaticalAccuracy,
    /// Words per articulation time.
    SpeedFluency,
    /// Pause/repetition/self-correction rate.
    BreakdownRepairFluency,
}

impl Indicator {
    pub const ALL: [Indicator; 6] = [
        Indicator::LexicalComplexity,
        Indicator::GrammaticalComplexity,
        Indicator::LexicalAccuracy,
        Indicator::GrammaticalAccuracy,
        Indicator::SpeedFluency,
        Indicator::BreakdownRepairFluency,
    ];

    pub fn column(self) -> &'static str {
        match self {
            Indicator::LexicalComplexity => "lex_cx",
            Indicator::GrammaticalComplexity => "gram_cx",
            Indicator::LexicalAccuracy => "lex_acc",
            Indicator::GrammaticalAccuracy => "gram_acc",
            Indicator::SpeedFluency => "speed_flu",
            Indicator::BreakdownRepairFluency => "bdr_flu",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Timepoint {
    Pre,
    Post,
}

impl fmt::Display for Timepoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Timepoint::Pre => f.write_str("pre"),
            Timepoint::Post => f.write_str("post"),
        }
    }
}

/// Direction in which an indicator tracks proficiency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Higher,
    Lower,
}

/// Per-indicator orientation map. Error and dysfluency rates are
/// lower-is-better by default so that a higher composite means better
/// proficiency.
pub type OrientationMap = BTreeMap<Indicator, Orientation>;

pub fn default_orientation() -> OrientationMap {
    use Indicator::*;
    use Orientation::*;
    [
        (LexicalComplexity, Higher),
        (GrammaticalComplexity, Higher),
        (LexicalAccuracy, Lower),
        (GrammaticalAccuracy, Lower),
        (SpeedFluency, Higher),
        (BreakdownRepairFluency, Lower),
    ]
    .into()
}

/// Population the per-indicator standardization runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StandardizationScope {
    /// Across learners within each timepoint (gains reflect relative movement).
    #[default]
    WithinTimepoint,
    /// Across all records of both timepoints.
    Pooled,
}

/// One learner's six indicator values at one timepoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ProficiencyRecord {
    pub learner_id: String,
    pub timepoint: Timepoint,
    pub indicators: [f64; 6],
}

/// Standardized, orientation-corrected score for one learner/timepoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeScore {
    pub learner_id: String,
    pub timepoint: Timepoint,
    pub z_indicators: [f64; 6],
    pub composite: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainRecord {
    pub learner_id: String,
    pub gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "HP")]
    Hp,
    #[serde(rename = "LP")]
    Lp,
}

impl Group {
    pub fn opposite(self) -> Group {
        match self {
            Group::Hp => Group::Lp,
            Group::Lp => Group::Hp,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::Hp => f.write_str("HP"),
            Group::Lp => f.write_str("LP"),
        }
    }
}

/// Learner-level HP/LP assignment; sessions inherit their learner's group.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroupAssignment {
    pub learner_groups: BTreeMap<String, Group>,
}

impl GroupAssignment {
    pub fn group_of_learner(&self, learner_id: &str) -> Option<Group> {
        self.learner_groups.get(learner_id).copied()
    }

    pub fn group_of_session(&self, session: &Session) -> Option<Group> {
        self.group_of_learner(&session.learner_id)
    }

    /// Resolve every session of a corpus to its learner's group.
    pub fn session_groups(&self, corpus: &Corpus) -> Result<BTreeMap<String, Group>> {
        let mut map = BTreeMap::new();
        for session in &corpus.sessions {
            let group = self
                .group_of_session(session)
                .ok_or_else(|| Error::UngroupedSession {
                    session_id: session.session_id.clone(),
                })?;
            map.insert(session.session_id.clone(), group);
        }
        Ok(map)
    }

    pub fn learners_in(&self, group: Group) -> impl Iterator<Item = &String> {
        self.learner_groups
            .iter()
            .filter(move |(_, g)| **g == group)
            .map(|(id, _)| id)
    }
}

/// Sample z-scores: (x - mean) / sd with divisor n-1.
pub fn zscore(values: &[f64]) -> Result<Vec<f64>> {
    let n = values.len();
    if n < 2 {
        return Err(Error::TooFewValues {
            required: 2,
            got: n,
        });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    if var <= 0.0 {
        return Err(Error::ZeroVariance {
            context: "z-score input".into(),
        });
    }
    let sd = var.sqrt();
    Ok(values.iter().map(|v| (v - mean) / sd).collect())
}

/// Standardize each indicator across learners, orient so higher is better,
/// and average into one composite per learner per timepoint.
pub fn composite_scores(
    records: &[ProficiencyRecord],
    orientation: &OrientationMap,
    scope: StandardizationScope,
) -> Result<Vec<CompositeScore>> {
    // Exactly one record per learner per timepoint.
    let mut by_key: BTreeMap<(String, Timepoint), &ProficiencyRecord> = BTreeMap::new();
    let mut learners: BTreeSet<String> = BTreeSet::new();
    for record in records {
        learners.insert(record.learner_id.clone());
        if by_key
            .insert((record.learner_id.clone(), record.timepoint), record)
            .is_some()
        {
            return Err(Error::DuplicateRecord {
                learner_id: record.learner_id.clone(),
                timepoint: record.timepoint.to_string(),
            });
        }
    }
    if learners.len() < 2 {
        return Err(Error::TooFewValues {
            required: 2,
            got: learners.len(),
        });
    }
    for learner in &learners {
        for tp in [Timepoint::Pre, Timepoint::Post] {
            if !by_key.contains_key(&(learner.clone(), tp)) {
                return Err(Error::MissingTimepoint {
                    learner_id: learner.clone(),
                    timepoint: tp.to_string(),
                });
            }
        }
    }
    for record in records {
        if record.indicators.iter().any(|v| !v.is_finite()) {
            return Err(Error::Other(format!(
                "non-finite indicator value for learner {:?} at {}",
                record.learner_id, record.timepoint
            )));
        }
    }

    // Standardization cohorts: one per timepoint, or one pooled.
    let cohorts: Vec<Vec<&ProficiencyRecord>> = match scope {
        StandardizationScope::WithinTimepoint => [Timepoint::Pre, Timepoint::Post]
            .into_iter()
            .map(|tp| {
                learners
                    .iter()
                    .map(|l| by_key[&(l.clone(), tp)])
                    .collect::<Vec<_>>()
            })
            .collect(),
        StandardizationScope::Pooled => {
            vec![by_key.values().copied().collect()]
        }
    };

    let mut scores = Vec::new();
    for cohort in cohorts {
        let mut z_columns: Vec<Vec<f64>> = Vec::with_capacity(6);
        for (idx, indicator) in Indicator::ALL.iter().enumerate() {
            let column: Vec<f64> = cohort.iter().map(|r| r.indicators[idx]).collect();
            let mut z = zscore(&column).map_err(|e| match e {
                Error::ZeroVariance { .. } => Error::ZeroVariance {
                    context: format!("indicator {}", indicator.column()),
                },
                other => other,
            })?;
            if orientation.get(indicator) == Some(&Orientation::Lower) {
                for v in &mut z {
                    *v = -*v;
                }
            }
            z_columns.push(z);
        }
        for (row, record) in cohort.iter().enumerate() {
            let mut z_indicators = [0.0; 6];
            for (col, z) in z_columns.iter().enumerate() {
                z_indicators[col] = z[row];
            }
            scores.push(CompositeScore {
                learner_id: record.learner_id.clone(),
                timepoint: record.timepoint,
                z_indicators,
                composite: z_indicators.iter().sum::<f64>() / 6.0,
            });
        }
    }
    scores.sort_by(|a, b| (&a.learner_id, a.timepoint).cmp(&(&b.learner_id, b.timepoint)));
    Ok(scores)
}

/// Post-minus-pre gains and the HP/LP median split.
///
/// Learners sort by gain descending (learner id ascending on ties); the top
/// half is HP. An odd learner count puts the extra learner in LP, and a tie
/// straddling the median is reported as a warning.
pub fn gains_and_groups(
    scores: &[CompositeScore],
) -> Result<(Vec<GainRecord>, GroupAssignment, Vec<String>)> {
    let mut by_learner: BTreeMap<String, (Option<f64>, Option<f64>)> = BTreeMap::new();
    for score in scores {
        let entry = by_learner.entry(score.learner_id.clone()).or_default();
        match score.timepoint {
            Timepoint::Pre => entry.0 = Some(score.composite),
            Timepoint::Post => entry.1 = Some(score.composite),
        }
    }

    let mut gains = Vec::new();
    for (learner_id, (pre, post)) in &by_learner {
        let (pre, post) = match (pre, post) {
            (Some(pre), Some(post)) => (pre, post),
            (None, _) => {
                return Err(Error::MissingTimepoint {
                    learner_id: learner_id.clone(),
                    timepoint: Timepoint::Pre.to_string(),
                })
            }
            (_, None) => {
                return Err(Error::MissingTimepoint {
                    learner_id: learner_id.clone(),
                    timepoint: Timepoint::Post.to_string(),
                })
            }
        };
        gains.push(GainRecord {
            learner_id: learner_id.clone(),
            gain: post - pre,
        });
    }

    let mut ranked = gains.clone();
    ranked.sort_by(|a, b| {
        b.gain
            .partial_cmp(&a.gain)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.learner_id.cmp(&b.learner_id))
    });

    let n = ranked.len();
    let n_hp = n / 2;
    let mut warnings = Vec::new();
    if n % 2 == 1 {
        warnings.push(format!(
            "odd learner count ({n}): assigning the extra learner to LP"
        ));
    }
    if n_hp > 0 && n_hp < n && ranked[n_hp - 1].gain == ranked[n_hp].gain {
        warnings.push(format!(
            "gain tie at the median ({}): split decided by learner id",
            ranked[n_hp].gain
        ));
    }

    let mut assignment = GroupAssignment::default();
    for (rank, record) in ranked.iter().enumerate() {
        let group = if rank < n_hp { Group::Hp } else { Group::Lp };
        assignment
            .learner_groups
            .insert(record.learner_id.clone(), group);
    }

    Ok((gains, assignment, warnings))
}

/// Load the proficiency CSV:
/// `learner_id,timepoint,lex_cx,gram_cx,lex_acc,gram_acc,speed_flu,bdr_flu`.
pub fn load_proficiency(path: &Path) -> Result<Vec<ProficiencyRecord>> {
    let file = std::fs::File::open(path)?;
    parse_proficiency_csv(std::io::BufReader::new(file))
}

pub const PROFICIENCY_HEADER: &str =
    "learner_id,timepoint,lex_cx,gram_cx,lex_acc,gram_acc,speed_flu,bdr_flu";

pub fn parse_proficiency_csv<R: BufRead>(reader: R) -> Result<Vec<ProficiencyRecord>> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if line_no == 1 {
            if trimmed != PROFICIENCY_HEADER {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("expected header {PROFICIENCY_HEADER:?}"),
                });
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 8 fields, got {}", fields.len()),
            });
        }
        let timepoint = match fields[1] {
            "pre" => Timepoint::Pre,
            "post" => Timepoint::Post,
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("timepoint must be pre or post, got {other:?}"),
                })
            }
        };
        let mut indicators = [0.0; 6];
        for (i, field) in fields[2..].iter().enumerate() {
            indicators[i] = field.parse::<f64>().map_err(|e| Error::Parse {
                line: line_no,
                msg: format!("bad number {field:?}: {e}"),
            })?;
        }
        records.push(ProficiencyRecord {
            learner_id: fields[0].to_string(),
            timepoint,
            indicators,
        });
    }
    Ok(records)
}

pub fn write_proficiency_csv<W: Write>(
    records: &[ProficiencyRecord],
    writer: &mut W,
) -> Result<()> {
    writeln!(writer, "{PROFICIENCY_HEADER}")?;
    for r in records {
        write!(writer, "{},{}", r.learner_id, r.timepoint)?;
        for v in r.indicators {
            write!(writer, ",{v}")?;
        }
        writeln!(writer)?;
    }
    Ok(())
}

/// Load a groups CSV: `learner_id,group` with group HP or LP.
pub fn load_groups(path: &Path) -> Result<GroupAssignment> {
    let file = std::fs::File::open(path)?;
    parse_groups_csv(std::io::BufReader::new(file))
}

pub fn parse_groups_csv<R: BufRead>(reader: R) -> Result<GroupAssignment> {
    let mut assignment = GroupAssignment::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || (line_no == 1 && trimmed == "learner_id,group") {
            continue;
        }
        let (learner_id, group) = trimmed.split_once(',').ok_or_else(|| Error::Parse {
            line: line_no,
            msg: "expected learner_id,group".into(),
        })?;
        let group = match group.trim() {
            "HP" => Group::Hp,
            "LP" => Group::Lp,
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("group must be HP or LP, got {other:?}"),
                })
            }
        };
        assignment
            .learner_groups
            .insert(learner_id.trim().to_string(), group);
    }
    Ok(assignment)
}

pub fn write_groups_csv<W: Write>(assignment: &GroupAssignment, writer: &mut W) -> Result<()> {
    writeln!(writer, "learner_id,group")?;
    for (learner_id, group) in &assignment.learner_groups {
        writeln!(writer, "{learner_id},{group}")?;
    }
    Ok(())
}
