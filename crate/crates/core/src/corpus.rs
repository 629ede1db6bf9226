//! Annotated-dialogue data model: dialogue-act codes, role-prefixed labels,
//! turns, sessions, and the flattened event streams all counting and mining
//! run on.
//!
//! Corpora are stored as JSON Lines, one session per line:
//!
//! ```text
//! {"session_id": "s1", "learner_id": "L01", "turns": [{"speaker": "chatbot", "codes": ["G", "Q"]}, ...]}
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The eleven dialogue-act codes of the coding scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DACode {
    /// Referential question
    Q,
    /// Greeting / closing
    G,
    /// Topic shifting
    T,
    /// Seeking clarification
    S,
    /// Agreement
    A,
    /// Disagreement
    D,
    /// Misinterpretation
    M,
    /// Response
    R,
    /// Recast
    Cr,
    /// Prompting
    Cp,
    /// Explicit correction
    Ce,
}

/// Meaning-focused vs. form-focused dimension of a code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dimension {
    MeaningFocused,
    FormFocused,
}

/// Pedagogical function a code serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PedagogicalFunction {
    Inviting,
    Sustaining,
    ContentFeedback,
    CorrectiveFeedback,
}

impl DACode {
    /// All codes in scheme order.
    pub const ALL: [DACode; 11] = [
        DACode::Q,
        DACode::G,
        DACode::T,
        DACode::S,
        DACode::A,
        DACode::D,
        DACode::M,
        DACode::R,
        DACode::Cr,
        DACode::Cp,
        DACode::Ce,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            DACode::Q => "Q",
            DACode::G => "G",
            DACode::T => "T",
            DACode::S => "S",
            DACode::A => "A",
            DACode::D => "D",
            DACode::M => "M",
            DACode::R => "R",
            DACode::Cr => "Cr",
            DACode::Cp => "Cp",
            DACode::Ce => "Ce",
        }
    }

    pub fn parse(s: &str) -> Option<DACode> {
        DACode::ALL.iter().copied().find(|c| c.symbol() == s)
    }

    /// Only the corrective-feedback codes are form-focused.
    pub fn dimension(self) -> Dimension {
        match self.function() {
            PedagogicalFunction::CorrectiveFeedback => Dimension::FormFocused,
            _ => Dimension::MeaningFocused,
        }
    }

    pub fn function(self) -> PedagogicalFunction {
        match self {
            DACode::Q | DACode::G | DACode::T => PedagogicalFunction::Inviting,
            DACode::S | DACode::A | DACode::D | DACode::M => PedagogicalFunction::Sustaining,
            DACode::R => PedagogicalFunction::ContentFeedback,
            DACode::Cr | DACode::Cp | DACode::Ce => PedagogicalFunction::CorrectiveFeedback,
        }
    }

    pub fn is_corrective_feedback(self) -> bool {
        self.function() == PedagogicalFunction::CorrectiveFeedback
    }

    /// Position in scheme order, used as a stable tie-break.
    pub fn scheme_index(self) -> usize {
        DACode::ALL.iter().position(|c| *c == self).unwrap()
    }
}

impl fmt::Display for DACode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Who produced a turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeakerRole {
    Student,
    Chatbot,
}

impl SpeakerRole {
    /// Label prefix: "[s]" for the student, "[t]" for the chatbot.
    pub fn prefix(self) -> &'static str {
        match self {
            SpeakerRole::Student => "[s]",
            SpeakerRole::Chatbot => "[t]",
        }
    }
}

impl fmt::Display for SpeakerRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpeakerRole::Student => f.write_str("student"),
            SpeakerRole::Chatbot => f.write_str("chatbot"),
        }
    }
}

/// Role-prefixed dialogue-act code, e.g. `[s]R` or `[t]Cp`. The atomic unit
/// of counting and mining; 22 possible values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DALabel {
    pub role: SpeakerRole,
    pub code: DACode,
}

impl DALabel {
    pub const COUNT: usize = 22;

    pub fn new(role: SpeakerRole, code: DACode) -> Self {
        DALabel { role, code }
    }

    pub fn student(code: DACode) -> Self {
        DALabel::new(SpeakerRole::Student, code)
    }

    pub fn chatbot(code: DACode) -> Self {
        DALabel::new(SpeakerRole::Chatbot, code)
    }

    /// All 22 labels, student codes first, in scheme order.
    pub fn all() -> impl Iterator<Item = DALabel> {
        [SpeakerRole::Student, SpeakerRole::Chatbot]
            .into_iter()
            .flat_map(|role| {
                DACode::ALL
                    .into_iter()
                    .map(move |code| DALabel { role, code })
            })
    }

    /// Parse the canonical text form, e.g. "[t]Cp".
    pub fn parse(s: &str) -> Option<DALabel> {
        let (prefix, code) = s.split_at_checked(3)?;
        let role = match prefix {
            "[s]" => SpeakerRole::Student,
            "[t]" => SpeakerRole::Chatbot,
            _ => return None,
        };
        Some(DALabel::new(role, DACode::parse(code)?))
    }
}

impl fmt::Display for DALabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.role.prefix(), self.code.symbol())
    }
}

// Order by canonical text form so reports and tie-breaks follow label text.
impl Ord for DALabel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.role.prefix(), self.code.symbol()).cmp(&(other.role.prefix(), other.code.symbol()))
    }
}

impl PartialOrd for DALabel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// One speaking turn: a speaker and one or two distinct codes, in the order
/// given by the annotation file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub index: usize,
    pub speaker: SpeakerRole,
    pub codes: Vec<DACode>,
}

impl Turn {
    pub fn labels(&self) -> impl Iterator<Item = DALabel> + '_ {
        self.codes
            .iter()
            .map(|&code| DALabel::new(self.speaker, code))
    }
}

/// An annotated learner-chatbot session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub learner_id: String,
    pub turns: Vec<Turn>,
}

/// A set of sessions plus the learners they belong to.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub sessions: Vec<Session>,
    pub learners: BTreeSet<String>,
}

impl Corpus {
    pub fn from_sessions(sessions: Vec<Session>) -> Self {
        let learners = sessions.iter().map(|s| s.learner_id.clone()).collect();
        Corpus { sessions, learners }
    }

    pub fn total_turns(&self) -> usize {
        self.sessions.iter().map(|s| s.turns.len()).sum()
    }

    pub fn total_events(&self) -> usize {
        self.sessions
            .iter()
            .flat_map(|s| &s.turns)
            .map(|t| t.codes.len())
            .sum()
    }
}

/// A session flattened to its ordered sequence of role-prefixed labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    pub session_id: String,
    pub events: Vec<DALabel>,
}

/// Flatten a session: events in turn order, within-turn code order preserved,
/// each event carrying the turn's speaker role.
pub fn flatten(session: &Session) -> EventStream {
    EventStream {
        session_id: session.session_id.clone(),
        events: session.turns.iter().flat_map(|t| t.labels()).collect(),
    }
}

pub fn flatten_corpus(corpus: &Corpus) -> Vec<EventStream> {
    corpus.sessions.iter().map(flatten).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationIssue {
    pub severity: Severity,
    pub location: String,
    pub message: String,
}

/// Outcome of `validate_corpus`: structural violations as errors, attested-only
/// conventions as warnings.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    fn push(&mut self, severity: Severity, location: String, message: String) {
        self.issues.push(ValidationIssue {
            severity,
            location,
            message,
        });
    }

    pub fn errors(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues
            .iter()
            .filter(|i| i.severity == Severity::Warning)
    }

    pub fn error_count(&self) -> usize {
        self.errors().count()
    }

    pub fn warning_count(&self) -> usize {
        self.warnings().count()
    }

    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Check a corpus against the coding-scheme invariants. Pure; never mutates.
///
/// Structural violations (empty sessions, empty or oversized turns, repeated
/// codes, broken indices, unknown learners, duplicate session ids) are errors.
/// Corrective-feedback codes on student turns are warnings only: the scheme
/// does not forbid them, the observed data merely lacks them.
pub fn validate_corpus(corpus: &Corpus) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen_ids = BTreeSet::new();

    for session in &corpus.sessions {
        let sid = &session.session_id;
        if !seen_ids.insert(sid.clone()) {
            report.push(
                Severity::Error,
                format!("session {sid}"),
                "duplicate session id".into(),
            );
        }
        if !corpus.learners.contains(&session.learner_id) {
            report.push(
                Severity::Error,
                format!("session {sid}"),
                format!("learner {:?} not in corpus learner set", session.learner_id),
            );
        }
        if session.turns.is_empty() {
            report.push(
                Severity::Error,
                format!("session {sid}"),
                "session has zero turns after cleaning".into(),
            );
        }
        for (expected, turn) in session.turns.iter().enumerate() {
            let loc = format!("session {sid}, turn {}", turn.index);
            if turn.index != expected {
                report.push(
                    Severity::Error,
                    loc.clone(),
                    format!(
                        "turn index {} out of order (expected {expected})",
                        turn.index
                    ),
                );
            }
            if turn.codes.is_empty() {
                report.push(Severity::Error, loc.clone(), "turn has no codes".into());
            }
            if turn.codes.len() > 2 {
                report.push(
                    Severity::Error,
                    loc.clone(),
                    format!("turn has {} codes (at most 2 allowed)", turn.codes.len()),
                );
            }
            if turn.codes.len() == 2 && turn.codes[0] == turn.codes[1] {
                report.push(
                    Severity::Error,
                    loc.clone(),
                    format!("turn repeats code {}", turn.codes[0]),
                );
            }
            if turn.speaker == SpeakerRole::Student {
                for code in turn.codes.iter().filter(|c| c.is_corrective_feedback()) {
                    report.push(
                        Severity::Warning,
                        loc.clone(),
                        format!("corrective-feedback code {code} on a student turn"),
                    );
                }
            }
        }
    }
    report
}

/// Corpus summary: session/learner/turn/event totals and per-label counts.
#[derive(Debug, Clone, Serialize)]
pub struct CorpusSummary {
    pub sessions: usize,
    pub learners: usize,
    pub turns: usize,
    /// None when the corpus has no sessions (undefined mean).
    pub mean_turns_per_session: Option<f64>,
    pub total_events: usize,
    /// Sorted by descending count, label text as tie-break.
    pub label_counts: Vec<(DALabel, usize)>,
}

/// Count labels over a set of event streams, sorted by descending count with
/// a stable tie-break on label text.
pub fn count_labels(streams: &[EventStream]) -> Vec<(DALabel, usize)> {
    let mut counts: BTreeMap<DALabel, usize> = BTreeMap::new();
    for stream in streams {
        for &label in &stream.events {
            *counts.entry(label).or_insert(0) += 1;
        }
    }
    let mut rows: Vec<(DALabel, usize)> = counts.into_iter().collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    rows
}

pub fn summarize(corpus: &Corpus) -> CorpusSummary {
    let streams = flatten_corpus(corpus);
    let sessions = corpus.sessions.len();
    let turns = corpus.total_turns();
    CorpusSummary {
        sessions,
        learners: corpus.learners.len(),
        turns,
        mean_turns_per_session: if sessions == 0 {
            None
        } else {
            Some(turns as f64 / sessions as f64)
        },
        total_events: corpus.total_events(),
        label_counts: count_labels(&streams),
    }
}

#[derive(Debug, Deserialize)]
struct RawTurn {
    speaker: SpeakerRole,
    codes: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct RawSession {
    session_id: String,
    learner_id: String,
    turns: Vec<RawTurn>,
    #[serde(flatten)]
    extra: BTreeMap<String, serde_json::Value>,
}

/// A corpus fresh off disk, with the cleaning count and load warnings.
#[derive(Debug)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    /// Turns dropped because their code list was empty (recording failures).
    pub removed_empty_turns: usize,
    pub warnings: Vec<String>,
}

/// Load and validate a JSONL corpus file.
///
/// Turns with empty code lists are dropped (with a count); malformed records,
/// unknown codes, turns with more than two codes, repeated codes within a
/// turn, and duplicate session ids are hard errors with the line reported.
pub fn load_corpus(path: &Path) -> Result<LoadedCorpus> {
    let file = std::fs::File::open(path)?;
    parse_corpus_jsonl(std::io::BufReader::new(file))
}

pub fn parse_corpus_jsonl<R: BufRead>(reader: R) -> Result<LoadedCorpus> {
    let mut sessions = Vec::new();
    let mut seen_ids = BTreeSet::new();
    let mut removed_empty_turns = 0usize;
    let mut warnings = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawSession = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        for key in raw.extra.keys() {
            warnings.push(format!("line {line_no}: ignoring unknown key {key:?}"));
        }
        if !seen_ids.insert(raw.session_id.clone()) {
            return Err(Error::DuplicateSessionId {
                line: line_no,
                session_id: raw.session_id,
            });
        }

        let mut turns = Vec::new();
        for (turn_no, raw_turn) in raw.turns.into_iter().enumerate() {
            if raw_turn.codes.is_empty() {
                removed_empty_turns += 1;
                continue;
            }
            if raw_turn.codes.len() > 2 {
                return Err(Error::TooManyCodes {
                    line: line_no,
                    turn: turn_no,
                    count: raw_turn.codes.len(),
                });
            }
            let mut codes = Vec::with_capacity(raw_turn.codes.len());
            for code_str in &raw_turn.codes {
                let code = DACode::parse(code_str).ok_or_else(|| Error::UnknownCode {
                    line: line_no,
                    code: code_str.clone(),
                })?;
                if codes.contains(&code) {
                    return Err(Error::DuplicateCodeInTurn {
                        line: line_no,
                        turn: turn_no,
                        code: code_str.clone(),
                    });
                }
                codes.push(code);
            }
            turns.push(Turn {
                index: turns.len(),
                speaker: raw_turn.speaker,
                codes,
            });
        }
        sessions.push(Session {
            session_id: raw.session_id,
            learner_id: raw.learner_id,
            turns,
        });
    }

    Ok(LoadedCorpus {
        corpus: Corpus::from_sessions(sessions),
        removed_empty_turns,
        warnings,
    })
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    write_corpus_jsonl(corpus, &mut writer)
}

pub fn write_corpus_jsonl<W: Write>(corpus: &Corpus, writer: &mut W) -> Result<()> {
    for session in &corpus.sessions {
        let turns: Vec<serde_json::Value> = session
            .turns
            .iter()
            .map(|t| {
                serde_json::json!({
                    "speaker": t.speaker,
                    "codes": t.codes.iter().map(|c| c.symbol()).collect::<Vec<_>>(),
                })
            })
            .collect();
        let record = serde_json::json!({
            "session_id": session.session_id,
            "learner_id": session.learner_id,
            "turns": turns,
        });
        writeln!(writer, "{record}")?;
    }
    Ok(())
}
