//! Gap-constrained sequential pattern mining over DA event streams.
//!
//! `mine` is the vertical-bitmap miner; `brute_force_mine` is the independent
//! oracle it is checked against. Support is session presence: a pattern
//! occurring five times in one session counts that session once. With
//! max_gap = 1 consecutive pattern elements must be adjacent events.

mod bitmap;
mod oracle;

use std::cmp::Ordering;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::{DALabel, EventStream};
use crate::error::{Error, Result};

pub use bitmap::mine;
pub use oracle::brute_force_mine;

/// Minimum session support: an absolute session count, or a fraction of the
/// session total (converted by ceiling, so 20% of 70 sessions is 14).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SupportThreshold {
    Sessions(usize),
    Fraction(f64),
}

impl SupportThreshold {
    pub fn to_absolute(self, n_sessions: usize) -> usize {
        match self {
            SupportThreshold::Sessions(k) => k.max(1),
            // Guard against ties landing just above an integer in binary
            // (0.20 * 70 evaluates to 14.000000000000002).
            SupportThreshold::Fraction(f) => {
                ((f * n_sessions as f64 - 1e-9).ceil() as usize).max(1)
            }
        }
    }
}

impl Serialize for SupportThreshold {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SupportThreshold::Sessions(k) => serializer.serialize_u64(*k as u64),
            SupportThreshold::Fraction(f) => serializer.serialize_f64(*f),
        }
    }
}

impl<'de> Deserialize<'de> for SupportThreshold {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let num = serde_json::Number::deserialize(deserializer)?;
        if let Some(k) = num.as_u64() {
            Ok(SupportThreshold::Sessions(k as usize))
        } else if let Some(f) = num.as_f64() {
            Ok(SupportThreshold::Fraction(f))
        } else {
            Err(serde::de::Error::custom(
                "min_support must be a count or a fraction",
            ))
        }
    }
}

/// Parse a CLI-style threshold: an integer token is a session count, a
/// fractional token is a fraction of sessions.
pub fn parse_support(s: &str) -> Result<SupportThreshold> {
    if let Ok(k) = s.parse::<usize>() {
        return Ok(SupportThreshold::Sessions(k));
    }
    s.parse::<f64>()
        .map(SupportThreshold::Fraction)
        .map_err(|_| Error::InvalidParams {
            msg: format!("cannot parse min-support {s:?}"),
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiningParams {
    pub min_len: usize,
    pub max_len: usize,
    pub max_gap: usize,
    pub min_support: SupportThreshold,
}

impl Default for MiningParams {
    /// min_len 2, max_len 4, max_gap 1, min_support 20% of sessions.
    fn default() -> Self {
        MiningParams {
            min_len: 2,
            max_len: 4,
            max_gap: 1,
            min_support: SupportThreshold::Fraction(0.20),
        }
    }
}

impl MiningParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_len < 1 {
            return Err(Error::InvalidParams {
                msg: "min_len must be at least 1".into(),
            });
        }
        if self.max_len < self.min_len {
            return Err(Error::InvalidParams {
                msg: format!("max_len {} below min_len {}", self.max_len, self.min_len),
            });
        }
        if self.max_gap < 1 {
            return Err(Error::InvalidParams {
                msg: "max_gap must be at least 1".into(),
            });
        }
        match self.min_support {
            SupportThreshold::Sessions(0) => Err(Error::InvalidParams {
                msg: "min_support count must be at least 1".into(),
            }),
            SupportThreshold::Fraction(f) if !(f > 0.0 && f <= 1.0) => Err(Error::InvalidParams {
                msg: format!("min_support fraction {f} outside (0, 1]"),
            }),
            _ => Ok(()),
        }
    }

    pub fn absolute_support(&self, n_sessions: usize) -> usize {
        self.min_support.to_absolute(n_sessions)
    }
}

/// Session support split by group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupSupport {
    pub hp: usize,
    pub lp: usize,
}

impl GroupSupport {
    pub fn diff(&self) -> i64 {
        self.hp as i64 - self.lp as i64
    }
}

/// An ordered label sequence with its session supports.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub labels: Vec<DALabel>,
    pub support_total: usize,
    pub groups: Option<GroupSupport>,
}

impl Pattern {
    /// Canonical text form, labels joined by arrows.
    pub fn text(&self) -> String {
        let parts: Vec<String> = self.labels.iter().map(|l| l.to_string()).collect();
        parts.join(" \u{2192} ")
    }
}

/// Output ordering shared by miner and oracle: descending total support,
/// then length, then label text.
pub fn pattern_order(a: &Pattern, b: &Pattern) -> Ordering {
    b.support_total
        .cmp(&a.support_total)
        .then_with(|| a.labels.len().cmp(&b.labels.len()))
        .then_with(|| a.labels.cmp(&b.labels))
}

/// Does the pattern occur in the stream? True iff there are positions
/// p_1 < ... < p_k matching the pattern with every step p_{i+1} - p_i at most
/// max_gap (so max_gap = 1 demands consecutive events).
pub fn occurs(stream: &[DALabel], pattern: &[DALabel], max_gap: usize) -> bool {
    assert!(!pattern.is_empty(), "pattern must be non-empty");
    let mut ends: Vec<usize> = stream
        .iter()
        .enumerate()
        .filter(|(_, l)| **l == pattern[0])
        .map(|(i, _)| i)
        .collect();
    for label in &pattern[1..] {
        if ends.is_empty() {
            return false;
        }
        let mut next = Vec::new();
        let mut cursor = 0;
        for (pos, l) in stream.iter().enumerate() {
            if l != label {
                continue;
            }
            // First reachable end in [pos - max_gap, pos - 1].
            while cursor < ends.len() && ends[cursor] + max_gap < pos {
                cursor += 1;
            }
            if cursor < ends.len() && ends[cursor] < pos {
                next.push(pos);
            }
        }
        ends = next;
    }
    !ends.is_empty()
}

/// Keep patterns whose absolute HP-LP support difference reaches the
/// threshold; ordering is preserved. Absolute value, so a pattern more
/// prevalent in LP (negative difference) is retained too.
pub fn filter_by_support_diff(patterns: &[Pattern], threshold: i64) -> Result<Vec<Pattern>> {
    let mut kept = Vec::new();
    for pattern in patterns {
        let groups = pattern.groups.ok_or(Error::MissingGroupSupport)?;
        if groups.diff().abs() >= threshold {
            kept.push(pattern.clone());
        }
    }
    Ok(kept)
}

/// Optional post-filter: keep only closed patterns, those without a proper
/// contiguous super-pattern of equal total support in the same set. Off the
/// default path since duplicate-support chains are reported as-is.
pub fn closed_patterns(patterns: &[Pattern]) -> Vec<Pattern> {
    let is_window_of =
        |p: &[DALabel], q: &[DALabel]| p.len() < q.len() && q.windows(p.len()).any(|w| w == p);
    patterns
        .iter()
        .filter(|p| {
            !patterns
                .iter()
                .any(|q| q.support_total == p.support_total && is_window_of(&p.labels, &q.labels))
        })
        .cloned()
        .collect()
}

/// Read the plain sequence-database text format: one stream per line,
/// whitespace-separated labels. Session ids are the 1-based line numbers.
pub fn parse_stream_db<R: BufRead>(reader: R) -> Result<Vec<EventStream>> {
    let mut streams = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let events = line
            .split_whitespace()
            .map(|token| {
                DALabel::parse(token).ok_or_else(|| Error::UnknownCode {
                    line: line_no,
                    code: token.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        streams.push(EventStream {
            session_id: line_no.to_string(),
            events,
        });
    }
    Ok(streams)
}

pub fn write_stream_db<W: Write>(streams: &[EventStream], writer: &mut W) -> Result<()> {
    for stream in streams {
        let tokens: Vec<String> = stream.events.iter().map(|l| l.to_string()).collect();
        writeln!(writer, "{}", tokens.join(" "))?;
    }
    Ok(())
}
