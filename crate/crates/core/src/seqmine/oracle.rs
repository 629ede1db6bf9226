//! Brute-force mining oracle: recursive extension with support counted by
//! scanning every stream with `occurs`. Shares nothing with the bitmap miner
//! except the output contract, so the two can check each other.

use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::{DALabel, EventStream};
use crate::error::{Error, Result};
use crate::scoring::Group;

use super::{occurs, pattern_order, GroupSupport, MiningParams, Pattern};

const MAX_STREAMS: usize = 50;
const MAX_EVENTS: usize = 200;
const MAX_ALPHABET: usize = 22;

/// Enumerate every frequent sequence by extension, counting session presence
/// via `occurs`. Guarded against combinatorial blow-up: at most 50 streams of
/// 200 events over an alphabet of 22 labels.
pub fn brute_force_mine(
    streams: &[EventStream],
    params: &MiningParams,
    session_groups: Option<&BTreeMap<String, Group>>,
) -> Result<Vec<Pattern>> {
    params.validate()?;
    if streams.len() > MAX_STREAMS {
        return Err(Error::OracleBounds {
            msg: format!("{} streams exceed the cap of {MAX_STREAMS}", streams.len()),
        });
    }
    if let Some(long) = streams.iter().find(|s| s.events.len() > MAX_EVENTS) {
        return Err(Error::OracleBounds {
            msg: format!(
                "stream {:?} has {} events; cap is {MAX_EVENTS}",
                long.session_id,
                long.events.len()
            ),
        });
    }
    let alphabet: BTreeSet<DALabel> = streams
        .iter()
        .flat_map(|s| s.events.iter().copied())
        .collect();
    if alphabet.len() > MAX_ALPHABET {
        return Err(Error::OracleBounds {
            msg: format!(
                "alphabet of {} labels exceeds {MAX_ALPHABET}",
                alphabet.len()
            ),
        });
    }
    if streams.is_empty() {
        return Ok(Vec::new());
    }

    let groups: Option<Vec<Group>> = match session_groups {
        Some(map) => Some(
            streams
                .iter()
                .map(|s| {
                    map.get(&s.session_id)
                        .copied()
                        .ok_or_else(|| Error::UngroupedSession {
                            session_id: s.session_id.clone(),
                        })
                })
                .collect::<Result<_>>()?,
        ),
        None => None,
    };

    let alphabet: Vec<DALabel> = alphabet.into_iter().collect();
    let min_sup = params.absolute_support(streams.len());
    let mut out = Vec::new();
    let mut candidate = Vec::new();
    for &label in &alphabet {
        candidate.push(label);
        extend(
            &mut candidate,
            streams,
            groups.as_deref(),
            &alphabet,
            params,
            min_sup,
            &mut out,
        );
        candidate.pop();
    }
    out.sort_by(pattern_order);
    Ok(out)
}

fn extend(
    candidate: &mut Vec<DALabel>,
    streams: &[EventStream],
    groups: Option<&[Group]>,
    alphabet: &[DALabel],
    params: &MiningParams,
    min_sup: usize,
    out: &mut Vec<Pattern>,
) {
    let containing: Vec<usize> = streams
        .iter()
        .enumerate()
        .filter(|(_, s)| occurs(&s.events, candidate, params.max_gap))
        .map(|(i, _)| i)
        .collect();
    // A prefix of any occurrence is itself an occurrence, so extensions of an
    // infrequent candidate stay infrequent.
    if containing.len() < min_sup {
        return;
    }
    if candidate.len() >= params.min_len {
        let group_support = groups.map(|gs| {
            let mut support = GroupSupport { hp: 0, lp: 0 };
            for &i in &containing {
                match gs[i] {
                    Group::Hp => support.hp += 1,
                    Group::Lp => support.lp += 1,
                }
            }
            support
        });
        out.push(Pattern {
            labels: candidate.clone(),
            support_total: containing.len(),
            groups: group_support,
        });
    }
    if candidate.len() >= params.max_len {
        return;
    }
    for &label in alphabet {
        candidate.push(label);
        extend(candidate, streams, groups, alphabet, params, min_sup, out);
        candidate.pop();
    }
}
