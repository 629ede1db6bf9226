//! Fixed-width position bitsets and the vertical bitmap miner.
//!
//! Each session holds one bitset per label marking the event positions where
//! that label occurs. A pattern is represented by the set of positions where
//! its last element can end; s-extension shifts that set through the max-gap
//! window and intersects with the next label's positions.

use std::collections::BTreeMap;

use crate::corpus::{DALabel, EventStream};
use crate::error::{Error, Result};
use crate::scoring::Group;

use super::{pattern_order, GroupSupport, MiningParams, Pattern};

/// Bitset over event positions of one session; bit i = position i.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Bits {
    words: Vec<u64>,
    nbits: usize,
}

impl Bits {
    pub fn zero(nbits: usize) -> Self {
        Bits {
            words: vec![0; nbits.div_ceil(64)],
            nbits,
        }
    }

    pub fn set(&mut self, i: usize) {
        debug_assert!(i < self.nbits);
        self.words[i / 64] |= 1u64 << (i % 64);
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    fn shl(&self, d: usize) -> Bits {
        let mut out = Bits::zero(self.nbits);
        if d >= self.nbits {
            return out;
        }
        let word_shift = d / 64;
        let bit_shift = d % 64;
        for w in (word_shift..out.words.len()).rev() {
            let lower = self.words[w - word_shift] << bit_shift;
            let upper = if bit_shift > 0 && w > word_shift {
                self.words[w - word_shift - 1] >> (64 - bit_shift)
            } else {
                0
            };
            out.words[w] = lower | upper;
        }
        out.mask_tail();
        out
    }

    fn or_assign(&mut self, other: &Bits) {
        for (w, o) in self.words.iter_mut().zip(&other.words) {
            *w |= o;
        }
    }

    fn and(&self, other: &Bits) -> Bits {
        Bits {
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a & b)
                .collect(),
            nbits: self.nbits,
        }
    }

    fn mask_tail(&mut self) {
        let rem = self.nbits % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    /// Positions reachable from any set bit with a step in 1..=gap
    /// (doubling construction, O(log gap) shifts).
    pub fn window_after(&self, gap: usize) -> Bits {
        let mut reach = self.shl(1);
        let mut covered = 1usize;
        while covered < gap {
            let step = covered.min(gap - covered);
            let shifted = reach.shl(step);
            reach.or_assign(&shifted);
            covered += step;
        }
        reach
    }
}

struct SessionData {
    /// One position bitset per alphabet label.
    label_bits: Vec<Bits>,
    group: Option<Group>,
}

/// Mine frequent gap-constrained label sequences with vertical bitmaps and
/// co-occurrence (CMAP) pruning. Output contract: exactly the sequences of
/// length min_len..=max_len whose session support reaches the threshold,
/// sorted by descending total support, then length, then label text.
pub fn mine(
    streams: &[EventStream],
    params: &MiningParams,
    session_groups: Option<&BTreeMap<String, Group>>,
) -> Result<Vec<Pattern>> {
    params.validate()?;
    if streams.is_empty() {
        return Ok(Vec::new());
    }
    let min_sup = params.absolute_support(streams.len());

    // Alphabet of observed labels, in label-text order.
    let mut alphabet: Vec<DALabel> = Vec::new();
    for stream in streams {
        for &label in &stream.events {
            if !alphabet.contains(&label) {
                alphabet.push(label);
            }
        }
    }
    alphabet.sort();
    let label_index = |label: DALabel| alphabet.iter().position(|&l| l == label).unwrap();
    let n_labels = alphabet.len();

    let mut sessions = Vec::with_capacity(streams.len());
    for stream in streams {
        let group = match session_groups {
            Some(map) => {
                Some(
                    *map.get(&stream.session_id)
                        .ok_or_else(|| Error::UngroupedSession {
                            session_id: stream.session_id.clone(),
                        })?,
                )
            }
            None => None,
        };
        let nbits = stream.events.len();
        let mut label_bits = vec![Bits::zero(nbits); n_labels];
        for (pos, &label) in stream.events.iter().enumerate() {
            label_bits[label_index(label)].set(pos);
        }
        sessions.push(SessionData { label_bits, group });
    }

    // Per-label session support.
    let mut label_support = vec![0usize; n_labels];
    for session in &sessions {
        for (idx, bits) in session.label_bits.iter().enumerate() {
            if !bits.is_zero() {
                label_support[idx] += 1;
            }
        }
    }

    // CMAP: session support of "b occurs within the gap window after a".
    let mut cmap = vec![vec![0usize; n_labels]; n_labels];
    for stream in streams {
        let events = &stream.events;
        let mut seen = vec![false; n_labels * n_labels];
        for (pos, &a) in events.iter().enumerate() {
            let ai = label_index(a);
            let upper = (pos + params.max_gap).min(events.len().saturating_sub(1));
            for next in events.iter().take(upper + 1).skip(pos + 1) {
                seen[ai * n_labels + label_index(*next)] = true;
            }
        }
        for a in 0..n_labels {
            for b in 0..n_labels {
                if seen[a * n_labels + b] {
                    cmap[a][b] += 1;
                }
            }
        }
    }

    let mut out = Vec::new();
    let mut prefix: Vec<usize> = Vec::new();
    for root in 0..n_labels {
        if label_support[root] < min_sup {
            continue;
        }
        let ends: Vec<(usize, Bits)> = sessions
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.label_bits[root].is_zero())
            .map(|(i, s)| (i, s.label_bits[root].clone()))
            .collect();
        prefix.push(root);
        grow(
            &mut prefix,
            &ends,
            &sessions,
            &alphabet,
            &label_support,
            &cmap,
            params,
            min_sup,
            &mut out,
        );
        prefix.pop();
    }

    out.sort_by(pattern_order);
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn grow(
    prefix: &mut Vec<usize>,
    ends: &[(usize, Bits)],
    sessions: &[SessionData],
    alphabet: &[DALabel],
    label_support: &[usize],
    cmap: &[Vec<usize>],
    params: &MiningParams,
    min_sup: usize,
    out: &mut Vec<Pattern>,
) {
    if prefix.len() >= params.min_len {
        out.push(make_pattern(prefix, ends, sessions, alphabet));
    }
    if prefix.len() >= params.max_len {
        return;
    }
    let last = *prefix.last().unwrap();
    for (next, _) in alphabet.iter().enumerate() {
        if label_support[next] < min_sup || cmap[last][next] < min_sup {
            continue;
        }
        let mut extended: Vec<(usize, Bits)> = Vec::with_capacity(ends.len());
        for (session_idx, bits) in ends {
            let stepped = bits
                .window_after(params.max_gap)
                .and(&sessions[*session_idx].label_bits[next]);
            if !stepped.is_zero() {
                extended.push((*session_idx, stepped));
            }
        }
        if extended.len() < min_sup {
            continue;
        }
        prefix.push(next);
        grow(
            prefix,
            &extended,
            sessions,
            alphabet,
            label_support,
            cmap,
            params,
            min_sup,
            out,
        );
        prefix.pop();
    }
}

fn make_pattern(
    prefix: &[usize],
    ends: &[(usize, Bits)],
    sessions: &[SessionData],
    alphabet: &[DALabel],
) -> Pattern {
    let labels: Vec<DALabel> = prefix.iter().map(|&i| alphabet[i]).collect();
    let grouped = sessions.iter().all(|s| s.group.is_some());
    let groups = if grouped {
        let mut support = GroupSupport { hp: 0, lp: 0 };
        for (session_idx, _) in ends {
            match sessions[*session_idx].group.unwrap() {
                Group::Hp => support.hp += 1,
                Group::Lp => support.lp += 1,
            }
        }
        Some(support)
    } else {
        None
    };
    Pattern {
        labels,
        support_total: ends.len(),
        groups,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits_from(positions: &[usize], nbits: usize) -> Bits {
        let mut b = Bits::zero(nbits);
        for &p in positions {
            b.set(p);
        }
        b
    }

    fn positions(b: &Bits) -> Vec<usize> {
        (0..b.nbits)
            .filter(|&i| b.words[i / 64] & (1u64 << (i % 64)) != 0)
            .collect()
    }

    #[test]
    fn window_after_gap_one_is_shift() {
        let b = bits_from(&[0, 3], 6);
        assert_eq!(positions(&b.window_after(1)), vec![1, 4]);
    }

    #[test]
    fn window_after_wider_gap() {
        let b = bits_from(&[2], 10);
        assert_eq!(positions(&b.window_after(3)), vec![3, 4, 5]);
    }

    #[test]
    fn window_after_crosses_word_boundary() {
        let b = bits_from(&[62, 63], 130);
        assert_eq!(positions(&b.window_after(2)), vec![63, 64, 65]);
        let c = bits_from(&[127], 130);
        assert_eq!(positions(&c.window_after(2)), vec![128, 129]);
    }

    #[test]
    fn window_after_truncates_at_end() {
        let b = bits_from(&[4], 6);
        assert_eq!(positions(&b.window_after(5)), vec![5]);
        let c = bits_from(&[5], 6);
        assert!(c.window_after(3).is_zero());
    }

    #[test]
    fn window_after_huge_gap_reaches_everything_later() {
        let b = bits_from(&[1], 70);
        assert_eq!(
            positions(&b.window_after(1000)),
            (2..70).collect::<Vec<_>>()
        );
    }
}
