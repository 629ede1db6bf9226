//! Inter-coder reliability: per-code Cohen's kappa over multi-label turn
//! annotations, and a two-way random-effects ICC for continuous ratings.
//!
//! Kappa follows the multi-label procedure: each code is treated as a binary
//! presence/absence variable within a turn, and agreement is computed on the
//! resulting 2x2 table, separately per code.

use std::collections::BTreeSet;
use std::io::BufRead;
use std::path::Path;

use serde::Deserialize;

use crate::corpus::{Corpus, DACode, SpeakerRole};
use crate::error::{Error, Result};

/// One turn annotated independently by two coders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DualAnnotation {
    pub session_id: String,
    pub turn: usize,
    pub coder_a: BTreeSet<DACode>,
    pub coder_b: BTreeSet<DACode>,
}

/// Cohen's kappa for one code (optionally restricted to one speaker role).
#[derive(Debug, Clone)]
pub struct KappaResult {
    pub code: DACode,
    pub role: Option<SpeakerRole>,
    pub kappa: f64,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
    pub n: usize,
    /// Both coders constant and identical: kappa fixed at 1 by convention.
    pub degenerate: bool,
}

impl KappaResult {
    pub fn key(&self) -> String {
        match self.role {
            Some(role) => format!("{}{}", role.prefix(), self.code.symbol()),
            None => self.code.symbol().to_string(),
        }
    }
}

fn kappa_from_pairs(
    pairs: impl Iterator<Item = (bool, bool)>,
) -> Result<(f64, f64, f64, usize, bool)> {
    let (mut both, mut a_only, mut b_only, mut neither) = (0u64, 0u64, 0u64, 0u64);
    for (pa, pb) in pairs {
        match (pa, pb) {
            (true, true) => both += 1,
            (true, false) => a_only += 1,
            (false, true) => b_only += 1,
            (false, false) => neither += 1,
        }
    }
    let n = both + a_only + b_only + neither;
    if n == 0 {
        return Err(Error::EmptyAnnotations);
    }
    let p_o = (both + neither) as f64 / n as f64;
    // Expected agreement from the marginals; the p_e = 1 check is exact in
    // integer arithmetic.
    let a_present = both + a_only;
    let b_present = both + b_only;
    let a_absent = b_only + neither;
    let b_absent = a_only + neither;
    let p_e_num = a_present as u128 * b_present as u128 + a_absent as u128 * b_absent as u128;
    let n_sq = n as u128 * n as u128;
    if p_e_num == n_sq {
        // Constant coders. For 2x2 marginals this forces perfect agreement.
        if p_o < 1.0 {
            return Err(Error::ImpossibleAgreement { observed: p_o });
        }
        return Ok((1.0, 1.0, 1.0, n as usize, true));
    }
    let p_e = p_e_num as f64 / n_sq as f64;
    let kappa = (p_o - p_e) / (1.0 - p_e);
    Ok((kappa, p_o, p_e, n as usize, false))
}

/// Cohen's kappa for one code over all annotated turns.
pub fn kappa_per_code(annotations: &[DualAnnotation], code: DACode) -> Result<KappaResult> {
    let (kappa, p_o, p_e, n, degenerate) = kappa_from_pairs(
        annotations
            .iter()
            .map(|ann| (ann.coder_a.contains(&code), ann.coder_b.contains(&code))),
    )?;
    Ok(KappaResult {
        code,
        role: None,
        kappa,
        observed_agreement: p_o,
        expected_agreement: p_e,
        n,
        degenerate,
    })
}

/// Kappa for every code present in either coder's annotations, sorted by
/// kappa ascending so low-agreement codes surface first.
pub fn kappa_all(annotations: &[DualAnnotation]) -> Result<Vec<KappaResult>> {
    if annotations.is_empty() {
        return Err(Error::EmptyAnnotations);
    }
    let observed: BTreeSet<DACode> = annotations
        .iter()
        .flat_map(|ann| ann.coder_a.iter().chain(ann.coder_b.iter()).copied())
        .collect();
    let mut results = observed
        .into_iter()
        .map(|code| kappa_per_code(annotations, code))
        .collect::<Result<Vec<_>>>()?;
    sort_by_kappa(&mut results);
    Ok(results)
}

/// Role-split kappa: each (role, code) pair becomes the binary variable. Turn
/// roles are joined from the corpus; annotations for turns the corpus does not
/// contain are an error.
pub fn kappa_all_by_label(
    annotations: &[DualAnnotation],
    corpus: &Corpus,
) -> Result<Vec<KappaResult>> {
    if annotations.is_empty() {
        return Err(Error::EmptyAnnotations);
    }
    let mut roles = Vec::with_capacity(annotations.len());
    for ann in annotations {
        let session = corpus
            .sessions
            .iter()
            .find(|s| s.session_id == ann.session_id)
            .ok_or_else(|| {
                Error::Other(format!(
                    "annotation references unknown session {:?}",
                    ann.session_id
                ))
            })?;
        let turn = session.turns.get(ann.turn).ok_or_else(|| {
            Error::Other(format!(
                "annotation references turn {} beyond session {:?}",
                ann.turn, ann.session_id
            ))
        })?;
        roles.push(turn.speaker);
    }

    let mut observed: BTreeSet<(SpeakerRole, DACode)> = BTreeSet::new();
    for (ann, &role) in annotations.iter().zip(&roles) {
        for &code in ann.coder_a.iter().chain(ann.coder_b.iter()) {
            observed.insert((role, code));
        }
    }

    let mut results = Vec::new();
    for (role, code) in observed {
        let (kappa, p_o, p_e, n, degenerate) =
            kappa_from_pairs(annotations.iter().zip(&roles).map(|(ann, &turn_role)| {
                (
                    turn_role == role && ann.coder_a.contains(&code),
                    turn_role == role && ann.coder_b.contains(&code),
                )
            }))?;
        results.push(KappaResult {
            code,
            role: Some(role),
            kappa,
            observed_agreement: p_o,
            expected_agreement: p_e,
            n,
            degenerate,
        });
    }
    sort_by_kappa(&mut results);
    Ok(results)
}

fn sort_by_kappa(results: &mut [KappaResult]) {
    results.sort_by(|a, b| {
        a.kappa
            .partial_cmp(&b.kappa)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.key().cmp(&b.key()))
    });
}

/// ICC(2,1): two-way random effects, absolute agreement, single measure.
#[derive(Debug, Clone)]
pub struct ICCResult {
    pub icc: f64,
    pub model: &'static str,
    pub n_subjects: usize,
    pub n_raters: usize,
    /// All cells identical: icc fixed at 1 by convention.
    pub degenerate: bool,
}

/// Compute ICC(2,1) for a subjects x 2 raters matrix via the mean-squares
/// formulation. All cells must be present and finite.
pub fn icc_two_way(values: &[[f64; 2]]) -> Result<ICCResult> {
    let n = values.len();
    let k = 2usize;
    if n < 2 {
        return Err(Error::TooFewValues {
            required: 2,
            got: n,
        });
    }
    let nf = n as f64;
    let kf = k as f64;

    let grand = values.iter().flat_map(|row| row.iter()).sum::<f64>() / (nf * kf);
    let row_means: Vec<f64> = values.iter().map(|row| (row[0] + row[1]) / kf).collect();
    let col_means: [f64; 2] = [
        values.iter().map(|row| row[0]).sum::<f64>() / nf,
        values.iter().map(|row| row[1]).sum::<f64>() / nf,
    ];

    let ss_total: f64 = values
        .iter()
        .flat_map(|row| row.iter())
        .map(|v| (v - grand).powi(2))
        .sum();
    if ss_total == 0.0 {
        return Ok(ICCResult {
            icc: 1.0,
            model: ICC_MODEL,
            n_subjects: n,
            n_raters: k,
            degenerate: true,
        });
    }

    let ss_rows: f64 = kf * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_cols: f64 = nf * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    // Interaction residual computed cellwise rather than by subtraction.
    let mut ss_err = 0.0;
    for (i, row) in values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            ss_err += (v - row_means[i] - col_means[j] + grand).powi(2);
        }
    }

    let ms_rows = ss_rows / (nf - 1.0);
    let ms_cols = ss_cols / (kf - 1.0);
    let ms_err = ss_err / ((nf - 1.0) * (kf - 1.0));

    let denom = ms_rows + (kf - 1.0) * ms_err + (kf / nf) * (ms_cols - ms_err);
    if denom <= 0.0 {
        return Err(Error::ZeroVariance {
            context: "ICC denominator".into(),
        });
    }
    Ok(ICCResult {
        icc: (ms_rows - ms_err) / denom,
        model: ICC_MODEL,
        n_subjects: n,
        n_raters: k,
        degenerate: false,
    })
}

pub const ICC_MODEL: &str = "ICC(2,1) two-way random, absolute agreement, single measure";

#[derive(Debug, Deserialize)]
struct RawAnnotation {
    session_id: String,
    turn: usize,
    a: Vec<String>,
    b: Vec<String>,
}

/// Load a dual-annotation JSONL file:
/// `{"session_id": str, "turn": int, "a": [codes], "b": [codes]}`.
pub fn load_annotations(path: &Path) -> Result<Vec<DualAnnotation>> {
    let file = std::fs::File::open(path)?;
    parse_annotations_jsonl(std::io::BufReader::new(file))
}

pub fn parse_annotations_jsonl<R: BufRead>(reader: R) -> Result<Vec<DualAnnotation>> {
    let mut annotations = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawAnnotation = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        let parse_set = |codes: &[String]| -> Result<BTreeSet<DACode>> {
            if codes.len() > 2 {
                return Err(Error::TooManyCodes {
                    line: line_no,
                    turn: raw.turn,
                    count: codes.len(),
                });
            }
            codes
                .iter()
                .map(|c| {
                    DACode::parse(c).ok_or_else(|| Error::UnknownCode {
                        line: line_no,
                        code: c.clone(),
                    })
                })
                .collect()
        };
        annotations.push(DualAnnotation {
            session_id: raw.session_id,
            turn: raw.turn,
            coder_a: parse_set(&raw.a)?,
            coder_b: parse_set(&raw.b)?,
        });
    }
    Ok(annotations)
}
