//! Deterministic CSV and Markdown emitters for every pipeline artifact, plus
//! the parser for the pattern CSV so emitted tables re-load.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusSummary, DALabel};
use crate::error::{Error, Result};
use crate::freqstats::{FrequencyTable, TestResult};
use crate::permtest::PermutationResult;
use crate::reliability::{ICCResult, KappaResult};
use crate::scoring::{CompositeScore, GainRecord, Indicator};
use crate::seqmine::{GroupSupport, Pattern};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Md,
    #[default]
    Both,
}

impl ReportFormat {
    pub fn wants_csv(self) -> bool {
        matches!(self, ReportFormat::Csv | ReportFormat::Both)
    }

    pub fn wants_md(self) -> bool {
        matches!(self, ReportFormat::Md | ReportFormat::Both)
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "md" => Ok(ReportFormat::Md),
            "both" => Ok(ReportFormat::Both),
            other => Err(Error::Config(format!("unknown format {other:?}"))),
        }
    }
}

pub fn summary_csv(summary: &CorpusSummary) -> String {
    let mut out = String::from("metric,value\n");
    out.push_str(&format!("sessions,{}\n", summary.sessions));
    out.push_str(&format!("learners,{}\n", summary.learners));
    out.push_str(&format!("turns,{}\n", summary.turns));
    match summary.mean_turns_per_session {
        Some(mean) => out.push_str(&format!("mean_turns_per_session,{mean:.2}\n")),
        None => out.push_str("mean_turns_per_session,undefined\n"),
    }
    out.push_str(&format!("total_events,{}\n", summary.total_events));
    out.push_str("\nlabel,count\n");
    for (label, count) in &summary.label_counts {
        out.push_str(&format!("{label},{count}\n"));
    }
    out
}

pub fn summary_md(summary: &CorpusSummary) -> String {
    let mut out = String::from("# Corpus summary\n\n");
    out.push_str(&format!("- sessions: {}\n", summary.sessions));
    out.push_str(&format!("- learners: {}\n", summary.learners));
    out.push_str(&format!("- turns: {}\n", summary.turns));
    match summary.mean_turns_per_session {
        Some(mean) => out.push_str(&format!("- mean turns/session: {mean:.2}\n")),
        None => out.push_str("- mean turns/session: undefined (no sessions)\n"),
    }
    out.push_str(&format!("- total DA events: {}\n\n", summary.total_events));
    out.push_str("| DA | n |\n|---|---:|\n");
    for (label, count) in &summary.label_counts {
        out.push_str(&format!("| {label} | {count} |\n"));
    }
    out
}

pub fn reliability_csv(kappas: &[KappaResult], icc: Option<&ICCResult>) -> String {
    let mut out = String::from("code,kappa,p_o,p_e,n,degenerate\n");
    for k in kappas {
        out.push_str(&format!(
            "{},{:.4},{:.4},{:.4},{},{}\n",
            k.key(),
            k.kappa,
            k.observed_agreement,
            k.expected_agreement,
            k.n,
            k.degenerate
        ));
    }
    if let Some(icc) = icc {
        out.push_str("\nmetric,value,model,n_subjects,n_raters,degenerate\n");
        out.push_str(&format!(
            "icc,{:.4},\"{}\",{},{},{}\n",
            icc.icc, icc.model, icc.n_subjects, icc.n_raters, icc.degenerate
        ));
    }
    out
}

pub fn reliability_md(kappas: &[KappaResult], icc: Option<&ICCResult>) -> String {
    let mut out = String::from("# Inter-coder reliability\n\n");
    out.push_str("| Code | kappa | p_o | p_e | n |\n|---|---:|---:|---:|---:|\n");
    for k in kappas {
        let flag = if k.degenerate { " (degenerate)" } else { "" };
        out.push_str(&format!(
            "| {} | {:.2}{flag} | {:.2} | {:.2} | {} |\n",
            k.key(),
            k.kappa,
            k.observed_agreement,
            k.expected_agreement,
            k.n
        ));
    }
    if let Some(icc) = icc {
        out.push_str(&format!(
            "\n{}: ICC = {:.2} over {} subjects\n",
            icc.model, icc.icc, icc.n_subjects
        ));
    }
    out
}

pub fn composites_csv(scores: &[CompositeScore]) -> String {
    let mut out = String::from("learner_id,timepoint");
    for indicator in Indicator::ALL {
        out.push_str(&format!(",z_{}", indicator.column()));
    }
    out.push_str(",composite\n");
    for s in scores {
        out.push_str(&format!("{},{}", s.learner_id, s.timepoint));
        for z in s.z_indicators {
            out.push_str(&format!(",{z:.6}"));
        }
        out.push_str(&format!(",{:.6}\n", s.composite));
    }
    out
}

pub fn gains_csv(gains: &[GainRecord]) -> String {
    let mut out = String::from("learner_id,gain\n");
    for g in gains {
        out.push_str(&format!("{},{:.6}\n", g.learner_id, g.gain));
    }
    out
}

/// Frequency table plus chi-square results, one row per label, SUM last.
pub fn frequency_csv(table: &FrequencyTable, tests: &[TestResult]) -> String {
    let mut out =
        String::from("da,n_total,pct_total,n_hp,pct_hp,n_lp,pct_lp,chisq,df,p,p_adj,significant\n");
    for (row, test) in table.rows.iter().zip(tests) {
        out.push_str(&format!(
            "{},{},{:.1},{},{:.1},{},{:.1},{:.4},{},{:.6},{:.6},{}\n",
            row.label,
            row.n_total,
            row.pct_total,
            row.n_hp,
            row.pct_hp,
            row.n_lp,
            row.pct_lp,
            test.statistic,
            test.df,
            test.p_raw,
            test.p_adj,
            test.significant
        ));
    }
    out.push_str(&format!(
        "SUM,{},100.0,{},100.0,{},100.0,,,,,\n",
        table.total(),
        table.total_hp,
        table.total_lp
    ));
    out
}

pub fn frequency_md(table: &FrequencyTable, tests: &[TestResult]) -> String {
    let mut out = String::from("# DA distributions by group\n\n");
    out.push_str("| DA | Overall n | % | HP n | % | LP n | % | chi2(1) | p | p_adj |\n");
    out.push_str("|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n");
    for (row, test) in table.rows.iter().zip(tests) {
        let star = if test.significant { "*" } else { "" };
        out.push_str(&format!(
            "| {} | {} | {:.1} | {} | {:.1} | {} | {:.1} | {:.2} | {:.3} | {:.3}{star} |\n",
            row.label,
            row.n_total,
            row.pct_total,
            row.n_hp,
            row.pct_hp,
            row.n_lp,
            row.pct_lp,
            test.statistic,
            test.p_raw,
            test.p_adj
        ));
    }
    out.push_str(&format!(
        "| SUM | {} | 100.0 | {} | 100.0 | {} | 100.0 | | | |\n",
        table.total(),
        table.total_hp,
        table.total_lp
    ));
    out.push_str("\n\\* p < .05 (Holm-Bonferroni-corrected)\n");
    out
}

pub const PATTERNS_HEADER: &str = "pattern,len,sup_total,sup_hp,sup_lp,sup_diff";

pub fn patterns_csv(patterns: &[Pattern]) -> String {
    let mut out = String::from(PATTERNS_HEADER);
    out.push('\n');
    for p in patterns {
        match p.groups {
            Some(g) => out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.text(),
                p.labels.len(),
                p.support_total,
                g.hp,
                g.lp,
                g.diff()
            )),
            None => out.push_str(&format!(
                "{},{},{},,,\n",
                p.text(),
                p.labels.len(),
                p.support_total
            )),
        }
    }
    out
}

pub fn patterns_md(title: &str, patterns: &[Pattern]) -> String {
    let mut out = format!("# {title}\n\n");
    out.push_str("| # | Pattern | len | SUP | HP SUP | LP SUP | SUP DIFF |\n");
    out.push_str("|---:|---|---:|---:|---:|---:|---:|\n");
    for (i, p) in patterns.iter().enumerate() {
        let (hp, lp, diff) = match p.groups {
            Some(g) => (g.hp.to_string(), g.lp.to_string(), g.diff().to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        out.push_str(&format!(
            "| {} | {} | {} | {} | {hp} | {lp} | {diff} |\n",
            i + 1,
            p.text(),
            p.labels.len(),
            p.support_total
        ));
    }
    out
}

/// Parse the pattern CSV back into patterns (the inverse of `patterns_csv`).
pub fn parse_patterns_csv<R: BufRead>(reader: R) -> Result<Vec<Pattern>> {
    let mut patterns = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || (line_no == 1 && trimmed == PATTERNS_HEADER) {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        let labels = fields[0]
            .split(" \u{2192} ")
            .map(|t| {
                DALabel::parse(t).ok_or_else(|| Error::UnknownCode {
                    line: line_no,
                    code: t.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let support_total: usize = fields[2].parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("bad support {:?}", fields[2]),
        })?;
        let groups = if fields[3].is_empty() {
            None
        } else {
            let hp: usize = fields[3].parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad hp support {:?}", fields[3]),
            })?;
            let lp: usize = fields[4].parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad lp support {:?}", fields[4]),
            })?;
            Some(GroupSupport { hp, lp })
        };
        patterns.push(Pattern {
            labels,
            support_total,
            groups,
        });
    }
    Ok(patterns)
}

/// Permutation results in presentation order (raw p ascending, then length,
/// then label text).
fn ordered(results: &[PermutationResult]) -> Vec<&PermutationResult> {
    let mut refs: Vec<&PermutationResult> = results.iter().collect();
    refs.sort_by(|a, b| {
        a.p_raw
            .partial_cmp(&b.p_raw)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.labels.len().cmp(&b.labels.len()))
            .then_with(|| a.labels.cmp(&b.labels))
    });
    refs
}

pub fn permtest_csv(results: &[PermutationResult]) -> String {
    let mut out = String::from("pattern,hp_sup,lp_sup,sup_diff,p,p_adj,flag\n");
    for r in ordered(results) {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{}\n",
            r.text(),
            r.support_hp,
            r.support_lp,
            r.observed_stat,
            r.p_raw,
            r.p_adj,
            r.flag()
        ));
    }
    out
}

pub fn permtest_md(results: &[PermutationResult]) -> String {
    let mut out = String::from("# Group differences in sequential DA patterns\n\n");
    out.push_str("| # | Pattern | HP SUP | LP SUP | SUP DIFF | p | p_adj |\n");
    out.push_str("|---:|---|---:|---:|---:|---:|---:|\n");
    for (i, r) in ordered(results).iter().enumerate() {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {:.3} | {:.3}{} |\n",
            i + 1,
            r.text(),
            r.support_hp,
            r.support_lp,
            r.observed_stat,
            r.p_raw,
            r.p_adj,
            r.flag()
        ));
    }
    out.push_str(
        "\n\\* p < .05 (Holm-Bonferroni-corrected); \u{2020} marginal (.05 < adjusted p < .10)\n",
    );
    out
}
