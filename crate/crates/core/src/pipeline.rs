//! Stage orchestration: each stage loads what it needs, computes, and writes
//! deterministic artifacts into the output directory. `run_all` chains
//! score, compare-freq, mine, filter, and permtest and emits a combined
//! report.

use std::path::PathBuf;

use crate::config::PipelineConfig;
use crate::corpus::{
    flatten_corpus, load_corpus, save_corpus, summarize, validate_corpus, Corpus, DALabel,
    ValidationReport,
};
use crate::error::{Error, Result};
use crate::freqstats::{
    compare_frequencies_with, frequency_table, ContinuityCorrection, TestResult,
};
use crate::permtest::{test_pattern_set, ClusterDesign, PermutationResult};
use crate::reliability::{icc_two_way, kappa_all, kappa_all_by_label, load_annotations, ICCResult};
use crate::report;
use crate::scoring::{
    composite_scores, gains_and_groups, load_groups, load_proficiency, write_groups_csv,
    GroupAssignment,
};
use crate::seqmine::{filter_by_support_diff, mine, Pattern};
use crate::synth::{generate, GeneratorSpec};

/// Messages to surface and artifacts written by a stage.
#[derive(Debug, Default)]
pub struct StageReport {
    pub messages: Vec<String>,
    pub artifacts: Vec<PathBuf>,
}

impl StageReport {
    fn note(&mut self, msg: impl Into<String>) {
        self.messages.push(msg.into());
    }
}

fn write_artifact(
    config: &PipelineConfig,
    name: &str,
    content: &str,
    report: &mut StageReport,
) -> Result<()> {
    std::fs::create_dir_all(&config.out_dir)?;
    let path = config.out_dir.join(name);
    std::fs::write(&path, content)?;
    report.artifacts.push(path);
    Ok(())
}

fn emit_pair(
    config: &PipelineConfig,
    base: &str,
    csv: String,
    md: String,
    report: &mut StageReport,
) -> Result<()> {
    if config.formats.wants_csv() {
        write_artifact(config, &format!("{base}.csv"), &csv, report)?;
    }
    if config.formats.wants_md() {
        write_artifact(config, &format!("{base}.md"), &md, report)?;
    }
    Ok(())
}

/// Load the corpus, surface load warnings, and fail if validation reports
/// structural errors.
fn load_checked_corpus(config: &PipelineConfig, report: &mut StageReport) -> Result<Corpus> {
    let loaded = load_corpus(&config.corpus_path()?)?;
    if loaded.removed_empty_turns > 0 {
        report.note(format!(
            "cleaning removed {} empty turn(s)",
            loaded.removed_empty_turns
        ));
    }
    for warning in &loaded.warnings {
        report.note(format!("warning: {warning}"));
    }
    let validation = validate_corpus(&loaded.corpus);
    for issue in validation.warnings() {
        report.note(format!("warning: {}: {}", issue.location, issue.message));
    }
    if validation.error_count() > 0 {
        let first = validation.errors().next().unwrap();
        return Err(Error::Other(format!(
            "corpus has {} validation error(s); first: {}: {}",
            validation.error_count(),
            first.location,
            first.message
        )));
    }
    Ok(loaded.corpus)
}

/// Group assignment for analysis stages: an explicit groups CSV wins,
/// otherwise groups derive from the proficiency file via scoring.
fn resolve_groups(config: &PipelineConfig, report: &mut StageReport) -> Result<GroupAssignment> {
    if let Some(path) = &config.groups {
        return load_groups(path);
    }
    if let Some(path) = &config.proficiency {
        let records = load_proficiency(path)?;
        let scores = composite_scores(&records, &config.orientation, config.standardization)?;
        let (_, assignment, warnings) = gains_and_groups(&scores)?;
        for w in warnings {
            report.note(format!("warning: {w}"));
        }
        return Ok(assignment);
    }
    Err(Error::Config(
        "grouping requires --groups or --proficiency".into(),
    ))
}

/// Load and validate; returns the report so the caller can decide the exit
/// status. Load failures (unparseable file) are hard errors.
pub fn stage_validate(config: &PipelineConfig) -> Result<(ValidationReport, StageReport)> {
    let mut report = StageReport::default();
    let loaded = load_corpus(&config.corpus_path()?).map_err(|e| e.in_stage("validate"))?;
    if loaded.removed_empty_turns > 0 {
        report.note(format!(
            "cleaning removed {} empty turn(s)",
            loaded.removed_empty_turns
        ));
    }
    for warning in &loaded.warnings {
        report.note(format!("warning: {warning}"));
    }
    let validation = validate_corpus(&loaded.corpus);
    Ok((validation, report))
}

pub fn stage_summarize(config: &PipelineConfig) -> Result<StageReport> {
    let mut report = StageReport::default();
    let corpus = load_checked_corpus(config, &mut report).map_err(|e| e.in_stage("summarize"))?;
    let summary = summarize(&corpus);
    emit_pair(
        config,
        "summary",
        report::summary_csv(&summary),
        report::summary_md(&summary),
        &mut report,
    )?;
    Ok(report)
}

fn load_icc_csv(path: &std::path::Path) -> Result<Vec<[f64; 2]>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || (line_no == 1 && trimmed.starts_with("subject,")) {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                msg: "expected subject,rater_a,rater_b".into(),
            });
        }
        let a: f64 = fields[1].parse().map_err(|e| Error::Parse {
            line: line_no,
            msg: format!("bad rating {:?}: {e}", fields[1]),
        })?;
        let b: f64 = fields[2].parse().map_err(|e| Error::Parse {
            line: line_no,
            msg: format!("bad rating {:?}: {e}", fields[2]),
        })?;
        rows.push([a, b]);
    }
    Ok(rows)
}

pub fn stage_reliability(config: &PipelineConfig, by_role: bool) -> Result<StageReport> {
    let mut report = StageReport::default();
    let inner = |report: &mut StageReport| -> Result<()> {
        let annotations = load_annotations(&config.annotations_path()?)?;
        let kappas = if by_role {
            let corpus = load_checked_corpus(config, report)?;
            kappa_all_by_label(&annotations, &corpus)?
        } else {
            kappa_all(&annotations)?
        };
        let icc: Option<ICCResult> = match &config.icc {
            Some(path) => Some(icc_two_way(&load_icc_csv(path)?)?),
            None => None,
        };
        for k in &kappas {
            if k.degenerate {
                report.note(format!(
                    "note: constant coders for {}; kappa fixed at 1",
                    k.key()
                ));
            }
        }
        emit_pair(
            config,
            "reliability",
            report::reliability_csv(&kappas, icc.as_ref()),
            report::reliability_md(&kappas, icc.as_ref()),
            report,
        )?;
        Ok(())
    };
    inner(&mut report).map_err(|e| e.in_stage("reliability"))?;
    Ok(report)
}

pub fn stage_score(config: &PipelineConfig) -> Result<(GroupAssignment, StageReport)> {
    let mut report = StageReport::default();
    let inner = |report: &mut StageReport| -> Result<GroupAssignment> {
        let records = load_proficiency(&config.proficiency_path()?)?;
        let scores = composite_scores(&records, &config.orientation, config.standardization)?;
        let (gains, assignment, warnings) = gains_and_groups(&scores)?;
        for w in warnings {
            report.note(format!("warning: {w}"));
        }
        write_artifact(
            config,
            "composites.csv",
            &report::composites_csv(&scores),
            report,
        )?;
        write_artifact(config, "gains.csv", &report::gains_csv(&gains), report)?;
        let mut buf = Vec::new();
        write_groups_csv(&assignment, &mut buf)?;
        write_artifact(
            config,
            "groups.csv",
            std::str::from_utf8(&buf).unwrap(),
            report,
        )?;
        Ok(assignment)
    };
    let assignment = inner(&mut report).map_err(|e| e.in_stage("score"))?;
    Ok((assignment, report))
}

fn compare_freq_inner(
    config: &PipelineConfig,
    corpus: &Corpus,
    groups: &GroupAssignment,
    report: &mut StageReport,
) -> Result<Vec<TestResult>> {
    let table = frequency_table(corpus, groups)?;
    let tests = compare_frequencies_with(&table, ContinuityCorrection::Yates, config.alpha)?;
    emit_pair(
        config,
        "frequency",
        report::frequency_csv(&table, &tests),
        report::frequency_md(&table, &tests),
        report,
    )?;
    Ok(tests)
}

pub fn stage_compare_freq(config: &PipelineConfig) -> Result<StageReport> {
    let mut report = StageReport::default();
    let inner = |report: &mut StageReport| -> Result<()> {
        let corpus = load_checked_corpus(config, report)?;
        let groups = resolve_groups(config, report)?;
        compare_freq_inner(config, &corpus, &groups, report)?;
        Ok(())
    };
    inner(&mut report).map_err(|e| e.in_stage("compare-freq"))?;
    Ok(report)
}

fn mine_inner(
    config: &PipelineConfig,
    corpus: &Corpus,
    groups: Option<&GroupAssignment>,
    report: &mut StageReport,
) -> Result<Vec<Pattern>> {
    let streams = flatten_corpus(corpus);
    let session_groups = match groups {
        Some(g) => Some(g.session_groups(corpus)?),
        None => None,
    };
    let patterns = mine(&streams, &config.mining, session_groups.as_ref())?;
    report.note(format!(
        "mined {} frequent pattern(s) over {} session(s) (support threshold {})",
        patterns.len(),
        streams.len(),
        config.mining.absolute_support(streams.len())
    ));
    // The pattern CSV is the machine-readable stage output; always written.
    write_artifact(
        config,
        "patterns.csv",
        &report::patterns_csv(&patterns),
        report,
    )?;
    if config.formats.wants_md() {
        write_artifact(
            config,
            "patterns.md",
            &report::patterns_md("Frequent DA patterns", &patterns),
            report,
        )?;
    }
    Ok(patterns)
}

pub fn stage_mine(config: &PipelineConfig) -> Result<(Vec<Pattern>, StageReport)> {
    let mut report = StageReport::default();
    let inner = |report: &mut StageReport| -> Result<Vec<Pattern>> {
        let corpus = load_checked_corpus(config, report)?;
        // Groups are optional for plain mining.
        let groups = if config.groups.is_some() || config.proficiency.is_some() {
            Some(resolve_groups(config, report)?)
        } else {
            None
        };
        mine_inner(config, &corpus, groups.as_ref(), report)
    };
    let patterns = inner(&mut report).map_err(|e| e.in_stage("mine"))?;
    Ok((patterns, report))
}

fn filter_inner(
    config: &PipelineConfig,
    patterns: &[Pattern],
    report: &mut StageReport,
) -> Result<Vec<Pattern>> {
    let filtered = filter_by_support_diff(patterns, config.diff_threshold)?;
    report.note(format!(
        "{} of {} pattern(s) meet |support difference| >= {}",
        filtered.len(),
        patterns.len(),
        config.diff_threshold
    ));
    write_artifact(
        config,
        "patterns_filtered.csv",
        &report::patterns_csv(&filtered),
        report,
    )?;
    if config.formats.wants_md() {
        write_artifact(
            config,
            "patterns_filtered.md",
            &report::patterns_md("Patterns with group-contrasted support", &filtered),
            report,
        )?;
    }
    Ok(filtered)
}

pub fn stage_filter(config: &PipelineConfig) -> Result<(Vec<Pattern>, StageReport)> {
    let mut report = StageReport::default();
    let inner = |report: &mut StageReport| -> Result<Vec<Pattern>> {
        let corpus = load_checked_corpus(config, report)?;
        let groups = resolve_groups(config, report)?;
        let patterns = mine_inner(config, &corpus, Some(&groups), report)?;
        filter_inner(config, &patterns, report)
    };
    let filtered = inner(&mut report).map_err(|e| e.in_stage("filter"))?;
    Ok((filtered, report))
}

fn permtest_inner(
    config: &PipelineConfig,
    corpus: &Corpus,
    groups: &GroupAssignment,
    filtered: &[Pattern],
    report: &mut StageReport,
) -> Result<Vec<PermutationResult>> {
    let streams = flatten_corpus(corpus);
    let design = ClusterDesign::from_corpus(corpus, groups)?;
    let results = test_pattern_set(filtered, &streams, &design, &config.perm_settings())?;
    emit_pair(
        config,
        "permutation",
        report::permtest_csv(&results),
        report::permtest_md(&results),
        report,
    )?;
    Ok(results)
}

pub fn stage_permtest(config: &PipelineConfig) -> Result<(Vec<PermutationResult>, StageReport)> {
    let mut report = StageReport::default();
    let inner = |report: &mut StageReport| -> Result<Vec<PermutationResult>> {
        let corpus = load_checked_corpus(config, report)?;
        let groups = resolve_groups(config, report)?;
        let patterns = mine_inner(config, &corpus, Some(&groups), report)?;
        let filtered = filter_inner(config, &patterns, report)?;
        permtest_inner(config, &corpus, &groups, &filtered, report)
    };
    let results = inner(&mut report).map_err(|e| e.in_stage("permtest"))?;
    Ok((results, report))
}

/// Everything run-all computed, for programmatic use.
#[derive(Debug)]
pub struct RunAllOutput {
    pub freq_tests: Vec<TestResult>,
    pub patterns: Vec<Pattern>,
    pub filtered: Vec<Pattern>,
    pub perm_results: Vec<PermutationResult>,
    pub report: StageReport,
}

/// score -> compare-freq -> mine -> filter -> permtest, plus a combined
/// Markdown report.
pub fn run_all(config: &PipelineConfig) -> Result<RunAllOutput> {
    let mut report = StageReport::default();
    let inner = |report: &mut StageReport| -> Result<RunAllOutput> {
        let corpus = load_checked_corpus(config, report)?;

        let groups = if config.groups.is_some() {
            resolve_groups(config, report)?
        } else {
            let (assignment, score_report) = stage_score(config)?;
            report.messages.extend(score_report.messages);
            report.artifacts.extend(score_report.artifacts);
            assignment
        };

        let freq_tests = compare_freq_inner(config, &corpus, &groups, report)?;
        let patterns = mine_inner(config, &corpus, Some(&groups), report)?;
        let filtered = filter_inner(config, &patterns, report)?;
        let perm_results = permtest_inner(config, &corpus, &groups, &filtered, report)?;

        let combined = combined_report(
            config,
            &corpus,
            &groups,
            &freq_tests,
            &patterns,
            &filtered,
            &perm_results,
        )?;
        write_artifact(config, "report.md", &combined, report)?;

        Ok(RunAllOutput {
            freq_tests,
            patterns,
            filtered,
            perm_results,
            report: StageReport::default(),
        })
    };
    let mut output = inner(&mut report).map_err(|e| e.in_stage("run-all"))?;
    output.report = report;
    Ok(output)
}

fn combined_report(
    config: &PipelineConfig,
    corpus: &Corpus,
    groups: &GroupAssignment,
    _freq_tests: &[TestResult],
    patterns: &[Pattern],
    filtered: &[Pattern],
    perm_results: &[PermutationResult],
) -> Result<String> {
    use crate::scoring::Group;
    let summary = summarize(corpus);
    let table = frequency_table(corpus, groups)?;
    let tests = compare_frequencies_with(&table, ContinuityCorrection::Yates, config.alpha)?;

    let mut out = String::from("# Dialogue-act analysis report\n\n");
    out.push_str("## Corpus\n\n");
    out.push_str(&format!(
        "- {} sessions from {} learners, {} turns ({} DA events)\n",
        summary.sessions, summary.learners, summary.turns, summary.total_events
    ));
    if let Some(mean) = summary.mean_turns_per_session {
        out.push_str(&format!("- mean turns per session: {mean:.2}\n"));
    }
    out.push_str(&format!(
        "- groups: {} HP / {} LP learners\n\n",
        groups.learners_in(Group::Hp).count(),
        groups.learners_in(Group::Lp).count()
    ));

    out.push_str(&report::frequency_md(&table, &tests));

    out.push_str("\n## Sequential pattern mining\n\n");
    let streams_n = corpus.sessions.len();
    out.push_str(&format!(
        "- parameters: length {}..{}, max gap {}, minimum support {} session(s)\n",
        config.mining.min_len,
        config.mining.max_len,
        config.mining.max_gap,
        config.mining.absolute_support(streams_n)
    ));
    out.push_str(&format!("- frequent patterns: {}\n", patterns.len()));
    out.push_str(&format!(
        "- patterns with |support difference| >= {}: {}\n\n",
        config.diff_threshold,
        filtered.len()
    ));

    out.push_str(&report::permtest_md(perm_results));
    Ok(out)
}

/// Options for the synthetic-corpus stage.
#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub n_learners: usize,
    pub sessions_per_learner: usize,
    pub turns_min: usize,
    pub turns_max: usize,
    pub two_code_rate: f64,
    pub planted: Option<Vec<DALabel>>,
    pub rate_hp: f64,
    pub rate_lp: f64,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            n_learners: 12,
            sessions_per_learner: 6,
            turns_min: 50,
            turns_max: 90,
            two_code_rate: 0.4,
            planted: None,
            rate_hp: 0.0,
            rate_lp: 0.0,
            seed: 0,
        }
    }
}

impl SynthOptions {
    pub fn to_spec(&self) -> GeneratorSpec {
        GeneratorSpec {
            n_learners: self.n_learners,
            sessions_per_learner: self.sessions_per_learner,
            turns_min: self.turns_min,
            turns_max: self.turns_max,
            two_code_rate: self.two_code_rate,
            planted: self
                .planted
                .as_ref()
                .map(|labels| crate::synth::PlantedPattern {
                    labels: labels.clone(),
                    rate_hp: self.rate_hp,
                    rate_lp: self.rate_lp,
                }),
            seed: self.seed,
            ..GeneratorSpec::default()
        }
    }
}

/// Generate a synthetic corpus and write corpus.jsonl, groups.csv, and
/// manifest.json into the output directory.
pub fn stage_synth(config: &PipelineConfig, options: &SynthOptions) -> Result<StageReport> {
    let mut report = StageReport::default();
    let inner = |report: &mut StageReport| -> Result<()> {
        let output = generate(&options.to_spec())?;
        std::fs::create_dir_all(&config.out_dir)?;
        let corpus_path = config.out_dir.join("corpus.jsonl");
        save_corpus(&output.corpus, &corpus_path)?;
        report.artifacts.push(corpus_path);

        let mut buf = Vec::new();
        write_groups_csv(&output.groups, &mut buf)?;
        write_artifact(
            config,
            "groups.csv",
            std::str::from_utf8(&buf).unwrap(),
            report,
        )?;

        let manifest = serde_json::to_string_pretty(&output.manifest)
            .map_err(|e| Error::Other(format!("manifest serialization: {e}")))?;
        write_artifact(config, "manifest.json", &manifest, report)?;

        report.note(format!(
            "generated {} sessions from {} learners ({} injection(s))",
            output.corpus.sessions.len(),
            output.corpus.learners.len(),
            output.manifest.injections.len()
        ));
        Ok(())
    };
    inner(&mut report).map_err(|e| e.in_stage("synth"))?;
    Ok(report)
}
