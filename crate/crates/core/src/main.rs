//! Command-line front end for the dialogue-act analysis pipeline.
//!
//! Exit codes: 0 success, 1 validation/stage errors, 2 usage errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use da_seqlab::config::PipelineConfig;
use da_seqlab::corpus::DALabel;
use da_seqlab::pipeline::{self, StageReport, SynthOptions};
use da_seqlab::report::ReportFormat;
use da_seqlab::seqmine::parse_support;
use da_seqlab::Error;

#[derive(Parser)]
#[command(
    name = "da-seqlab",
    version,
    about = "Dialogue-act sequence analysis: frequencies, mining, and cluster permutation tests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the analysis stages; every flag overrides the config file.
#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// JSON config file with paths and parameters
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Corpus JSONL file
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Proficiency CSV (learner_id,timepoint,six indicators)
    #[arg(long, global = true)]
    proficiency: Option<PathBuf>,
    /// Dual-annotation JSONL file
    #[arg(long, global = true)]
    annotations: Option<PathBuf>,
    /// Learner grouping CSV (learner_id,group)
    #[arg(long, global = true)]
    groups: Option<PathBuf>,
    /// Continuous-ratings CSV (subject,rater_a,rater_b) for the ICC
    #[arg(long, global = true)]
    icc: Option<PathBuf>,
    /// Output directory for artifacts
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed (falls back to DA_SEQLAB_SEED, then 0)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Minimum session support: integer count or fraction of sessions
    #[arg(long, global = true)]
    min_support: Option<String>,
    /// Maximum gap between consecutive pattern elements (1 = adjacent)
    #[arg(long, global = true)]
    max_gap: Option<usize>,
    /// Minimum pattern length
    #[arg(long, global = true)]
    min_len: Option<usize>,
    /// Maximum pattern length
    #[arg(long, global = true)]
    max_len: Option<usize>,
    /// Support-difference filter threshold
    #[arg(long, global = true)]
    diff_threshold: Option<i64>,
    /// Permutation mode: auto, exact, or mc
    #[arg(long, global = true)]
    perm_mode: Option<String>,
    /// Monte-Carlo permutation count
    #[arg(long, global = true)]
    perm_n: Option<usize>,
    /// Report formats: csv, md, or both
    #[arg(long, global = true)]
    format: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a corpus file against the coding-scheme invariants
    Validate(CommonArgs),
    /// Corpus totals, mean turns per session, and per-label counts
    Summarize(CommonArgs),
    /// Per-code Cohen's kappa (and optional ICC) from dual annotations
    Reliability {
        #[command(flatten)]
        common: CommonArgs,
        /// Split kappas by speaker role (requires --corpus)
        #[arg(long)]
        by_role: bool,
    },
    /// Composite proficiency scores, gains, and the HP/LP grouping
    Score(CommonArgs),
    /// Per-label frequency table and Holm-corrected chi-square tests
    CompareFreq(CommonArgs),
    /// Mine frequent gap-constrained DA patterns
    Mine(CommonArgs),
    /// Mine, then filter patterns by group support difference
    Filter(CommonArgs),
    /// Mine, filter, and run learner-clustered permutation tests
    Permtest(CommonArgs),
    /// Full pipeline: score, compare-freq, mine, filter, permtest, report
    RunAll(CommonArgs),
    /// Generate a seeded synthetic corpus with optional planted pattern
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 12)]
        learners: usize,
        #[arg(long, default_value_t = 6)]
        sessions_per_learner: usize,
        #[arg(long, default_value_t = 50)]
        turns_min: usize,
        #[arg(long, default_value_t = 90)]
        turns_max: usize,
        /// Chance a turn carries two codes
        #[arg(long, default_value_t = 0.4)]
        two_code_rate: f64,
        /// Planted pattern as comma-separated labels, e.g. "[t]Q,[s]R,[t]Cp"
        #[arg(long)]
        plant: Option<String>,
        /// Injection rate for HP sessions
        #[arg(long, default_value_t = 0.0)]
        rate_hp: f64,
        /// Injection rate for LP sessions
        #[arg(long, default_value_t = 0.0)]
        rate_lp: f64,
    },
}

/// Build the effective config: file, then flag overrides. Any failure here
/// is a usage error.
fn build_config(args: &CommonArgs) -> Result<PipelineConfig, Error> {
    build_config_inner(args).map_err(|e| match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    })
}

fn build_config_inner(args: &CommonArgs) -> Result<PipelineConfig, Error> {
    let mut config = match &args.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(p) = &args.corpus {
        config.corpus = Some(p.clone());
    }
    if let Some(p) = &args.proficiency {
        config.proficiency = Some(p.clone());
    }
    if let Some(p) = &args.annotations {
        config.annotations = Some(p.clone());
    }
    if let Some(p) = &args.groups {
        config.groups = Some(p.clone());
    }
    if let Some(p) = &args.icc {
        config.icc = Some(p.clone());
    }
    if let Some(p) = &args.out {
        config.out_dir = p.clone();
    }
    if let Some(seed) = args.seed {
        config.permutation.seed = Some(seed);
    }
    if let Some(s) = &args.min_support {
        config.mining.min_support = parse_support(s)?;
    }
    if let Some(gap) = args.max_gap {
        config.mining.max_gap = gap;
    }
    if let Some(len) = args.min_len {
        config.mining.min_len = len;
    }
    if let Some(len) = args.max_len {
        config.mining.max_len = len;
    }
    if let Some(t) = args.diff_threshold {
        config.diff_threshold = t;
    }
    if let Some(mode) = &args.perm_mode {
        config.permutation.mode = mode.parse()?;
    }
    if let Some(n) = args.perm_n {
        config.permutation.n = n;
    }
    if let Some(format) = &args.format {
        config.formats = format.parse::<ReportFormat>()?;
    }
    config.validate()?;
    Ok(config)
}

fn print_report(report: &StageReport) {
    for msg in &report.messages {
        println!("{msg}");
    }
    for path in &report.artifacts {
        println!("wrote {}", path.display());
    }
}

fn parse_plant(text: &str) -> Result<Vec<DALabel>, Error> {
    text.split(',')
        .map(|t| {
            let t = t.trim();
            DALabel::parse(t).ok_or_else(|| Error::Config(format!("bad planted label {t:?}")))
        })
        .collect()
}

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Validate(args) => {
            let config = build_config(&args)?;
            let (validation, report) = pipeline::stage_validate(&config)?;
            print_report(&report);
            for issue in &validation.issues {
                println!(
                    "{:?}: {}: {}",
                    issue.severity, issue.location, issue.message
                );
            }
            if validation.error_count() > 0 {
                println!(
                    "{} error(s), {} warning(s)",
                    validation.error_count(),
                    validation.warning_count()
                );
                return Ok(EXIT_FAILURE);
            }
            println!("corpus ok ({} warning(s))", validation.warning_count());
            Ok(0)
        }
        Command::Summarize(args) => {
            let config = build_config(&args)?;
            print_report(&pipeline::stage_summarize(&config)?);
            Ok(0)
        }
        Command::Reliability { common, by_role } => {
            let config = build_config(&common)?;
            print_report(&pipeline::stage_reliability(&config, by_role)?);
            Ok(0)
        }
        Command::Score(args) => {
            let config = build_config(&args)?;
            let (_, report) = pipeline::stage_score(&config)?;
            print_report(&report);
            Ok(0)
        }
        Command::CompareFreq(args) => {
            let config = build_config(&args)?;
            print_report(&pipeline::stage_compare_freq(&config)?);
            Ok(0)
        }
        Command::Mine(args) => {
            let config = build_config(&args)?;
            let (_, report) = pipeline::stage_mine(&config)?;
            print_report(&report);
            Ok(0)
        }
        Command::Filter(args) => {
            let config = build_config(&args)?;
            let (_, report) = pipeline::stage_filter(&config)?;
            print_report(&report);
            Ok(0)
        }
        Command::Permtest(args) => {
            let config = build_config(&args)?;
            let (_, report) = pipeline::stage_permtest(&config)?;
            print_report(&report);
            Ok(0)
        }
        Command::RunAll(args) => {
            let config = build_config(&args)?;
            let output = pipeline::run_all(&config)?;
            print_report(&output.report);
            let significant: Vec<String> = output
                .perm_results
                .iter()
                .filter(|r| r.significant)
                .map(|r| r.text())
                .collect();
            if significant.is_empty() {
                println!("no significant pattern differences at adjusted alpha");
            } else {
                println!("significant patterns: {}", significant.join("; "));
            }
            Ok(0)
        }
        Command::Synth {
            common,
            learners,
            sessions_per_learner,
            turns_min,
            turns_max,
            two_code_rate,
            plant,
            rate_hp,
            rate_lp,
        } => {
            let config = build_config(&common)?;
            let options = SynthOptions {
                n_learners: learners,
                sessions_per_learner,
                turns_min,
                turns_max,
                two_code_rate,
                planted: plant.as_deref().map(parse_plant).transpose()?,
                rate_hp,
                rate_lp,
                seed: config.seed(),
            };
            print_report(&pipeline::stage_synth(&config, &options)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err @ Error::Config(_)) => {
            eprintln!("error: {err}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
