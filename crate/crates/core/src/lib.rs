//! Dialogue-act sequence analysis toolkit.
//!
//! Ingests dialogue-act-annotated learner-chatbot sessions and runs the full
//! analysis pipeline: inter-coder reliability, composite proficiency scoring
//! with high/low-progress grouping, Holm-corrected chi-square frequency
//! comparison, gap-constrained sequential pattern mining checked against a
//! brute-force oracle, and learner-clustered permutation tests of pattern
//! prevalence. A seeded synthetic-corpus generator supports testing and
//! power analysis.

pub mod config;
pub mod corpus;
pub mod error;
pub mod freqstats;
pub mod permtest;
pub mod pipeline;
pub mod reliability;
pub mod report;
pub mod scoring;
pub mod seqmine;
pub mod synth;

pub use error::{Error, Result};
