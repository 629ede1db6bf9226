//! Pipeline configuration: one JSON document whose defaults reproduce the
//! reference parameterization (pattern length 2..4, max gap 1, 20% support,
//! diff threshold 10, alpha .05, marginal band .10), overridable per field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::permtest::{PermStatistic, PermStrategy, PermTestSettings, DEFAULT_EXACT_CAP};
use crate::report::ReportFormat;
use crate::scoring::{default_orientation, OrientationMap, StandardizationScope};
use crate::seqmine::MiningParams;

pub const SEED_ENV_VAR: &str = "DA_SEQLAB_SEED";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PermutationConfig {
    pub mode: PermStrategy,
    pub statistic: PermStatistic,
    pub n: usize,
    pub seed: Option<u64>,
    pub exact_cap: u64,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        PermutationConfig {
            mode: PermStrategy::Auto,
            statistic: PermStatistic::SupportDiff,
            n: 10_000,
            seed: None,
            exact_cap: DEFAULT_EXACT_CAP as u64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: Option<PathBuf>,
    pub proficiency: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    /// Learner grouping CSV; takes precedence over scoring-derived groups.
    pub groups: Option<PathBuf>,
    /// Optional continuous-ratings CSV (subject,rater_a,rater_b) for the ICC.
    pub icc: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub mining: MiningParams,
    pub diff_threshold: i64,
    pub permutation: PermutationConfig,
    pub alpha: f64,
    pub marginal: f64,
    pub orientation: OrientationMap,
    pub standardization: StandardizationScope,
    pub formats: ReportFormat,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: None,
            proficiency: None,
            annotations: None,
            groups: None,
            icc: None,
            out_dir: PathBuf::from("out"),
            mining: MiningParams::default(),
            diff_threshold: 10,
            permutation: PermutationConfig::default(),
            alpha: 0.05,
            marginal: 0.10,
            orientation: default_orientation(),
            standardization: StandardizationScope::default(),
            formats: ReportFormat::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {path:?}: {e}")))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("cannot parse config {path:?}: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.mining.validate()?;
        if self.diff_threshold < 0 {
            return Err(Error::Config(format!(
                "diff_threshold {} must be non-negative",
                self.diff_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.marginal) {
            return Err(Error::Config(
                "alpha and marginal must lie in [0, 1]".into(),
            ));
        }
        if self.marginal < self.alpha {
            return Err(Error::Config(format!(
                "marginal band {} below alpha {}",
                self.marginal, self.alpha
            )));
        }
        Ok(())
    }

    /// Effective seed: explicit config value, else the environment fallback,
    /// else 0.
    pub fn seed(&self) -> u64 {
        if let Some(seed) = self.permutation.seed {
            return seed;
        }
        std::env::var(SEED_ENV_VAR)
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(0)
    }

    pub fn perm_settings(&self) -> PermTestSettings {
        PermTestSettings {
            strategy: self.permutation.mode,
            statistic: self.permutation.statistic,
            n_draws: self.permutation.n,
            seed: self.seed(),
            exact_cap: self.permutation.exact_cap as u128,
            max_gap: self.mining.max_gap,
            alpha: self.alpha,
            marginal_band: self.marginal,
        }
    }

    fn require(path: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
        path.clone()
            .ok_or_else(|| Error::Config(format!("no {what} path given (flag or config)")))
    }

    pub fn corpus_path(&self) -> Result<PathBuf> {
        Self::require(&self.corpus, "corpus")
    }

    pub fn annotations_path(&self) -> Result<PathBuf> {
        Self::require(&self.annotations, "annotations")
    }

    pub fn proficiency_path(&self) -> Result<PathBuf> {
        Self::require(&self.proficiency, "proficiency")
    }
}
