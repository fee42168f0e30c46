use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use battlife::data::{SplitSpec, SynthConfig};
use battlife::learners::LearnerSpec;
use battlife::pipeline::PrepOptions;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 7;
pub const DEFAULT_ROSTER: [&str; 7] = ["se", "ridge", "gbt", "lstm", "knn", "rf", "mlp"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    /// A canonical table CSV, or any CSV plus a column mapping.
    Csv {
        path: PathBuf,
        #[serde(default)]
        mapping: Option<PathBuf>,
    },
    Synth(SynthConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSettings {
    pub family: String,
    pub space: Option<PathBuf>,
    pub trials: usize,
}

impl Default for TuneSettings {
    fn default() -> Self {
        Self {
            family: "ridge".into(),
            space: None,
            trials: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSettings {
    pub model: Option<PathBuf>,
    pub samples: usize,
    pub instances: usize,
    pub pdp: Vec<String>,
    pub resolution: usize,
    pub bins: usize,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        Self {
            model: None,
            samples: 64,
            instances: 32,
            pdp: Vec::new(),
            resolution: 20,
            bins: 20,
        }
    }
}

/// Everything a run needs. Command-line flags override these fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub data: Option<DataSource>,
    pub split: SplitSpec,
    pub features: PrepOptions,
    /// Learner trained by `train`; the stacked ensemble when absent.
    pub model: Option<LearnerSpec>,
    /// Roster for `compare`, by family name.
    pub models: Vec<String>,
    /// Per-name learner overrides for the roster.
    pub specs: BTreeMap<String, LearnerSpec>,
    /// Whether `compare` also scores a held-out split of whole cells.
    pub holdout: bool,
    pub tune: TuneSettings,
    pub explain: ExplainSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out: None,
            threads: None,
            data: None,
            split: SplitSpec::default(),
            features: PrepOptions::default(),
            model: None,
            models: DEFAULT_ROSTER.iter().map(|s| s.to_string()).collect(),
            specs: BTreeMap::new(),
            holdout: true,
            tune: TuneSettings::default(),
            explain: ExplainSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    /// Learner for a roster name, honoring overrides, keyed to the run seed.
    pub fn spec_for(&self, name: &str) -> battlife::Result<LearnerSpec> {
        let spec = match self.specs.get(name) {
            Some(s) => s.clone(),
            None => LearnerSpec::default_for(name)?,
        };
        Ok(spec.reseeded(self.seed()))
    }
}
