//! Run configuration file.
//!
//! A TOML document with one optional table per command plus a global seed:
//!
//! ```toml
//! seed = 0
//!
//! [simulate]
//! out_dir = "data"
//! train = 6000
//! validation = 1000
//! test = 600
//! corpus = "wsj0/si_tr_s"      # directory of mono 16 kHz WAV files
//! synthetic = false            # generate speech stand-ins instead of a corpus
//! utterance_seconds = 3.0      # length of synthetic utterances
//!
//! [model]
//! variant = "ft-jnf"           # t-jnf f-jnf ft-jnf t-nsf f-nsf ft-nsf pf
//! hidden = [256, 128]          # default depends on the variant
//!
//! [train]
//! dataset = "data"
//! run_dir = "runs/ft-jnf"
//! input = "mvdr-oracle"        # optional pipeline producing the network input (PF)
//! batch_size = 6
//! crop_seconds = 3.0
//! max_epochs = 250
//! patience = 20
//! alpha = 10.0
//! learning_rate = 1e-3
//! grad_clip = 5.0              # optional
//! speech_only_loss = false     # forced on when `input` is set
//!
//! [evaluate]
//! dataset = "data"
//! split = "test"
//! pipelines = ["identity", "mvdr-oracle", "runs/ft-jnf/best.json"]
//! out_dir = "reports/test"
//! external_metric = "polqa --mode swb"  # optional, called as `<cmd> ref.wav est.wav`
//! ```

use std::path::{Path, PathBuf};

use jnf_core::dataset::SplitCounts;
use jnf_core::neural::Variant;
use jnf_core::training::{AdamConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub simulate: Option<SimulateSection>,
    pub model: Option<ModelSection>,
    pub train: Option<TrainSection>,
    pub evaluate: Option<EvaluateSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub out_dir: PathBuf,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub corpus: Option<PathBuf>,
    pub synthetic: bool,
    pub utterance_seconds: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        let counts = SplitCounts::default();
        Self {
            out_dir: PathBuf::from("data"),
            train: counts.train,
            validation: counts.validation,
            test: counts.test,
            corpus: None,
            synthetic: false,
            utterance_seconds: 3.0,
        }
    }
}

impl SimulateSection {
    pub fn counts(&self) -> SplitCounts {
        SplitCounts {
            train: self.train,
            validation: self.validation,
            test: self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub variant: Variant,
    pub hidden: Option<(usize, usize)>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            variant: Variant::FtJnf,
            hidden: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub dataset: PathBuf,
    pub run_dir: PathBuf,
    pub input: Option<String>,
    pub batch_size: usize,
    pub crop_seconds: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub alpha: f64,
    pub learning_rate: f64,
    pub grad_clip: Option<f64>,
    pub speech_only_loss: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            dataset: PathBuf::from("data"),
            run_dir: PathBuf::from("runs/train"),
            input: None,
            batch_size: t.batch_size,
            crop_seconds: t.crop_seconds,
            max_epochs: t.max_epochs,
            patience: t.patience,
            alpha: t.alpha,
            learning_rate: t.optimizer.learning_rate,
            grad_clip: t.grad_clip,
            speech_only_loss: t.speech_only_loss,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            crop_seconds: self.crop_seconds,
            max_epochs: self.max_epochs,
            patience: self.patience,
            alpha: self.alpha,
            optimizer: AdamConfig {
                learning_rate: self.learning_rate,
                ..AdamConfig::default()
            },
            grad_clip: self.grad_clip,
            speech_only_loss: self.speech_only_loss || self.input.is_some(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSection {
    pub dataset: PathBuf,
    pub split: String,
    pub pipelines: Vec<String>,
    pub out_dir: PathBuf,
    pub external_metric: Option<String>,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("data"),
            split: "test".into(),
            pipelines: vec!["identity".into(), "mvdr-oracle".into()],
            out_dir: PathBuf::from("reports"),
            external_metric: None,
        }
    }
}

/// Parsed configuration together with its source text.
pub struct LoadedConfig {
    pub config: RunConfig,
    pub text: String,
}

pub fn load(path: Option<&Path>) -> Result<LoadedConfig, CliError> {
    let Some(path) = path else {
        return Ok(LoadedConfig {
            config: RunConfig::default(),
            text: String::new(),
        });
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::MissingFile(format!("{}: {e}", path.display())))?;
    let config = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
    Ok(LoadedConfig { config, text })
}

/// Writes the verbatim config and the effective (merged) one into `dir`.
pub fn snapshot(dir: &Path, loaded: &LoadedConfig, effective: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let write = |name: &str, body: &str| {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    };
    write("config.toml", &loaded.text)?;
    let resolved = toml::to_string_pretty(effective).map_err(|e| CliError::Config(e.to_string()))?;
    write("config.resolved.toml", &resolved)
}
