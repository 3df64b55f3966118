use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::acoustics::RenderedSample;
use crate::beamforming::{oracle_mvdr_enhance, DEFAULT_LAMBDA};
use crate::error::{Error, Result};
use crate::neural::{load_checkpoint, Model};
use crate::signal::{apply_mask, istft, stft, uncompress_mask, Spectrogram, StftParams, Waveform};

/// Seed of the sequence permutations shuffled variants draw at inference.
pub const INFERENCE_SHUFFLE_SEED: u64 = 0;

/// One processing step of an enhancement pipeline.
#[derive(Debug, Clone)]
pub enum Stage {
    /// Passes the reference channel through.
    Identity,
    /// MVDR beamformer driven by the oracle speech and noise stems.
    MvdrOracle { lambda: f64 },
    /// Trained mask estimator applied to the reference channel of its input.
    Model { name: String, model: Arc<Model> },
}

impl Stage {
    pub fn name(&self) -> String {
        match self {
            Stage::Identity => "identity".into(),
            Stage::MvdrOracle { .. } => "mvdr-oracle".into(),
            Stage::Model { name, .. } => name.clone(),
        }
    }

    /// `identity`, `mvdr-oracle` or a checkpoint path.
    pub fn parse(token: &str) -> Result<Self> {
        match token {
            "identity" => Ok(Stage::Identity),
            "mvdr-oracle" => Ok(Stage::MvdrOracle { lambda: DEFAULT_LAMBDA }),
            path => {
                let model = load_checkpoint(Path::new(path))?;
                let name = Path::new(path)
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.to_string());
                Ok(Stage::Model {
                    name,
                    model: Arc::new(model),
                })
            }
        }
    }
}

/// Ordered stages with a report tag.
#[derive(Debug, Clone)]
pub struct PipelineSpec {
    pub stages: Vec<Stage>,
    pub tag: String,
}

impl PipelineSpec {
    pub fn new(stages: Vec<Stage>) -> Self {
        let tag = stages.iter().map(Stage::name).collect::<Vec<_>>().join("+");
        Self { stages, tag }
    }

    pub fn identity() -> Self {
        Self::new(vec![Stage::Identity])
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    /// Stages joined by `+`, e.g. `mvdr-oracle+runs/pf/best.json`.
    pub fn parse(text: &str) -> Result<Self> {
        let stages = text
            .split('+')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(Stage::parse)
            .collect::<Result<Vec<_>>>()?;
        if stages.is_empty() {
            return Err(Error::InvalidArgument(format!("empty pipeline {text:?}")));
        }
        Ok(Self::new(stages))
    }

    /// Checkpoint paths referenced by the pipeline text, for run snapshots.
    pub fn checkpoints(text: &str) -> Vec<PathBuf> {
        text.split('+')
            .map(str::trim)
            .filter(|t| !t.is_empty() && *t != "identity" && *t != "mvdr-oracle")
            .map(PathBuf::from)
            .collect()
    }
}

impl fmt::Display for PipelineSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag)
    }
}

enum State {
    Time(Waveform),
    Freq(Spectrogram),
}

fn stage_error(stage: &Stage, reason: impl fmt::Display) -> Error {
    Error::Stage {
        stage: stage.name(),
        reason: reason.to_string(),
    }
}

/// Runs the stages on a sample and returns the mono output waveform.
pub fn run_pipeline(spec: &PipelineSpec, sample: &RenderedSample, params: &StftParams) -> Result<Waveform> {
    let mut state = State::Time(sample.noisy.clone());
    for stage in &spec.stages {
        state = match (stage, state) {
            (Stage::Identity, State::Time(w)) => State::Time(w.select_channel(0)),
            (Stage::Identity, State::Freq(s)) => State::Freq(s.select_channel(0)),
            (Stage::MvdrOracle { lambda }, state) => {
                let noisy = match state {
                    State::Time(w) => stft(&w, params)?,
                    State::Freq(s) => s,
                };
                if noisy.num_channels() < 2 {
                    return Err(stage_error(stage, "needs a multichannel input"));
                }
                let speech = stft(&sample.reverberant_target(), params)?;
                let noise = stft(&sample.noise, params)?;
                if speech.data.dim() != noisy.data.dim() {
                    return Err(stage_error(stage, "oracle stems do not match the stage input"));
                }
                State::Freq(oracle_mvdr_enhance(&noisy, &speech, &noise, *lambda).map_err(|e| stage_error(stage, e))?)
            }
            (Stage::Model { model, .. }, state) => {
                let input = match state {
                    State::Time(w) => stft(&w, params)?,
                    State::Freq(s) => s,
                };
                let want = model.config.channels;
                let input = if want == 1 && input.num_channels() > 1 {
                    input.select_channel(0)
                } else {
                    input
                };
                if input.num_channels() != want || input.num_bins() != model.config.bins {
                    return Err(stage_error(
                        stage,
                        format!(
                            "model expects {want} channels × {} bins, input has {} × {}",
                            model.config.bins,
                            input.num_channels(),
                            input.num_bins()
                        ),
                    ));
                }
                let mask = model
                    .forward(&input, INFERENCE_SHUFFLE_SEED)
                    .map_err(|e| stage_error(stage, e))?;
                State::Freq(apply_mask(&uncompress_mask(&mask), &input.select_channel(0))?)
            }
        };
    }
    match state {
        State::Time(w) => Ok(w.select_channel(0)),
        State::Freq(s) => Ok(istft(&s.select_channel(0), params)?),
    }
}
