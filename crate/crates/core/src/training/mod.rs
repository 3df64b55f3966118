//! Loss, cropping, optimization loop and validation-based model selection.

mod loss;
mod optim;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use ndarray::{s, Array2, Array3};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use loss::{derive_noise_mask, loss_graph, loss_value, LossTargets, LossTerm, DEFAULT_ALPHA};
pub use optim::{Adam, AdamConfig};

use crate::acoustics::RenderedSample;
use crate::error::{Error, Result};
use crate::neural::{save_checkpoint, Graph, Model, Shuffle, Tensor};
use crate::seed::substream;
use crate::signal::{StftParams, StftPlan, Waveform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub crop_seconds: f64,
    pub max_epochs: usize,
    /// Stop after this many epochs without validation improvement.
    pub patience: usize,
    pub alpha: f64,
    pub optimizer: AdamConfig,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub speech_only_loss: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 6,
            crop_seconds: 3.0,
            max_epochs: 250,
            patience: 20,
            alpha: DEFAULT_ALPHA,
            optimizer: AdamConfig::default(),
            grad_clip: None,
            speech_only_loss: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.crop_seconds > 0.0) || !(self.alpha > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid training config {self:?}")));
        }
        Ok(())
    }
}

/// Network input with its training references, all at the same rate.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    /// Model input; channel 0 is the reference the mask is applied to.
    pub noisy: Waveform,
    /// Aligned target speech.
    pub speech: Vec<f64>,
    /// Noise at the reference channel, if known.
    pub noise: Option<Vec<f64>>,
}

impl TrainingExample {
    pub fn from_rendered(sample: &RenderedSample) -> Self {
        Self {
            noisy: sample.noisy.clone(),
            speech: sample.target_aligned.channel_vec(0),
            noise: Some(sample.noise.channel_vec(0)),
        }
    }

    pub fn len(&self) -> usize {
        self.noisy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noisy.is_empty()
    }

    /// Cyclically tiles to at least `len` samples and cuts `[offset, offset + len)`.
    pub fn crop(&self, offset: usize, len: usize) -> Result<Self> {
        let noisy = self.noisy.tiled(offset + len).segment(offset, len)?;
        let cut = |x: &[f64]| -> Vec<f64> { (offset..offset + len).map(|n| x[n % x.len()]).collect() };
        Ok(Self {
            noisy,
            speech: cut(&self.speech),
            noise: self.noise.as_deref().map(cut),
        })
    }
}

fn crop_len(seconds: f64, fs: u32) -> usize {
    (seconds * fs as f64).round() as usize
}

/// Uniform random offset of a `crop`-sample window in `len` samples (0 when
/// the signal is not longer than the window).
pub fn crop_offset<R: Rng>(len: usize, crop: usize, rng: &mut R) -> usize {
    if len > crop {
        rng.gen_range(0..=len - crop)
    } else {
        0
    }
}

/// Aligned random crop of every stem; shorter samples are tiled first.
pub fn crop_random<R: Rng>(sample: &RenderedSample, seconds: f64, rng: &mut R) -> Result<RenderedSample> {
    let len = crop_len(seconds, sample.sample_rate());
    let offset = crop_offset(sample.len(), len, rng);
    let cut = |w: &Waveform| w.tiled(offset + len).segment(offset, len);
    Ok(RenderedSample {
        noisy: cut(&sample.noisy)?,
        target_aligned: cut(&sample.target_aligned)?,
        noise: cut(&sample.noise)?,
        snr_db: sample.snr_db,
        scene: sample.scene.clone(),
    })
}

/// Per-sample constants of the loss.
struct Prepared {
    input: Array3<Complex64>,
    reference: Array2<Complex64>,
    speech: Vec<f64>,
    speech_mag: Array2<f64>,
    noise: Option<(Vec<f64>, Array2<f64>)>,
}

fn prepare(ex: &TrainingExample, plan: &StftPlan, speech_only: bool) -> Result<Prepared> {
    let channels = ex.noisy.num_channels();
    let first = plan.analyze(ex.noisy.channel(0).as_slice().expect("row-major"))?;
    let (f, t) = first.dim();
    let mut input = Array3::zeros((channels, f, t));
    input.slice_mut(s![0, .., ..]).assign(&first);
    for c in 1..channels {
        let spec = plan.analyze(ex.noisy.channel(c).as_slice().expect("row-major"))?;
        input.slice_mut(s![c, .., ..]).assign(&spec);
    }
    let speech_mag = plan.analyze(&ex.speech)?.mapv(|z| z.norm());
    let noise = match (&ex.noise, speech_only) {
        (Some(v), false) => Some((v.clone(), plan.analyze(v)?.mapv(|z| z.norm()))),
        _ => None,
    };
    Ok(Prepared {
        input,
        reference: first,
        speech: ex.speech.clone(),
        speech_mag,
        noise,
    })
}

/// Records forward pass and mean loss of a batch; returns the graph, the
/// loss node and the parameter nodes.
fn batch_graph(
    model: &Model,
    batch: &[Prepared],
    plan: &Arc<StftPlan>,
    alpha: f64,
    shuffle: Shuffle<'_>,
) -> Result<(Graph, crate::neural::Var, Vec<crate::neural::Var>)> {
    let mut g = Graph::new();
    let views: Vec<_> = batch.iter().map(|p| p.input.view()).collect();
    let pass = model.forward_graph(&mut g, &views, shuffle)?;
    let (f, t) = batch[0].reference.dim();
    let mut total = None;
    for (n, p) in batch.iter().enumerate() {
        let m = g.slice(pass.mask, 0, n, n + 1)?;
        let m = g.reshape(m, &[f, t, 2])?;
        let targets = LossTargets {
            reference: &p.reference,
            speech: &p.speech,
            speech_mag: &p.speech_mag,
            noise: p.noise.as_ref().map(|(w, m)| (w.as_slice(), m)),
        };
        let l = loss_graph(&mut g, m, &targets, plan, alpha)?;
        total = Some(match total {
            Some(acc) => g.add(acc, l)?,
            None => l,
        });
    }
    let total = total.ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let mean = g.affine(total, 1.0 / batch.len() as f64, 0.0);
    Ok((g, mean, pass.params))
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_seconds: f64,
}

/// Mutable optimization state around a model.
pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    pub optimizer: Adam,
    plan: Arc<StftPlan>,
    shuffle_rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig, stft: StftParams) -> Result<Self> {
        config.validate()?;
        model.validate()?;
        let shapes: Vec<&[usize]> = model.params.iter().map(|p| p.value.shape()).collect();
        let optimizer = Adam::new(config.optimizer, &shapes);
        let shuffle_rng = substream(config.seed, "train-shuffle", 0);
        Ok(Self {
            model,
            config,
            optimizer,
            plan: Arc::new(StftPlan::new(stft)?),
            shuffle_rng,
        })
    }

    fn prepare_all(&self, examples: &[TrainingExample]) -> Result<Vec<Prepared>> {
        examples
            .iter()
            .map(|ex| prepare(ex, &self.plan, self.config.speech_only_loss))
            .collect()
    }

    /// One optimizer step on equally long examples; returns the batch loss
    /// before the update.
    pub fn step(&mut self, batch: &[TrainingExample]) -> Result<f64> {
        let prepared = self.prepare_all(batch)?;
        let (g, loss, params) = batch_graph(
            &self.model,
            &prepared,
            &self.plan,
            self.config.alpha,
            Shuffle::Random(&mut self.shuffle_rng),
        )?;
        let value = g.scalar(loss);
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("training loss {value}")));
        }
        let mut grads = g.backward(loss)?;
        let mut grads: Vec<Tensor> = params
            .iter()
            .zip(&self.model.params)
            .map(|(v, p)| grads.take(*v).unwrap_or_else(|| Tensor::zeros(p.value.raw_dim())))
            .collect();
        if let Some(limit) = self.config.grad_clip {
            let norm = grads.iter().map(|g| g.mapv(|x| x * x).sum()).sum::<f64>().sqrt();
            if norm > limit {
                grads.iter_mut().for_each(|g| *g *= limit / norm);
            }
        }
        if grads.iter().any(|g| g.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite("gradient".into()));
        }
        let mut values: Vec<&mut Tensor> = self.model.params.iter_mut().map(|p| &mut p.value).collect();
        self.optimizer.update(&mut values, &grads)?;
        Ok(value)
    }

    /// Mean loss over examples without updating, using a fixed shuffle seed.
    pub fn evaluate_loss(&self, examples: &[TrainingExample]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::InvalidArgument("no validation examples".into()));
        }
        let mut rng = substream(self.config.seed, "validation-shuffle", 0);
        let mut total = 0.0;
        for chunk in examples.chunks(self.config.batch_size) {
            let prepared = self.prepare_all(chunk)?;
            let (g, loss, _) = batch_graph(
                &self.model,
                &prepared,
                &self.plan,
                self.config.alpha,
                Shuffle::Random(&mut rng),
            )?;
            total += g.scalar(loss) * chunk.len() as f64;
        }
        Ok(total / examples.len() as f64)
    }
}

/// Outcome of [`train`].
#[derive(Debug, Clone)]
pub struct TrainState {
    pub epoch: usize,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub best_model: Model,
    pub best_checkpoint: Option<PathBuf>,
    pub history: Vec<EpochRecord>,
    pub optimizer: Adam,
}

/// Indexed access to training examples, in memory or loaded on demand.
pub trait ExampleSource: Sync {
    fn len(&self) -> usize;

    fn example(&self, index: usize) -> Result<TrainingExample>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ExampleSource for [TrainingExample] {
    fn len(&self) -> usize {
        <[TrainingExample]>::len(self)
    }

    fn example(&self, index: usize) -> Result<TrainingExample> {
        Ok(self[index].clone())
    }
}

impl ExampleSource for Vec<TrainingExample> {
    fn len(&self) -> usize {
        <[TrainingExample]>::len(self)
    }

    fn example(&self, index: usize) -> Result<TrainingExample> {
        Ok(self[index].clone())
    }
}

/// Centre crop used for validation.
pub fn center_crop(ex: &TrainingExample, len: usize) -> Result<TrainingExample> {
    let offset = ex.len().saturating_sub(len) / 2;
    ex.crop(offset, len)
}

fn write_log(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut text = String::from("epoch,train_loss,val_loss,wall_seconds\n");
    for r in history {
        text.push_str(&format!("{},{},{},{:.3}\n", r.epoch, r.train_loss, r.val_loss, r.wall_seconds));
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Epoch loop with random crops, validation on centre crops, checkpointing
/// of the best model and early stopping.
///
/// With `out_dir` set, writes `train_log.csv` after every epoch and
/// `best.json` whenever the validation loss improves.
pub fn train<S: ExampleSource + ?Sized, V: ExampleSource + ?Sized>(
    model: Model,
    train_set: &S,
    val_set: &V,
    config: &TrainConfig,
    stft: StftParams,
    out_dir: Option<&Path>,
) -> Result<TrainState> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Dataset("training and validation sets must not be empty".into()));
    }
    let fs = train_set.example(0)?.noisy.sample_rate;
    let len = crop_len(config.crop_seconds, fs);
    let val: Vec<TrainingExample> = (0..val_set.len())
        .map(|i| center_crop(&val_set.example(i)?, len))
        .collect::<Result<_>>()?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let checkpoint = out_dir.map(|d| d.join("best.json"));
    let mut trainer = Trainer::new(model, config.clone(), stft)?;
    let mut order_rng = substream(config.seed, "train-order", 0);
    let mut crop_rng = substream(config.seed, "train-crop", 0);
    let start = Instant::now();
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, Model)> = None;
    let mut step = 0;
    let mut epoch = 0;
    while epoch < config.max_epochs {
        epoch += 1;
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut order_rng);
        let mut sum = 0.0;
        let mut count = 0;
        for idx in order.chunks(config.batch_size) {
            let batch: Vec<TrainingExample> = idx
                .iter()
                .map(|&i| {
                    let ex = train_set.example(i)?;
                    ex.crop(crop_offset(ex.len(), len, &mut crop_rng), len)
                })
                .collect::<Result<_>>()?;
            step += 1;
            let loss = trainer.step(&batch).map_err(|e| Error::Diverged {
                epoch,
                step,
                detail: e.to_string(),
                last_good: best.as_ref().and(checkpoint.clone()),
            })?;
            sum += loss * batch.len() as f64;
            count += batch.len();
        }
        let val_loss = trainer.evaluate_loss(&val)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                step,
                detail: format!("validation loss {val_loss}"),
                last_good: best.as_ref().and(checkpoint.clone()),
            });
        }
        history.push(EpochRecord {
            epoch,
            train_loss: sum / count as f64,
            val_loss,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        log::info!("epoch {epoch}: train {:.4}, val {val_loss:.4}", sum / count as f64);
        if best.as_ref().is_none_or(|(_, b, _)| val_loss < *b) {
            if let Some(path) = &checkpoint {
                save_checkpoint(&trainer.model, path)?;
            }
            best = Some((epoch, val_loss, trainer.model.clone()));
        }
        if let Some(dir) = out_dir {
            write_log(&dir.join("train_log.csv"), &history)?;
        }
        let best_epoch = best.as_ref().map_or(0, |b| b.0);
        if epoch - best_epoch >= config.patience {
            break;
        }
    }
    let (best_epoch, best_validation_loss, best_model) = best.expect("at least one epoch");
    Ok(TrainState {
        epoch,
        best_epoch,
        best_validation_loss,
        best_model,
        best_checkpoint: checkpoint,
        history,
        optimizer: trainer.optimizer,
    })
}
