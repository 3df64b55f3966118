//! Filter variants built from two bi-LSTM layers and a tanh feed-forward head.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array2, ArrayView3, IxDyn};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::arrange::{
    arrange_batch, feature_count, inverse_permutations, random_permutations, Arrangement,
};
use crate::neural::tape::{Graph, Tensor, Var};
use crate::seed::rng_from_seed;
use crate::signal::{ComplexMask, Spectrogram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    TJnf,
    FJnf,
    FtJnf,
    TNsf,
    FNsf,
    FtNsf,
    Pf,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::TJnf,
        Variant::FJnf,
        Variant::FtJnf,
        Variant::TNsf,
        Variant::FNsf,
        Variant::FtNsf,
        Variant::Pf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::TJnf => "t-jnf",
            Variant::FJnf => "f-jnf",
            Variant::FtJnf => "ft-jnf",
            Variant::TNsf => "t-nsf",
            Variant::FNsf => "f-nsf",
            Variant::FtNsf => "ft-nsf",
            Variant::Pf => "pf",
        }
    }

    pub fn is_nsf(self) -> bool {
        matches!(self, Variant::TNsf | Variant::FNsf | Variant::FtNsf)
    }

    pub fn is_spatial(self) -> bool {
        self != Variant::Pf
    }

    /// Arrangement of the first and second LSTM layer and the shuffle scope.
    pub fn schedule(self) -> Schedule {
        use Arrangement::*;
        let (layers, shuffle) = match self {
            Variant::TJnf => ([NarrowBand, NarrowBand], ShuffleScope::None),
            Variant::FJnf => ([WideBand, WideBand], ShuffleScope::None),
            Variant::FtJnf => ([WideBand, NarrowBand], ShuffleScope::None),
            Variant::TNsf => ([NarrowBand, NarrowBand], ShuffleScope::AroundBoth),
            Variant::FNsf => ([WideBand, WideBand], ShuffleScope::AroundBoth),
            Variant::FtNsf => ([NarrowBand, WideBand], ShuffleScope::PerLayer),
            Variant::Pf => ([SpectralStack, SpectralStack], ShuffleScope::None),
        };
        Schedule { layers, shuffle }
    }

    pub fn default_hidden(self) -> (usize, usize) {
        if self == Variant::Pf {
            (256, 256)
        } else {
            (256, 128)
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant `{s}`")))
    }
}

/// Where sequence shuffling is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShuffleScope {
    None,
    /// One permutation before the first layer, undone after the second.
    AroundBoth,
    /// Each layer wrapped in its own permutation and inverse.
    PerLayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    pub layers: [Arrangement; 2],
    pub shuffle: ShuffleScope,
}

/// Permutations used by a forward pass of a shuffled variant.
pub enum Shuffle<'a> {
    /// Skip shuffling even for shuffled variants.
    Off,
    Identity,
    Random(&'a mut ChaCha8Rng),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub hidden: (usize, usize),
    pub channels: usize,
    pub bins: usize,
    pub append_freq_index: bool,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            hidden: variant.default_hidden(),
            channels: if variant == Variant::Pf { 1 } else { 3 },
            bins: 257,
            append_freq_index: variant.is_nsf(),
            seed: 0,
        }
    }

    pub fn with_hidden(mut self, hidden: (usize, usize)) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn with_bins(mut self, bins: usize) -> Self {
        self.bins = bins;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.hidden.0 == 0 || self.hidden.1 == 0 || self.bins < 2 || self.channels == 0 {
            return Err(Error::InvalidArgument(format!("invalid model config {self:?}")));
        }
        if self.variant == Variant::Pf && (self.channels != 1 || self.append_freq_index) {
            return Err(Error::InvalidArgument(
                "the post-filter takes one channel without a frequency feature".into(),
            ));
        }
        Ok(())
    }

    fn input_features(&self) -> usize {
        if self.variant == Variant::Pf {
            2 * self.bins
        } else {
            feature_count(self.channels, self.append_freq_index)
        }
    }

    fn output_features(&self) -> usize {
        if self.variant == Variant::Pf {
            2 * self.bins
        } else {
            2
        }
    }
}

/// Named trainable array.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Vec<Param>,
}

/// Graph handles of one forward pass.
pub struct ForwardPass {
    /// Compressed mask, (N × F × T × 2) with real and imaginary parts last.
    pub mask: Var,
    /// One leaf per entry of [`Model::params`].
    pub params: Vec<Var>,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor {
    Tensor::from_shape_simple_fn(IxDyn(shape), || rng.gen_range(-bound..=bound))
}

/// Parameter names and shapes in checkpoint order.
fn param_layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, usize)> {
    let (h1, h2) = cfg.hidden;
    let mut out = Vec::new();
    for (layer, input, h) in [(1, cfg.input_features(), h1), (2, 2 * h1, h2)] {
        for dir in ["fwd", "bwd"] {
            out.push((format!("lstm{layer}.{dir}.w"), vec![4 * h, input], input));
            out.push((format!("lstm{layer}.{dir}.r"), vec![4 * h, h], h));
            out.push((format!("lstm{layer}.{dir}.b"), vec![4 * h], h));
        }
    }
    out.push(("ff.w".into(), vec![2 * h2, cfg.output_features()], 2 * h2));
    out.push(("ff.b".into(), vec![cfg.output_features()], 2 * h2));
    out
}

/// Creates a model with weights uniform in ±1/sqrt(fan_in) and forget-gate
/// biases shifted by +1.
pub fn build_model(cfg: &ModelConfig) -> Result<Model> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let params = param_layout(cfg)
        .into_iter()
        .map(|(name, shape, fan_in)| {
            let mut value = uniform(&mut rng, &shape, 1.0 / (fan_in as f64).sqrt());
            if name.starts_with("lstm") && name.ends_with(".b") {
                let h = shape[0] / 4;
                value.slice_mut(ndarray::s![h..2 * h]).mapv_inplace(|v| v + 1.0);
            }
            Param { name, value }
        })
        .collect();
    Ok(Model {
        config: cfg.clone(),
        params,
    })
}

impl Model {
    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    /// Checks that the parameter set matches the configuration.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let layout = param_layout(&self.config);
        if layout.len() != self.params.len() {
            return Err(Error::ModelMismatch(format!(
                "{} parameters for a {} model with {} expected",
                self.params.len(),
                self.config.variant,
                layout.len()
            )));
        }
        for ((name, shape, _), p) in layout.iter().zip(&self.params) {
            if *name != p.name || shape.as_slice() != p.value.shape() {
                return Err(Error::ModelMismatch(format!(
                    "parameter {} {:?} does not match {name} {shape:?}",
                    p.name,
                    p.value.shape()
                )));
            }
        }
        Ok(())
    }

    fn check_input(&self, specs: &[ArrayView3<'_, Complex64>]) -> Result<()> {
        for s in specs {
            let (c, f, _) = s.dim();
            if c != self.config.channels || f != self.config.bins {
                return Err(Error::ModelMismatch(format!(
                    "{} model expects {} channels × {} bins, got {c} × {f}",
                    self.config.variant, self.config.channels, self.config.bins
                )));
            }
        }
        Ok(())
    }

    /// Records the forward pass for a batch of (C × F × T) spectrograms of
    /// equal shape.
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        specs: &[ArrayView3<'_, Complex64>],
        shuffle: Shuffle<'_>,
    ) -> Result<ForwardPass> {
        let params: Vec<Var> = self.params.iter().map(|p| g.param(p.value.clone())).collect();
        let mask = self.forward_with_params(g, &params, specs, shuffle)?;
        Ok(ForwardPass { mask, params })
    }

    /// Like [`Model::forward_graph`] with caller-provided parameter nodes in
    /// the order of [`Model::params`]; returns the mask node.
    pub fn forward_with_params(
        &self,
        g: &mut Graph,
        params: &[Var],
        specs: &[ArrayView3<'_, Complex64>],
        mut shuffle: Shuffle<'_>,
    ) -> Result<Var> {
        self.check_input(specs)?;
        if params.len() != self.params.len() {
            return Err(Error::ModelMismatch(format!(
                "{} parameter nodes for {} parameters",
                params.len(),
                self.params.len()
            )));
        }
        let cfg = &self.config;
        let schedule = cfg.variant.schedule();
        let input = arrange_batch(specs, schedule.layers[0], cfg.append_freq_index)?;
        let (n, f, t) = (input.samples, input.bins, input.frames);
        let mut x = g.constant(input.data.into_dyn());

        let layer = |g: &mut Graph, x: Var, l: usize| -> Result<Var> {
            let p = &params[6 * l..6 * l + 6];
            let fwd = g.lstm(x, p[0], p[1], p[2], false)?;
            let bwd = g.lstm(x, p[3], p[4], p[5], true)?;
            g.concat(&[fwd, bwd], 2)
        };

        let mut pending: Option<Arc<Vec<Vec<usize>>>> = None;
        for l in 0..2 {
            let wrap = match schedule.shuffle {
                ShuffleScope::None => false,
                ShuffleScope::AroundBoth => l == 0,
                ShuffleScope::PerLayer => true,
            };
            if wrap {
                if let Some(perms) = draw_permutations(g, x, &mut shuffle) {
                    x = g.permute_sequences(x, perms.clone())?;
                    pending = Some(perms);
                }
            }
            x = layer(g, x, l)?;
            let unwrap = match schedule.shuffle {
                ShuffleScope::None => false,
                ShuffleScope::AroundBoth => l == 1,
                ShuffleScope::PerLayer => true,
            };
            if unwrap {
                if let Some(perms) = pending.take() {
                    x = g.permute_sequences(x, Arc::new(inverse_permutations(&perms)))?;
                }
            }
            if l == 0 && schedule.layers[0] != schedule.layers[1] {
                x = rearrange_var(g, x, schedule.layers[0], schedule.layers[1], n, f, t)?;
            }
        }

        let (ff_w, ff_b) = (params[12], params[13]);
        let shape = g.value(x).shape().to_vec();
        let (b, len, feat) = (shape[0], shape[1], shape[2]);
        let flat = g.reshape(x, &[b * len, feat])?;
        let lin = g.matmul(flat, ff_w)?;
        let lin = g.add_row(lin, ff_b)?;
        let out = g.tanh(lin);
        let mask = match schedule.layers[1] {
            Arrangement::NarrowBand => g.reshape(out, &[n, f, t, 2])?,
            Arrangement::WideBand => {
                let m = g.reshape(out, &[n, t, f, 2])?;
                g.permute(m, &[0, 2, 1, 3])?
            }
            Arrangement::SpectralStack => {
                let m = g.reshape(out, &[n, t, 2, f])?;
                g.permute(m, &[0, 3, 1, 2])?
            }
        };
        Ok(mask)
    }

    /// Compressed masks for a batch, (N × F × T) each.
    pub fn predict(&self, specs: &[ArrayView3<'_, Complex64>], shuffle: Shuffle<'_>) -> Result<Vec<ComplexMask>> {
        let mut g = Graph::new();
        let pass = self.forward_graph(&mut g, specs, shuffle)?;
        let m = g.value(pass.mask);
        let (n, f, t) = (m.shape()[0], m.shape()[1], m.shape()[2]);
        Ok((0..n)
            .map(|s| {
                ComplexMask::compressed(Array2::from_shape_fn((f, t), |(k, i)| {
                    Complex64::new(m[[s, k, i, 0]], m[[s, k, i, 1]])
                }))
            })
            .collect())
    }

    /// Compressed mask for one spectrogram. Shuffled variants use
    /// permutations drawn from `shuffle_seed`.
    pub fn forward(&self, spec: &Spectrogram, shuffle_seed: u64) -> Result<ComplexMask> {
        let mut rng = rng_from_seed(shuffle_seed);
        let mut masks = self.predict(&[spec.data.view()], Shuffle::Random(&mut rng))?;
        Ok(masks.remove(0))
    }
}

fn draw_permutations(g: &Graph, x: Var, shuffle: &mut Shuffle<'_>) -> Option<Arc<Vec<Vec<usize>>>> {
    let shape = g.value(x).shape();
    let (b, l) = (shape[0], shape[1]);
    match shuffle {
        Shuffle::Off => None,
        Shuffle::Identity => Some(Arc::new(vec![(0..l).collect(); b])),
        Shuffle::Random(rng) => Some(Arc::new(random_permutations(b, l, *rng))),
    }
}

/// Graph version of the narrow-band/wide-band swap for N samples.
fn rearrange_var(
    g: &mut Graph,
    x: Var,
    from: Arrangement,
    to: Arrangement,
    n: usize,
    f: usize,
    t: usize,
) -> Result<Var> {
    let d = g.value(x).shape()[2];
    let (a, b) = match (from, to) {
        (Arrangement::WideBand, Arrangement::NarrowBand) => (t, f),
        (Arrangement::NarrowBand, Arrangement::WideBand) => (f, t),
        _ => return Err(Error::Arrangement(format!("no rearrangement from {from:?} to {to:?}"))),
    };
    let four = g.reshape(x, &[n, a, b, d])?;
    let swapped = g.permute(four, &[0, 2, 1, 3])?;
    g.reshape(swapped, &[n * b, a, d])
}
