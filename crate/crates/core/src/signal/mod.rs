//! STFT analysis/synthesis, complex ratio masks and audio file I/O.

mod mask;
mod stft;
mod wav;

pub use mask::{
    apply_mask, atanh_clipped, compress_mask, uncompress_mask, ComplexMask, MaskForm,
    ATANH_CLIP_EPS,
};
pub use stft::{istft, stft, Spectrogram, StftParams, StftPlan};
pub use wav::{read_wav, write_magnitude_csv, write_wav, WavFormat};

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

/// Time-domain samples, channels × samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub data: Array2<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(data: Array2<f64>, sample_rate: u32) -> Self {
        Self { data, sample_rate }
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Self {
        let n = samples.len();
        Self {
            data: Array2::from_shape_vec((1, n), samples).expect("1 × n"),
            sample_rate,
        }
    }

    pub fn zeros(channels: usize, len: usize, sample_rate: u32) -> Self {
        Self::new(Array2::zeros((channels, len)), sample_rate)
    }

    pub fn num_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    pub fn channel(&self, c: usize) -> ArrayView1<'_, f64> {
        self.data.row(c)
    }

    pub fn channel_vec(&self, c: usize) -> Vec<f64> {
        self.data.row(c).to_vec()
    }

    pub fn select_channel(&self, c: usize) -> Waveform {
        Waveform::mono(self.channel_vec(c), self.sample_rate)
    }

    pub fn duration_seconds(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    /// Samples `[start, start + len)` of every channel.
    pub fn segment(&self, start: usize, len: usize) -> Result<Waveform> {
        if start + len > self.len() {
            return Err(Error::LengthMismatch(format!(
                "segment {start}..{} exceeds {} samples",
                start + len,
                self.len()
            )));
        }
        Ok(Waveform::new(
            self.data.slice(ndarray::s![.., start..start + len]).to_owned(),
            self.sample_rate,
        ))
    }

    /// Cyclic repetition up to at least `len` samples.
    pub fn tiled(&self, len: usize) -> Waveform {
        if self.len() >= len || self.is_empty() {
            return self.clone();
        }
        let n = self.len();
        let data = Array2::from_shape_fn((self.num_channels(), len), |(c, t)| self.data[[c, t % n]]);
        Waveform::new(data, self.sample_rate)
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }
}
