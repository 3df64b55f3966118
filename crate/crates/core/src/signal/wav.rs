use std::io::{BufWriter, Write};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::signal::{Spectrogram, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavFormat {
    #[default]
    Float32,
    Pcm16,
}

fn wav_err(path: &Path) -> impl FnOnce(hound::Error) -> Error + '_ {
    move |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads PCM (8–32 bit) or float WAV into 64-bit samples in [-1, 1].
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path).map_err(wav_err(path))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err(path))?,
        SampleFormat::Int => {
            let scale = 1.0 / (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_err(path))?
        }
    };
    let frames = interleaved.len() / channels;
    let data = Array2::from_shape_fn((channels, frames), |(c, t)| interleaved[t * channels + c]);
    Ok(Waveform::new(data, spec.sample_rate))
}

pub fn write_wav(path: impl AsRef<Path>, wave: &Waveform, format: WavFormat) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: wave.num_channels() as u16,
        sample_rate: wave.sample_rate,
        bits_per_sample: match format {
            WavFormat::Float32 => 32,
            WavFormat::Pcm16 => 16,
        },
        sample_format: match format {
            WavFormat::Float32 => SampleFormat::Float,
            WavFormat::Pcm16 => SampleFormat::Int,
        },
    };
    let mut writer = WavWriter::create(path, spec).map_err(wav_err(path))?;
    for t in 0..wave.len() {
        for c in 0..wave.num_channels() {
            let x = wave.data[[c, t]];
            match format {
                WavFormat::Float32 => writer.write_sample(x as f32),
                WavFormat::Pcm16 => {
                    writer.write_sample((x * 32768.0).round().clamp(-32768.0, 32767.0) as i16)
                }
            }
            .map_err(wav_err(path))?;
        }
    }
    writer.finalize().map_err(wav_err(path))
}

/// Magnitude matrix of one channel as CSV: one row per frequency bin,
/// one column per frame.
pub fn write_magnitude_csv<W: Write>(spec: &Spectrogram, channel: usize, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    let mag = spec.magnitude(channel);
    let to_io = |e| Error::io("<csv>", e);
    for row in mag.rows() {
        let line = row
            .iter()
            .map(|v| format!("{v:.9e}"))
            .collect::<Vec<_>>()
            .join(",");
        writeln!(out, "{line}").map_err(to_io)?;
    }
    out.flush().map_err(to_io)
}
