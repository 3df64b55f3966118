use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{s, Array2, Array3, ArrayView2};
use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Waveform;

/// Framing parameters shared by analysis and synthesis.
///
/// The transform uses a square-root periodic Hann window for both analysis
/// and synthesis at 50% overlap, so the squared windows sum to one and
/// overlap-add reconstructs the input exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftParams {
    pub window_length: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub sample_rate: u32,
}

impl Default for StftParams {
    /// 32 ms window, 16 ms hop at 16 kHz.
    fn default() -> Self {
        Self::new(512, 16_000)
    }
}

impl StftParams {
    /// Parameters for a given (even) window length; hop is half the window.
    pub fn new(window_length: usize, sample_rate: u32) -> Self {
        assert!(
            window_length >= 2 && window_length % 2 == 0,
            "window length must be even"
        );
        Self {
            window_length,
            hop: window_length / 2,
            fft_size: window_length,
            sample_rate,
        }
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frames needed so every input sample falls inside exactly two frames.
    pub fn num_frames(&self, signal_len: usize) -> usize {
        (signal_len.max(1) - 1) / self.hop + 2
    }

    /// Length of the zero-padded signal the frames tile.
    pub fn padded_len(&self, num_frames: usize) -> usize {
        (num_frames - 1) * self.hop + self.window_length
    }

    pub fn window(&self) -> Vec<f64> {
        let n = self.window_length as f64;
        (0..self.window_length)
            .map(|i| (0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos()).sqrt())
            .collect()
    }

    fn check_invariants(&self) -> Result<()> {
        if self.hop * 2 != self.window_length || self.fft_size != self.window_length {
            return Err(Error::ParamsMismatch(format!(
                "unsupported framing {self:?}: need hop = window/2 and fft = window"
            )));
        }
        Ok(())
    }
}

/// Complex STFT coefficients indexed (channel, bin, frame).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub data: Array3<Complex64>,
    pub params: StftParams,
    /// Length of the time-domain signal the frames were computed from.
    pub signal_len: usize,
}

impl Spectrogram {
    pub fn zeros(channels: usize, frames: usize, params: StftParams, signal_len: usize) -> Self {
        Self {
            data: Array3::zeros((channels, params.num_bins(), frames)),
            params,
            signal_len,
        }
    }

    pub fn from_mono(data: Array2<Complex64>, params: StftParams, signal_len: usize) -> Self {
        let (f, t) = data.dim();
        Self {
            data: data.into_shape_with_order((1, f, t)).expect("contiguous"),
            params,
            signal_len,
        }
    }

    pub fn num_channels(&self) -> usize {
        self.data.dim().0
    }

    pub fn num_bins(&self) -> usize {
        self.data.dim().1
    }

    pub fn num_frames(&self) -> usize {
        self.data.dim().2
    }

    pub fn channel(&self, c: usize) -> ArrayView2<'_, Complex64> {
        self.data.slice(s![c, .., ..])
    }

    /// Single-channel spectrogram holding channel `c`.
    pub fn select_channel(&self, c: usize) -> Spectrogram {
        Spectrogram::from_mono(self.channel(c).to_owned(), self.params, self.signal_len)
    }

    pub fn magnitude(&self, c: usize) -> Array2<f64> {
        self.channel(c).mapv(|z| z.norm())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Cached FFT plans and window for one parameter set.
pub struct StftPlan {
    params: StftParams,
    window: Vec<f64>,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

impl StftPlan {
    pub fn new(params: StftParams) -> Result<Self> {
        params.check_invariants()?;
        let mut planner = RealFftPlanner::<f64>::new();
        Ok(Self {
            params,
            window: params.window(),
            forward: planner.plan_fft_forward(params.fft_size),
            inverse: planner.plan_fft_inverse(params.fft_size),
        })
    }

    pub fn params(&self) -> &StftParams {
        &self.params
    }

    /// Analysis of one channel; returns a (bins × frames) array.
    pub fn analyze(&self, signal: &[f64]) -> Result<Array2<Complex64>> {
        let p = &self.params;
        if signal.len() < p.window_length {
            return Err(Error::InputTooShort {
                len: signal.len(),
                needed: p.window_length,
            });
        }
        let frames = p.num_frames(signal.len());
        let mut padded = vec![0.0; p.padded_len(frames)];
        padded[p.hop..p.hop + signal.len()].copy_from_slice(signal);

        let mut out = Array2::zeros((p.num_bins(), frames));
        let mut buf = self.forward.make_input_vec();
        let mut spec = self.forward.make_output_vec();
        for i in 0..frames {
            let seg = &padded[i * p.hop..i * p.hop + p.window_length];
            for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&self.window) {
                *b = x * w;
            }
            self.forward
                .process(&mut buf, &mut spec)
                .expect("buffer sizes from plan");
            out.column_mut(i).assign(&ndarray::ArrayView1::from(&spec[..]));
        }
        Ok(out)
    }

    /// Overlap-add synthesis of one (bins × frames) channel, trimmed to `len`.
    pub fn synthesize(&self, spec: ArrayView2<'_, Complex64>, len: usize) -> Vec<f64> {
        let p = &self.params;
        let (_, frames) = spec.dim();
        let total = p.padded_len(frames).max(len + p.hop);
        let mut acc = vec![0.0; total];
        let mut bins = self.inverse.make_input_vec();
        let mut buf = self.inverse.make_output_vec();
        let scale = 1.0 / p.fft_size as f64;
        let last = bins.len() - 1;
        for i in 0..frames {
            for (b, z) in bins.iter_mut().zip(spec.column(i)) {
                *b = *z;
            }
            // DC and Nyquist bins of a real frame carry no imaginary part.
            bins[0].im = 0.0;
            bins[last].im = 0.0;
            self.inverse
                .process(&mut bins, &mut buf)
                .expect("buffer sizes from plan");
            let start = i * p.hop;
            for (n, (&x, &w)) in buf.iter().zip(&self.window).enumerate() {
                acc[start + n] += x * w * scale;
            }
        }
        acc[p.hop..p.hop + len].to_vec()
    }

    /// Adjoint of [`StftPlan::synthesize`] with respect to the real and
    /// imaginary parts of the input coefficients.
    pub fn synthesize_adjoint(&self, grad: &[f64], frames: usize) -> (Array2<f64>, Array2<f64>) {
        let p = &self.params;
        let mut padded = vec![0.0; p.padded_len(frames).max(grad.len() + p.hop)];
        padded[p.hop..p.hop + grad.len()].copy_from_slice(grad);
        let bins = p.num_bins();
        let mut d_re = Array2::zeros((bins, frames));
        let mut d_im = Array2::zeros((bins, frames));
        let mut buf = self.forward.make_input_vec();
        let mut spec = self.forward.make_output_vec();
        let n = p.fft_size as f64;
        for i in 0..frames {
            let seg = &padded[i * p.hop..i * p.hop + p.window_length];
            for ((b, &g), &w) in buf.iter_mut().zip(seg).zip(&self.window) {
                *b = g * w;
            }
            self.forward
                .process(&mut buf, &mut spec)
                .expect("buffer sizes from plan");
            for (k, z) in spec.iter().enumerate() {
                let edge = k == 0 || k == bins - 1;
                let c = if edge { 1.0 } else { 2.0 } / n;
                d_re[[k, i]] = c * z.re;
                d_im[[k, i]] = if edge { 0.0 } else { c * z.im };
            }
        }
        (d_re, d_im)
    }
}

/// Multichannel STFT with edge padding of one hop on both sides.
pub fn stft(wave: &Waveform, params: &StftParams) -> Result<Spectrogram> {
    if wave.sample_rate != params.sample_rate {
        return Err(Error::SampleRate {
            expected: params.sample_rate,
            actual: wave.sample_rate,
        });
    }
    let plan = StftPlan::new(*params)?;
    let (channels, len) = wave.data.dim();
    if len < params.window_length {
        return Err(Error::InputTooShort {
            len,
            needed: params.window_length,
        });
    }
    let mut spec = Spectrogram::zeros(channels, params.num_frames(len), *params, len);
    for c in 0..channels {
        let x = wave.data.row(c).to_vec();
        spec.data.slice_mut(s![c, .., ..]).assign(&plan.analyze(&x)?);
    }
    Ok(spec)
}

/// Inverse of [`stft`]; the output has the length of the analysed signal.
pub fn istft(spec: &Spectrogram, params: &StftParams) -> Result<Waveform> {
    if spec.params != *params {
        return Err(Error::ParamsMismatch(format!(
            "spectrogram computed with {:?}, synthesis requested with {:?}",
            spec.params, params
        )));
    }
    if spec.num_bins() != params.num_bins() {
        return Err(Error::shape(
            "istft bins",
            &[params.num_bins()],
            &[spec.num_bins()],
        ));
    }
    let plan = StftPlan::new(*params)?;
    let channels = spec.num_channels();
    let mut data = Array2::zeros((channels, spec.signal_len));
    for c in 0..channels {
        let x = plan.synthesize(spec.channel(c), spec.signal_len);
        data.row_mut(c).assign(&ndarray::Array1::from(x));
    }
    Ok(Waveform {
        data,
        sample_rate: params.sample_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mono(x: Vec<f64>) -> Waveform {
        Waveform::mono(x, 16_000)
    }

    // Naive one-sided DFT of one frame.
    fn dft(frame: &[f64]) -> Vec<Complex64> {
        let n = frame.len();
        (0..=n / 2)
            .map(|k| {
                frame
                    .iter()
                    .enumerate()
                    .map(|(t, &x)| {
                        let ph = -2.0 * PI * (k * t) as f64 / n as f64;
                        Complex64::new(x * ph.cos(), x * ph.sin())
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn default_shape() {
        let p = StftParams::default();
        assert_eq!(p.num_bins(), 257);
        assert_eq!(p.hop, 256);
        let spec = stft(&mono(vec![0.0; 16_000]), &p).unwrap();
        assert_eq!(spec.num_bins(), 257);
        assert!(spec.data.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn window_squares_sum_to_one() {
        let p = StftParams::default();
        let w = p.window();
        for n in 0..p.hop {
            let s = w[n] * w[n] + w[n + p.hop] * w[n + p.hop];
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn too_short() {
        let err = stft(&mono(vec![0.0; 100]), &StftParams::default()).unwrap_err();
        assert!(matches!(err, Error::InputTooShort { .. }));
        assert!(err.to_string().contains("input too short"));
    }

    #[test]
    fn cosine_peaks_at_bin_32() {
        let p = StftParams::default();
        let x: Vec<f64> = (0..16_000)
            .map(|t| (2.0 * PI * 1000.0 * t as f64 / 16_000.0).cos())
            .collect();
        let spec = stft(&mono(x.clone()), &p).unwrap();
        // Interior frames: compare with a direct DFT of the windowed frame.
        let w = p.window();
        for i in 1..spec.num_frames() - 2 {
            let start = i * p.hop - p.hop;
            let frame: Vec<f64> = (0..512).map(|n| x[start + n] * w[n]).collect();
            let oracle = dft(&frame);
            let mags = spec.magnitude(0);
            let col = mags.column(i);
            let peak = col
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(peak, 32);
            for k in 0..257 {
                assert!((spec.data[[0, k, i]] - oracle[k]).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn single_frame_dc_synthesis() {
        let p = StftParams::new(16, 16_000);
        let frames = 6;
        let len = p.padded_len(frames) - 2 * p.hop;
        let mut spec = Spectrogram::zeros(1, frames, p, len);
        spec.data[[0, 0, 2]] = Complex64::new(1.0, 0.0);
        let y = istft(&spec, &p).unwrap();
        // Direct overlap-add oracle: frame 2 holds the constant 1/N, windowed.
        let w = p.window();
        let mut oracle = vec![0.0; p.padded_len(frames)];
        for n in 0..p.window_length {
            oracle[2 * p.hop + n] += w[n] / p.fft_size as f64;
        }
        for (t, v) in y.data.row(0).iter().enumerate() {
            assert!((v - oracle[t + p.hop]).abs() < 1e-15);
        }
    }

    #[test]
    fn round_trip_white_noise_3s() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..48_000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = StftParams::default();
        let spec = stft(&mono(x.clone()), &p).unwrap();
        assert_eq!(spec.num_frames(), 189);
        let y = istft(&spec, &p).unwrap();
        let err: f64 = x
            .iter()
            .zip(y.data.row(0))
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let norm: f64 = x.iter().map(|a| a * a).sum();
        assert!((err / norm).sqrt() < 1e-6);
    }

    #[test]
    fn zero_spectrogram_synthesizes_zero() {
        let p = StftParams::default();
        let spec = Spectrogram::zeros(2, 10, p, 2000);
        let y = istft(&spec, &p).unwrap();
        assert_eq!(y.data.dim(), (2, 2000));
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn params_mismatch() {
        let p = StftParams::default();
        let spec = Spectrogram::zeros(1, 10, p, 2000);
        let err = istft(&spec, &StftParams::new(256, 16_000)).unwrap_err();
        assert!(matches!(err, Error::ParamsMismatch(_)));
    }

    #[test]
    fn parseval_per_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..8_000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = StftParams::default();
        let spec = stft(&mono(x.clone()), &p).unwrap();
        let w = p.window();
        let frames = spec.num_frames();
        let mut padded = vec![0.0; p.padded_len(frames)];
        padded[p.hop..p.hop + x.len()].copy_from_slice(&x);
        let mut time_energy = 0.0;
        for i in 0..frames {
            for n in 0..p.window_length {
                time_energy += (padded[i * p.hop + n] * w[n]).powi(2);
            }
        }
        let mut spec_energy = 0.0;
        for i in 0..frames {
            for k in 0..p.num_bins() {
                let e = spec.data[[0, k, i]].norm_sqr();
                let weight = if k == 0 || k == p.num_bins() - 1 { 1.0 } else { 2.0 };
                spec_energy += weight * e;
            }
        }
        spec_energy /= p.fft_size as f64;
        assert!((spec_energy - time_energy).abs() / time_energy < 0.01);
    }

    #[test]
    fn adjoint_identity() {
        // <synthesize(X), g> == <X, synthesize_adjoint(g)> over the real parameterisation.
        let p = StftParams::new(16, 16_000);
        let plan = StftPlan::new(p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let frames = 7;
        let len = 40;
        let x = Array2::from_shape_fn((p.num_bins(), frames), |(k, _)| {
            let im = if k == 0 || k == p.num_bins() - 1 { 0.0 } else { rng.gen_range(-1.0..1.0) };
            Complex64::new(rng.gen_range(-1.0..1.0), im)
        });
        let g: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = plan.synthesize(x.view(), len);
        let lhs: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
        let (dr, di) = plan.synthesize_adjoint(&g, frames);
        let rhs: f64 = x
            .indexed_iter()
            .map(|((k, i), z)| z.re * dr[[k, i]] + z.im * di[[k, i]])
            .sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
