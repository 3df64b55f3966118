use ndarray::Array2;
use realfft::RealFftPlanner;

use crate::acoustics::rir::{simulate_rir, Rir};
use crate::acoustics::scene::Scene;
use crate::error::{Error, Result};
use crate::signal::Waveform;

pub const SNR_CAP_DB: f64 = 100.0;

/// Mixture, separated stems and metadata of one simulated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedSample {
    /// Microphone signals, channels × samples.
    pub noisy: Waveform,
    /// Dry target delayed by its direct-path delay to channel 0.
    pub target_aligned: Waveform,
    /// Sum of reverberant interferers at every channel.
    pub noise: Waveform,
    pub snr_db: f64,
    pub scene: Option<Scene>,
}

impl RenderedSample {
    /// Reverberant target at the microphones: `noisy − noise`.
    pub fn reverberant_target(&self) -> Waveform {
        Waveform::new(&self.noisy.data - &self.noise.data, self.noisy.sample_rate)
    }

    pub fn len(&self) -> usize {
        self.noisy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noisy.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        self.noisy.sample_rate
    }
}

/// Linear convolution truncated to the length of `x`.
pub fn fft_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return vec![0.0; x.len()];
    }
    let n = (x.len() + h.len() - 1).next_power_of_two();
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut xa = fwd.make_input_vec();
    xa[..x.len()].copy_from_slice(x);
    let mut ha = fwd.make_input_vec();
    ha[..h.len()].copy_from_slice(h);
    let mut xs = fwd.make_output_vec();
    let mut hs = fwd.make_output_vec();
    fwd.process(&mut xa, &mut xs).expect("sizes from plan");
    fwd.process(&mut ha, &mut hs).expect("sizes from plan");
    for (a, b) in xs.iter_mut().zip(&hs) {
        *a *= b / n as f64;
    }
    let last = xs.len() - 1;
    xs[0].im = 0.0;
    xs[last].im = 0.0;
    let mut out = inv.make_output_vec();
    inv.process(&mut xs, &mut out).expect("sizes from plan");
    out.truncate(x.len());
    out
}

/// `10·log10(Σ speech² / Σ noise²)`, capped at ±100 dB.
pub fn measure_snr(speech: &[f64], noise: &[f64]) -> Result<f64> {
    if speech.len() != noise.len() {
        return Err(Error::LengthMismatch(format!(
            "speech has {} samples, noise {}",
            speech.len(),
            noise.len()
        )));
    }
    let es: f64 = speech.iter().map(|x| x * x).sum();
    let en: f64 = noise.iter().map(|x| x * x).sum();
    if en == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    if es == 0.0 {
        return Ok(-SNR_CAP_DB);
    }
    Ok((10.0 * (es / en).log10()).clamp(-SNR_CAP_DB, SNR_CAP_DB))
}

/// Convolves dry sources with precomputed RIRs (source 0 is the target) and
/// forms the mixture.
pub fn render_with_rir(
    rir: &Rir,
    target_dry: &[f64],
    interferer_dry: &[Vec<f64>],
) -> Result<RenderedSample> {
    if interferer_dry.len() + 1 != rir.num_sources() {
        return Err(Error::InvalidArgument(format!(
            "{} interferer signals for {} RIR sources",
            interferer_dry.len(),
            rir.num_sources()
        )));
    }
    let len = target_dry.len();
    if let Some(bad) = interferer_dry.iter().find(|x| x.len() != len) {
        return Err(Error::LengthMismatch(format!(
            "interferer has {} samples, target {len}",
            bad.len()
        )));
    }
    if target_dry.iter().all(|&x| x == 0.0) {
        return Err(Error::InvalidArgument("target signal has zero energy".into()));
    }
    let channels = rir.num_channels();
    let mut reverb = Array2::zeros((channels, len));
    let mut noise = Array2::zeros((channels, len));
    for c in 0..channels {
        let x = fft_convolve(target_dry, &rir.taps[0][c]);
        reverb.row_mut(c).assign(&ndarray::Array1::from(x));
        for (s, dry) in interferer_dry.iter().enumerate() {
            if dry.iter().all(|&v| v == 0.0) {
                continue;
            }
            let v = fft_convolve(dry, &rir.taps[s + 1][c]);
            for (acc, v) in noise.row_mut(c).iter_mut().zip(v) {
                *acc += v;
            }
        }
    }
    let delay = rir.direct_delay[0][0].min(len);
    let mut aligned = vec![0.0; len];
    aligned[delay..].copy_from_slice(&target_dry[..len - delay]);

    let snr_db = measure_snr(
        reverb.row(0).as_slice().expect("row-major"),
        noise.row(0).as_slice().expect("row-major"),
    )?;
    let fs = rir.sample_rate;
    Ok(RenderedSample {
        noisy: Waveform::new(&reverb + &noise, fs),
        target_aligned: Waveform::mono(aligned, fs),
        noise: Waveform::new(noise, fs),
        snr_db,
        scene: None,
    })
}

/// Renders the six-speaker mixture of a scene.
pub fn render_scene(
    scene: &Scene,
    target_dry: &[f64],
    interferer_dry: &[Vec<f64>],
) -> Result<RenderedSample> {
    let rir = simulate_rir(scene, None)?;
    let mut sample = render_with_rir(&rir, target_dry, interferer_dry)?;
    sample.scene = Some(scene.clone());
    Ok(sample)
}
