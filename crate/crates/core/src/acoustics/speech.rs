//! Synthetic speech stand-ins: amplitude-modulated, formant-filtered noise.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::seed::rng_from_seed;

/// RMS level of generated utterances.
pub const STANDIN_RMS: f64 = 0.05;

/// Two-pole resonator with unit peak gain, coefficients from centre
/// frequency and bandwidth.
struct Resonator {
    a1: f64,
    a2: f64,
    gain: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(freq: f64, bandwidth: f64, fs: f64) -> Self {
        let r = (-PI * bandwidth / fs).exp();
        let theta = 2.0 * PI * freq / fs;
        Self {
            a1: 2.0 * r * theta.cos(),
            a2: -r * r,
            gain: 1.0 - r,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn tick(&mut self, x: f64) -> f64 {
        let y = self.gain * x + self.a1 * self.y1 + self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Speech-like noise: syllable bursts of 80–300 ms separated by short
/// pauses, each shaped by two formant resonators over a voiced pulse train
/// mixed with noise.
pub fn synthetic_utterance(seed: u64, seconds: f64, sample_rate: u32) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let fs = sample_rate as f64;
    let len = (seconds * fs).round() as usize;
    let mut out = vec![0.0; len];
    let pitch = rng.gen_range(90.0..240.0);
    let mut t = (rng.gen_range(0.0..0.15) * fs) as usize;
    let mut phase = 0.0;
    while t < len {
        let dur = (rng.gen_range(0.08..0.30) * fs) as usize;
        let f1 = rng.gen_range(300.0..900.0);
        let f2 = rng.gen_range(900.0..2800.0);
        let voicing = rng.gen_range(0.3..0.9);
        let mut r1 = Resonator::new(f1, 120.0, fs);
        let mut r2 = Resonator::new(f2, 200.0, fs);
        let level = rng.gen_range(0.4..1.0);
        let f0 = pitch * rng.gen_range(0.85..1.15);
        for n in 0..dur.min(len - t) {
            let env = (PI * n as f64 / dur as f64).sin().powi(2);
            phase += f0 / fs;
            let pulse = if phase >= 1.0 {
                phase -= 1.0;
                1.0
            } else {
                0.0
            };
            let noise: f64 = StandardNormal.sample(&mut rng);
            let excitation = voicing * pulse * 8.0 + (1.0 - voicing) * noise;
            let y = r1.tick(excitation) + 0.6 * r2.tick(excitation);
            out[t + n] = level * env * y;
        }
        t += dur + (rng.gen_range(0.03..0.15) * fs) as usize;
    }
    normalize_rms(&mut out, STANDIN_RMS);
    out
}

/// Zero-mean white Gaussian noise with unit variance.
pub fn white_noise(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

pub fn normalize_rms(x: &mut [f64], rms: f64) {
    let e = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    if e > 0.0 {
        x.iter_mut().for_each(|v| *v *= rms / e);
    }
}
