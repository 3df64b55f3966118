use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acoustics::scene::{distance, inside_room, Point, Scene};
use crate::error::{Error, Result};

pub const SPEED_OF_SOUND: f64 = 343.0;
/// 24·ln(10)/c for c = 343 m/s.
pub const SABINE_CONSTANT: f64 = 0.1611;
pub const FRACTIONAL_DELAY_TAPS: usize = 81;

/// How the uniform wall absorption is derived from the requested T60.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AbsorptionModel {
    /// α = 0.1611·V / (S·T60)
    Sabine,
    /// α = 1 − exp(−0.1611·V / (S·T60))
    Eyring,
    /// α solved numerically so the image-source energy decay of the room
    /// reaches the requested T60 under [`schroeder_t60`]. Specular shoebox
    /// decays are not diffuse, so the closed forms overshoot T60.
    #[default]
    Calibrated,
}

impl AbsorptionModel {
    /// Closed-form absorption; `Calibrated` falls back to Sabine here.
    pub fn absorption(self, volume: f64, surface: f64, t60: f64) -> f64 {
        let x = SABINE_CONSTANT * volume / (surface * t60);
        match self {
            AbsorptionModel::Sabine | AbsorptionModel::Calibrated => x.min(1.0),
            AbsorptionModel::Eyring => 1.0 - (-x).exp(),
        }
    }
}

/// Options for the image-source simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RirConfig {
    pub sample_rate: u32,
    /// Reflection order cap; `None` keeps every image whose path is at most c·T60.
    pub max_order: Option<usize>,
    /// Overrides the absorption derived from T60.
    pub absorption: Option<f64>,
    pub model: AbsorptionModel,
    /// Removes the low-frequency build-up of the all-positive image sum with
    /// the 100 Hz high-pass of Allen and Berkley. Skipped for anechoic rooms.
    pub high_pass: bool,
}

impl Default for RirConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            max_order: None,
            absorption: None,
            model: AbsorptionModel::default(),
            high_pass: true,
        }
    }
}

/// Impulse responses indexed `[source][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub taps: Vec<Vec<Vec<f64>>>,
    pub sample_rate: u32,
    pub direct_delay: Vec<Vec<usize>>,
}

impl Rir {
    pub fn num_sources(&self) -> usize {
        self.taps.len()
    }

    pub fn num_channels(&self) -> usize {
        self.taps.first().map_or(0, Vec::len)
    }
}

/// Shoebox room description independent of the sampling recipe.
#[derive(Debug, Clone, PartialEq)]
pub struct Shoebox {
    pub size: Point,
    pub t60: f64,
}

impl Shoebox {
    pub fn volume(&self) -> f64 {
        self.size.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [w, l, h] = self.size;
        2.0 * (w * l + w * h + l * h)
    }
}

/// Hann-windowed sinc centred at `frac` ∈ [0, 1) after the middle tap.
fn fractional_delay_kernel(frac: f64, window: &[f64], out: &mut [f64]) {
    let half = (FRACTIONAL_DELAY_TAPS / 2) as i64;
    if frac == 0.0 {
        out.iter_mut().for_each(|v| *v = 0.0);
        out[half as usize] = window[half as usize];
        return;
    }
    // sin(π(m − f)) = −(−1)^m sin(πf) for integer m
    let s = (PI * frac).sin();
    for (j, (o, &w)) in out.iter_mut().zip(window).enumerate() {
        let m = j as i64 - half;
        let sign = if m % 2 == 0 { -1.0 } else { 1.0 };
        *o = w * sign * s / (PI * (m as f64 - frac));
    }
}

/// Kernels precomputed on a grid of fractional delays.
struct KernelTable {
    rows: Vec<f64>,
}

impl KernelTable {
    const STEPS: usize = 1024;

    fn new() -> Self {
        let window = hann_window(FRACTIONAL_DELAY_TAPS);
        let mut rows = vec![0.0; Self::STEPS * FRACTIONAL_DELAY_TAPS];
        for (r, row) in rows.chunks_mut(FRACTIONAL_DELAY_TAPS).enumerate() {
            fractional_delay_kernel(r as f64 / Self::STEPS as f64, &window, row);
        }
        Self { rows }
    }

    /// Integer part of `delay` and the kernel for its nearest grid fraction.
    fn lookup(&self, delay: f64) -> (i64, &[f64]) {
        let q = (delay * Self::STEPS as f64).round() as i64;
        let n0 = q.div_euclid(Self::STEPS as i64);
        let r = q.rem_euclid(Self::STEPS as i64) as usize;
        (n0, &self.rows[r * FRACTIONAL_DELAY_TAPS..(r + 1) * FRACTIONAL_DELAY_TAPS])
    }
}

fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| 0.5 - 0.5 * (2.0 * PI * j as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Images of `src` along one axis: (coordinate, reflection count) pairs
/// whose |coordinate − mic| stays within `reach`.
fn axis_images(src: f64, mic: f64, size: f64, reach: f64) -> Vec<(f64, usize)> {
    let n_max = (reach / (2.0 * size)).ceil() as i64 + 1;
    let mut out = Vec::new();
    for n in -n_max..=n_max {
        for q in 0..=1i64 {
            let x = (1 - 2 * q) as f64 * src + 2.0 * n as f64 * size;
            if (x - mic).abs() <= reach {
                out.push((x, ((n - q).abs() + n.abs()) as usize));
            }
        }
    }
    out
}

/// Calls `f(distance, order)` for every image of `src` within `reach` of `mic`.
fn for_each_image(
    room: &Shoebox,
    src: &Point,
    mic: &Point,
    reach: f64,
    max_order: Option<usize>,
    mut f: impl FnMut(f64, usize),
) {
    let xs = axis_images(src[0], mic[0], room.size[0], reach);
    let ys = axis_images(src[1], mic[1], room.size[1], reach);
    let zs = axis_images(src[2], mic[2], room.size[2], reach);
    let reach2 = reach * reach;
    for &(x, ox) in &xs {
        let dx2 = (x - mic[0]).powi(2);
        for &(y, oy) in &ys {
            let dxy2 = dx2 + (y - mic[1]).powi(2);
            if dxy2 > reach2 {
                continue;
            }
            for &(z, oz) in &zs {
                let order = ox + oy + oz;
                if max_order.is_some_and(|m| order > m) {
                    continue;
                }
                let d2 = dxy2 + (z - mic[2]).powi(2);
                if d2 <= reach2 {
                    f(d2.sqrt(), order);
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn single_rir(
    room: &Shoebox,
    src: &Point,
    mic: &Point,
    beta: f64,
    cfg: &RirConfig,
    len: usize,
    reach: f64,
    kernels: &KernelTable,
) -> Vec<f64> {
    let fs = cfg.sample_rate as f64;
    let half = (FRACTIONAL_DELAY_TAPS / 2) as i64;
    let mut h = vec![0.0; len];
    let max_order = if beta == 0.0 { Some(0) } else { cfg.max_order };
    for_each_image(room, src, mic, reach, max_order, |d, order| {
        let gain = if order == 0 { 1.0 } else { beta.powi(order as i32) };
        let amp = gain / (4.0 * PI * d.max(1e-3));
        let delay = d / SPEED_OF_SOUND * fs;
        let (n0, kernel) = kernels.lookup(delay);
        let start = n0 - half;
        if start >= 0 && start as usize + FRACTIONAL_DELAY_TAPS <= len {
            let dst = &mut h[start as usize..start as usize + FRACTIONAL_DELAY_TAPS];
            for (o, &k) in dst.iter_mut().zip(kernel) {
                *o += amp * k;
            }
        } else {
            for (j, &k) in kernel.iter().enumerate() {
                let idx = start + j as i64;
                if idx >= 0 && (idx as usize) < len {
                    h[idx as usize] += amp * k;
                }
            }
        }
    });
    if cfg.high_pass && beta > 0.0 {
        allen_berkley_high_pass(&mut h, fs);
    }
    h
}

/// In-place 100 Hz high-pass used by the original image-source method.
pub fn allen_berkley_high_pass(h: &mut [f64], sample_rate: f64) {
    let w = 2.0 * PI * 100.0 / sample_rate;
    let r1 = (-w).exp();
    let b1 = 2.0 * r1 * w.cos();
    let b2 = -r1 * r1;
    let a1 = -(1.0 + r1);
    let mut y = [0.0f64; 3];
    for v in h.iter_mut() {
        y[2] = y[1];
        y[1] = y[0];
        y[0] = b1 * y[1] + b2 * y[2] + *v;
        *v = y[0] + a1 * y[1] + r1 * y[2];
    }
}

/// Solves for the absorption whose image-source energy decay, averaged over
/// all sources at `mic` with direct paths removed, has the room's T60.
fn calibrate_absorption(room: &Shoebox, sources: &[Point], mic: &Point, sample_rate: u32) -> f64 {
    let fs = sample_rate as f64;
    let reach = SPEED_OF_SOUND * room.t60;
    let len = (room.t60 * fs).ceil() as usize + 1;
    // Energy arrivals grouped by reflection order: hist[order][sample].
    let mut hist: Vec<Vec<f64>> = Vec::new();
    for src in sources {
        for_each_image(room, src, mic, reach, None, |d, order| {
            if order == 0 {
                return;
            }
            if hist.len() <= order {
                hist.resize_with(order + 1, || vec![0.0; len]);
            }
            let idx = ((d / SPEED_OF_SOUND * fs).round() as usize).min(len - 1);
            hist[order][idx] += 1.0 / (d * d);
        });
    }
    let decay_t60 = |alpha: f64| {
        let ln = (1.0 - alpha).ln();
        let mut energy = vec![0.0; len];
        for (order, row) in hist.iter().enumerate().skip(1) {
            let g = (order as f64 * ln).exp();
            for (e, v) in energy.iter_mut().zip(row) {
                *e += g * v;
            }
        }
        schroeder_t60_from_energy(&energy, sample_rate)
    };
    let sabine = AbsorptionModel::Sabine.absorption(room.volume(), room.surface(), room.t60);
    let (mut lo, mut hi) = (1e-4, 0.9999);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        match decay_t60(mid) {
            Some(t) if t > room.t60 => lo = mid,
            Some(_) => hi = mid,
            None => return sabine,
        }
    }
    0.5 * (lo + hi)
}

/// Image-source simulation of a shoebox room for arbitrary sources and
/// microphones.
///
/// Each image contributes `(1−α)^(order/2) / (4π·dist)` at the fractional
/// delay `dist/c·fs`, rendered with an 81-tap Hann-windowed sinc.
pub fn image_source_rir(
    room: &Shoebox,
    sources: &[Point],
    mics: &[Point],
    cfg: &RirConfig,
) -> Result<Rir> {
    for (index, p) in sources.iter().enumerate() {
        if !inside_room(&room.size, p, 0.0) {
            return Err(Error::SourceOutsideRoom {
                index,
                position: *p,
                room: room.size,
            });
        }
    }
    let fs = cfg.sample_rate as f64;
    let alpha = match (cfg.absorption, cfg.model) {
        (Some(a), _) => a,
        (None, AbsorptionModel::Calibrated) if !mics.is_empty() => {
            calibrate_absorption(room, sources, &mics[0], cfg.sample_rate)
        }
        (None, model) => model.absorption(room.volume(), room.surface(), room.t60),
    }
    .clamp(0.0, 1.0);
    let beta = (1.0 - alpha).sqrt();

    let t60_len = (room.t60 * fs).ceil() as usize;
    let max_direct = sources
        .iter()
        .flat_map(|s| mics.iter().map(move |m| distance(s, m)))
        .fold(0.0, f64::max);
    // With an explicit order cap the longest path is bounded by the room
    // diagonal times (order + 1).
    let reach = match cfg.max_order {
        None => (SPEED_OF_SOUND * room.t60).max(max_direct),
        Some(order) => {
            let diag = room.size.iter().map(|v| v * v).sum::<f64>().sqrt();
            max_direct + 2.0 * diag * (order as f64 + 1.0)
        }
    };
    let len = t60_len.max((reach / SPEED_OF_SOUND * fs).ceil() as usize) + FRACTIONAL_DELAY_TAPS;
    let kernels = KernelTable::new();

    let pairs: Vec<(usize, usize)> = (0..sources.len())
        .flat_map(|s| (0..mics.len()).map(move |m| (s, m)))
        .collect();
    let responses: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&(s, m)| single_rir(room, &sources[s], &mics[m], beta, cfg, len, reach, &kernels))
        .collect();

    let mut taps = vec![Vec::with_capacity(mics.len()); sources.len()];
    for ((s, _), h) in pairs.iter().zip(responses) {
        taps[*s].push(h);
    }
    let direct_delay = sources
        .iter()
        .map(|s| {
            mics.iter()
                .map(|m| (distance(s, m) / SPEED_OF_SOUND * fs).round() as usize)
                .collect()
        })
        .collect();
    Ok(Rir {
        taps,
        sample_rate: cfg.sample_rate,
        direct_delay,
    })
}

/// RIRs for every source of a scene (target first) at 16 kHz.
pub fn simulate_rir(scene: &Scene, max_order: Option<usize>) -> Result<Rir> {
    simulate_rir_with(
        scene,
        &RirConfig {
            max_order,
            ..RirConfig::default()
        },
    )
}

pub fn simulate_rir_with(scene: &Scene, cfg: &RirConfig) -> Result<Rir> {
    let room = Shoebox {
        size: scene.room,
        t60: scene.t60,
    };
    image_source_rir(&room, &scene.sources(), &scene.mic_positions, cfg)
}

/// Reverberation time from Schroeder backward integration, extrapolated
/// from a linear fit of the decay curve between `-5` and `-25` dB.
pub fn schroeder_t60(h: &[f64], sample_rate: u32) -> Option<f64> {
    let energy: Vec<f64> = h.iter().map(|x| x * x).collect();
    schroeder_t60_from_energy(&energy, sample_rate)
}

/// [`schroeder_t60`] on squared taps.
pub fn schroeder_t60_from_energy(energy: &[f64], sample_rate: u32) -> Option<f64> {
    let mut edc = vec![0.0; energy.len()];
    let mut acc = 0.0;
    for (e, x) in edc.iter_mut().zip(energy).rev() {
        acc += x;
        *e = acc;
    }
    if acc <= 0.0 {
        return None;
    }
    let (hi, lo) = (-5.0, -25.0);
    let pts: Vec<(f64, f64)> = edc
        .iter()
        .enumerate()
        .map(|(n, &e)| (n as f64 / sample_rate as f64, 10.0 * (e / acc).log10()))
        .filter(|&(_, db)| db <= hi && db >= lo)
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mt, md) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), &(t, d)| (a + t / n, b + d / n));
    let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), &(t, d)| {
        (a + (t - mt) * (d - md), b + (t - mt).powi(2))
    });
    let slope = num / den;
    (slope < 0.0).then(|| -60.0 / slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn anechoic(src: Point, mic: Point) -> Vec<f64> {
        let room = Shoebox {
            size: [10.0, 10.0, 5.0],
            t60: 0.3,
        };
        let cfg = RirConfig {
            absorption: Some(1.0),
            ..RirConfig::default()
        };
        image_source_rir(&room, &[src], &[mic], &cfg).unwrap().taps[0][0].clone()
    }

    #[test]
    fn anechoic_direct_path_closed_form() {
        let h = anechoic([2.0, 3.0, 1.5], [2.0 + 1.715, 3.0, 1.5]);
        let peak = h
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .unwrap();
        assert_eq!(peak.0, 80);
        let expected = 1.0 / (4.0 * PI * 1.715);
        assert!((peak.1 - expected).abs() / expected < 1e-6);
        // single pulse: no energy elsewhere
        let rest: f64 = h.iter().map(|v| v * v).sum::<f64>() - peak.1 * peak.1;
        assert!(rest < 1e-12 * peak.1 * peak.1);
    }

    #[test]
    fn doubling_distance_halves_peak() {
        let peak = |d: f64| {
            anechoic([1.0, 1.0, 1.0], [1.0 + d, 1.0, 1.0])
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()))
        };
        let (a, b) = (peak(0.343 * 4.0), peak(0.343 * 8.0));
        assert!((a / b - 2.0).abs() < 1e-9);
    }

    #[test]
    fn fractional_kernel_interpolates_sinc() {
        let w = hann_window(FRACTIONAL_DELAY_TAPS);
        let mut k = vec![0.0; FRACTIONAL_DELAY_TAPS];
        fractional_delay_kernel(0.3, &w, &mut k);
        for (j, v) in k.iter().enumerate() {
            let x = j as f64 - 40.0 - 0.3;
            let oracle = w[j] * (PI * x).sin() / (PI * x);
            assert!((v - oracle).abs() < 1e-13);
        }
    }

    #[test]
    fn source_outside_is_rejected() {
        let room = Shoebox {
            size: [3.0, 3.0, 3.0],
            t60: 0.3,
        };
        let err = image_source_rir(&room, &[[4.0, 1.0, 1.0]], &[[1.0, 1.0, 1.0]], &RirConfig::default());
        assert!(matches!(err, Err(Error::SourceOutsideRoom { .. })));
    }

    #[test]
    fn absorption_models() {
        let s = AbsorptionModel::Sabine.absorption(100.0, 130.0, 0.3);
        assert!((s - 0.1611 * 100.0 / (130.0 * 0.3)).abs() < 1e-12);
        assert_eq!(AbsorptionModel::Sabine.absorption(100.0, 1.0, 0.01), 1.0);
        let e = AbsorptionModel::Eyring.absorption(100.0, 130.0, 0.3);
        assert!((-(1.0 - e).ln() - 0.1611 * 100.0 / (130.0 * 0.3)).abs() < 1e-12);
    }

    #[test]
    fn schroeder_on_exponential_decay() {
        let fs = 16_000;
        let t60 = 0.4;
        // amplitude decays 60 dB over t60
        let h: Vec<f64> = (0..(fs as f64 * 0.8) as usize)
            .map(|n| 10f64.powf(-3.0 * n as f64 / (t60 * fs as f64)))
            .collect();
        let est = schroeder_t60(&h, fs).unwrap();
        assert!((est - t60).abs() / t60 < 0.02, "{est}");
    }
}
