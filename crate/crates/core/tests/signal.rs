use std::f64::consts::PI;

use jnf_core::signal::{
    apply_mask, compress_mask, istft, read_wav, stft, uncompress_mask, write_wav, ComplexMask, StftParams, WavFormat,
    Waveform,
};
use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_wave(channels: usize, len: usize, seed: u64, fs: u32) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Waveform::new(Array2::from_shape_fn((channels, len), |_| rng.gen_range(-1.0..1.0)), fs)
}

fn rel_err(a: &Waveform, b: &Waveform) -> f64 {
    let num: f64 = (&a.data - &b.data).iter().map(|v| v * v).sum();
    let den: f64 = b.data.iter().map(|v| v * v).sum();
    (num / den).sqrt()
}

/// Direct DFT of sin-windowed frames, each hop-aligned with one hop of
/// leading zeros.
fn direct_stft(x: &[f64], n: usize) -> Array2<Complex64> {
    let hop = n / 2;
    let frames = (x.len() - 1) / hop + 2;
    let at = |t: isize| -> f64 {
        if t < 0 || t as usize >= x.len() {
            0.0
        } else {
            x[t as usize]
        }
    };
    Array2::from_shape_fn((n / 2 + 1, frames), |(k, i)| {
        (0..n)
            .map(|m| {
                let w = (PI * m as f64 / n as f64).sin();
                let v = at((i * hop + m) as isize - hop as isize) * w;
                Complex64::from_polar(v, -2.0 * PI * (k * m) as f64 / n as f64)
            })
            .sum()
    })
}

#[test]
fn stft_matches_direct_dft() {
    let params = StftParams::new(16, 8_000);
    let wave = random_wave(2, 77, 1, 8_000);
    let spec = stft(&wave, &params).unwrap();
    for c in 0..2 {
        let oracle = direct_stft(&wave.channel_vec(c), 16);
        assert_eq!(spec.channel(c).dim(), oracle.dim());
        for (a, b) in spec.channel(c).iter().zip(oracle.iter()) {
            assert!((a - b).norm() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn default_framing_of_three_seconds() {
    let params = StftParams::default();
    let wave = random_wave(3, 48_000, 2, 16_000);
    let spec = stft(&wave, &params).unwrap();
    assert_eq!(spec.num_bins(), 257);
    assert_eq!(spec.num_frames(), (48_000 - 1) / 256 + 2);
    let back = istft(&spec, &params).unwrap();
    assert_eq!(back.data.dim(), wave.data.dim());
    assert!(rel_err(&back, &wave) < 1e-6);
}

#[test]
fn pcm16_round_trip_within_quantization() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.wav");
    let wave = random_wave(3, 1000, 3, 16_000).data.mapv(|v| 0.9 * v);
    let wave = Waveform::new(wave, 16_000);
    write_wav(&path, &wave, WavFormat::Pcm16).unwrap();
    let back = read_wav(&path).unwrap();
    assert_eq!(back.data.dim(), wave.data.dim());
    let worst = (&back.data - &wave.data).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst <= 0.5 / 32768.0 + 1e-12, "{worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn round_trip_reconstructs(len in 32usize..2000, channels in 1usize..4, half in 4usize..33, seed in any::<u64>()) {
        let params = StftParams::new(2 * half, 16_000);
        prop_assume!(len >= params.window_length);
        let wave = random_wave(channels, len, seed, 16_000);
        let back = istft(&stft(&wave, &params).unwrap(), &params).unwrap();
        prop_assert!(rel_err(&back, &wave) < 1e-12);
    }

    #[test]
    fn stft_is_linear(a in -4.0f64..4.0, b in -4.0f64..4.0, seed in any::<u64>()) {
        let params = StftParams::new(32, 16_000);
        let x = random_wave(1, 300, seed, 16_000);
        let y = random_wave(1, 300, seed ^ 0x55, 16_000);
        let combo = Waveform::new(&x.data * a + &y.data * b, 16_000);
        let lhs = stft(&combo, &params).unwrap();
        let (sx, sy) = (stft(&x, &params).unwrap(), stft(&y, &params).unwrap());
        for ((l, u), v) in lhs.data.iter().zip(sx.data.iter()).zip(sy.data.iter()) {
            prop_assert!((l - (u * a + v * b)).norm() < 1e-9);
        }
    }

    #[test]
    fn complementary_masks_sum_to_the_mixture(seed in any::<u64>()) {
        let params = StftParams::new(32, 16_000);
        let y = stft(&random_wave(1, 400, seed, 16_000), &params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let raw = Array2::from_shape_fn((y.num_bins(), y.num_frames()), |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let ms = uncompress_mask(&ComplexMask::compressed(raw));
        let mv = ComplexMask::uncompressed(ms.data.mapv(|m| Complex64::new(1.0, 0.0) - m));
        let s = apply_mask(&ms, &y).unwrap();
        let v = apply_mask(&mv, &y).unwrap();
        for ((a, b), target) in s.data.iter().zip(v.data.iter()).zip(y.data.iter()) {
            prop_assert!((a + b - target).norm() < 1e-12);
        }
    }

    #[test]
    fn mask_codec_round_trip(re in -5.0f64..5.0, im in -5.0f64..5.0) {
        let m = ComplexMask::uncompressed(Array2::from_elem((1, 1), Complex64::new(re, im)));
        let back = uncompress_mask(&compress_mask(&m)).data[[0, 0]];
        prop_assert!((back - Complex64::new(re, im)).norm() < 1e-6);
    }
}
