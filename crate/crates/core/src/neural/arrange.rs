//! Conversion between complex spectrograms and batches of real-valued
//! feature sequences.

use std::sync::Arc;

use ndarray::{Array3, Array4, ArrayView3};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a (C × F × T) spectrogram is cut into sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arrangement {
    /// One sequence over time per frequency bin.
    NarrowBand,
    /// One sequence over frequency per time frame.
    WideBand,
    /// Single channel: one sequence over time with real and imaginary parts
    /// of all bins stacked as features.
    SpectralStack,
}

/// Real-valued sequences (B × L × D) with the bookkeeping needed to map them
/// back to (sample, bin, frame) indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrangedBatch {
    pub data: Array3<f64>,
    pub arrangement: Arrangement,
    pub samples: usize,
    pub bins: usize,
    pub frames: usize,
    /// Per-sequence permutations applied by [`shuffle_sequence`].
    pub permutation: Option<Arc<Vec<Vec<usize>>>>,
}

/// Feature count per (bin, frame) for `channels` microphones.
pub fn feature_count(channels: usize, append_freq_index: bool) -> usize {
    2 * channels + usize::from(append_freq_index)
}

/// Normalized frequency-bin feature `k / (F − 1)`.
pub fn freq_index_feature(k: usize, bins: usize) -> f64 {
    if bins > 1 {
        k as f64 / (bins - 1) as f64
    } else {
        0.0
    }
}

fn check_same_shape(specs: &[ArrayView3<'_, Complex64>]) -> Result<(usize, usize, usize)> {
    let first = specs
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?
        .dim();
    for s in specs {
        if s.dim() != first {
            let (a, b, c) = s.dim();
            return Err(Error::shape("batch spectrograms", &[first.0, first.1, first.2], &[a, b, c]));
        }
    }
    Ok(first)
}

/// Arranges a batch of equally shaped (C × F × T) spectrograms.
///
/// Narrow-band: B = N·F (sample-major), L = T. Wide-band: B = N·T, L = F.
/// Features are `[Re Y(0..C), Im Y(0..C)]`, optionally followed by
/// `k/(F−1)`. Spectral stack (single channel): B = N, L = T, features
/// `[Re Y(0..F), Im Y(0..F)]`.
pub fn arrange_batch(
    specs: &[ArrayView3<'_, Complex64>],
    mode: Arrangement,
    append_freq_index: bool,
) -> Result<ArrangedBatch> {
    let (c, f, t) = check_same_shape(specs)?;
    let n = specs.len();
    let data = match mode {
        Arrangement::NarrowBand | Arrangement::WideBand => {
            let d = feature_count(c, append_freq_index);
            let narrow = mode == Arrangement::NarrowBand;
            let (per, len) = if narrow { (f, t) } else { (t, f) };
            let mut out = Array3::zeros((n * per, len, d));
            for (s, spec) in specs.iter().enumerate() {
                for k in 0..f {
                    for i in 0..t {
                        let (b, l) = if narrow { (s * f + k, i) } else { (s * t + i, k) };
                        for ch in 0..c {
                            let z = spec[[ch, k, i]];
                            out[[b, l, ch]] = z.re;
                            out[[b, l, c + ch]] = z.im;
                        }
                        if append_freq_index {
                            out[[b, l, 2 * c]] = freq_index_feature(k, f);
                        }
                    }
                }
            }
            out
        }
        Arrangement::SpectralStack => {
            if c != 1 {
                return Err(Error::Arrangement(format!(
                    "spectral stacking needs one channel, got {c}"
                )));
            }
            let mut out = Array3::zeros((n, t, 2 * f));
            for (s, spec) in specs.iter().enumerate() {
                for k in 0..f {
                    for i in 0..t {
                        let z = spec[[0, k, i]];
                        out[[s, i, k]] = z.re;
                        out[[s, i, f + k]] = z.im;
                    }
                }
            }
            out
        }
    };
    Ok(ArrangedBatch {
        data,
        arrangement: mode,
        samples: n,
        bins: f,
        frames: t,
        permutation: None,
    })
}

/// Arranges one spectrogram.
pub fn arrange(spec: ArrayView3<'_, Complex64>, mode: Arrangement, append_freq_index: bool) -> Result<ArrangedBatch> {
    arrange_batch(&[spec], mode, append_freq_index)
}

/// Inverse of [`arrange_batch`]: (N × C × F × T) complex coefficients.
pub fn disarrange(batch: &ArrangedBatch) -> Result<Array4<Complex64>> {
    if batch.permutation.is_some() {
        return Err(Error::Arrangement("batch is still shuffled".into()));
    }
    let (n, f, t) = (batch.samples, batch.bins, batch.frames);
    let d = batch.data.dim().2;
    match batch.arrangement {
        Arrangement::SpectralStack => Ok(Array4::from_shape_fn((n, 1, f, t), |(s, _, k, i)| {
            Complex64::new(batch.data[[s, i, k]], batch.data[[s, i, f + k]])
        })),
        mode => {
            let c = d / 2;
            let narrow = mode == Arrangement::NarrowBand;
            Ok(Array4::from_shape_fn((n, c, f, t), |(s, ch, k, i)| {
                let (b, l) = if narrow { (s * f + k, i) } else { (s * t + i, k) };
                Complex64::new(batch.data[[b, l, ch]], batch.data[[b, l, c + ch]])
            }))
        }
    }
}

/// Swaps the sequence and batch roles of the (bin, frame) axes between the
/// narrow-band and wide-band layouts; features are untouched.
pub fn rearrange_between_layers(x: &ArrangedBatch, from: Arrangement, to: Arrangement) -> Result<ArrangedBatch> {
    if x.arrangement != from {
        return Err(Error::Arrangement(format!(
            "expected {from:?} input, got {:?}",
            x.arrangement
        )));
    }
    if x.permutation.is_some() {
        return Err(Error::Arrangement("cannot rearrange a shuffled batch".into()));
    }
    if from == to {
        return Ok(x.clone());
    }
    let (n, f, t) = (x.samples, x.bins, x.frames);
    let d = x.data.dim().2;
    let data = match (from, to) {
        (Arrangement::WideBand, Arrangement::NarrowBand) => {
            Array3::from_shape_fn((n * f, t, d), |(b, i, j)| x.data[[(b / f) * t + i, b % f, j]])
        }
        (Arrangement::NarrowBand, Arrangement::WideBand) => {
            Array3::from_shape_fn((n * t, f, d), |(b, k, j)| x.data[[(b / t) * f + k, b % t, j]])
        }
        _ => {
            return Err(Error::Arrangement(format!("no rearrangement from {from:?} to {to:?}")));
        }
    };
    Ok(ArrangedBatch {
        data,
        arrangement: to,
        ..x.clone()
    })
}

/// Independent uniform permutations of `0..len` for `count` sequences.
pub fn random_permutations<R: Rng>(count: usize, len: usize, rng: &mut R) -> Vec<Vec<usize>> {
    (0..count)
        .map(|_| {
            let mut p: Vec<usize> = (0..len).collect();
            p.shuffle(rng);
            p
        })
        .collect()
}

pub fn inverse_permutations(perms: &[Vec<usize>]) -> Vec<Vec<usize>> {
    perms
        .iter()
        .map(|p| {
            let mut inv = vec![0; p.len()];
            for (l, &m) in p.iter().enumerate() {
                inv[m] = l;
            }
            inv
        })
        .collect()
}

fn permute_rows(data: &Array3<f64>, perms: &[Vec<usize>]) -> Array3<f64> {
    Array3::from_shape_fn(data.dim(), |(b, l, j)| data[[b, perms[b][l], j]])
}

/// Permutes every sequence with its own random order and records it.
pub fn shuffle_sequence<R: Rng>(x: &ArrangedBatch, rng: &mut R) -> Result<ArrangedBatch> {
    if x.permutation.is_some() {
        return Err(Error::Arrangement("batch is already shuffled".into()));
    }
    let (b, l, _) = x.data.dim();
    let perms = random_permutations(b, l, rng);
    Ok(ArrangedBatch {
        data: permute_rows(&x.data, &perms),
        permutation: Some(Arc::new(perms)),
        ..x.clone()
    })
}

/// Undoes [`shuffle_sequence`].
pub fn unshuffle(x: &ArrangedBatch) -> Result<ArrangedBatch> {
    let perms = x
        .permutation
        .as_ref()
        .ok_or_else(|| Error::Arrangement("unshuffle without a recorded permutation".into()))?;
    Ok(ArrangedBatch {
        data: permute_rows(&x.data, &inverse_permutations(perms)),
        permutation: None,
        ..x.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    fn spec(c: usize, f: usize, t: usize) -> Array3<Complex64> {
        Array3::from_shape_fn((c, f, t), |(a, b, d)| {
            Complex64::new((a * 100 + b * 10 + d) as f64, -((a + b * d) as f64) * 0.5)
        })
    }

    #[test]
    fn narrow_band_shape_and_inverse() {
        let y = spec(3, 257, 188);
        let nb = arrange(y.view(), Arrangement::NarrowBand, false).unwrap();
        assert_eq!(nb.data.dim(), (257, 188, 6));
        let back = disarrange(&nb).unwrap();
        assert_eq!(back.index_axis(ndarray::Axis(0), 0), y);
        let wb = arrange(y.view(), Arrangement::WideBand, true).unwrap();
        assert_eq!(wb.data.dim(), (188, 257, 7));
        assert_eq!(disarrange(&wb).unwrap().index_axis(ndarray::Axis(0), 0), y);
    }

    #[test]
    fn freq_index_feature_values() {
        assert_eq!(freq_index_feature(128, 257), 0.5);
        let y = spec(3, 5, 4);
        let nb = arrange(y.view(), Arrangement::NarrowBand, true).unwrap();
        // constant along narrow-band sequences
        for i in 0..4 {
            assert_eq!(nb.data[[2, i, 6]], 0.5);
        }
        let wb = arrange(y.view(), Arrangement::WideBand, true).unwrap();
        let ramp: Vec<f64> = (0..5).map(|k| wb.data[[1, k, 6]]).collect();
        assert_eq!(ramp, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn spectral_stack() {
        let y = spec(1, 5, 4);
        let pf = arrange(y.view(), Arrangement::SpectralStack, false).unwrap();
        assert_eq!(pf.data.dim(), (1, 4, 10));
        assert_eq!(pf.data[[0, 2, 3]], y[[0, 3, 2]].re);
        assert_eq!(pf.data[[0, 2, 8]], y[[0, 3, 2]].im);
        assert_eq!(disarrange(&pf).unwrap().index_axis(ndarray::Axis(0), 0), y);
        assert!(arrange(spec(3, 5, 4).view(), Arrangement::SpectralStack, false).is_err());
    }

    #[test]
    fn rearrangement_is_an_index_transpose() {
        let y = spec(3, 12, 8);
        let wb = arrange(y.view(), Arrangement::WideBand, false).unwrap();
        let nb = rearrange_between_layers(&wb, Arrangement::WideBand, Arrangement::NarrowBand).unwrap();
        assert_eq!(nb, arrange(y.view(), Arrangement::NarrowBand, false).unwrap());
        // (time 5, freq 10, feat 3) → (freq 10, time 5, feat 3)
        assert_eq!(wb.data[[5, 10, 3]], nb.data[[10, 5, 3]]);
        let back = rearrange_between_layers(&nb, Arrangement::NarrowBand, Arrangement::WideBand).unwrap();
        assert_eq!(back, wb);
        assert!(rearrange_between_layers(&nb, Arrangement::WideBand, Arrangement::NarrowBand).is_err());
    }

    #[test]
    fn batched_arrangement_is_sample_major() {
        let a = spec(3, 4, 5);
        let b = a.mapv(|z| z * 2.0);
        let nb = arrange_batch(&[a.view(), b.view()], Arrangement::NarrowBand, false).unwrap();
        assert_eq!(nb.data.dim(), (8, 5, 6));
        assert_eq!(nb.data[[4 + 1, 2, 0]], b[[0, 1, 2]].re);
        let wb = rearrange_between_layers(&nb, Arrangement::NarrowBand, Arrangement::WideBand).unwrap();
        assert_eq!(wb, arrange_batch(&[a.view(), b.view()], Arrangement::WideBand, false).unwrap());
    }

    #[test]
    fn shuffle_round_trip() {
        let y = spec(3, 6, 9);
        let nb = arrange(y.view(), Arrangement::NarrowBand, true).unwrap();
        let mut rng = rng_from_seed(4);
        let sh = shuffle_sequence(&nb, &mut rng).unwrap();
        assert_ne!(sh.data, nb.data);
        // features of each element move together
        let p = &sh.permutation.as_ref().unwrap()[2];
        for l in 0..9 {
            assert_eq!(sh.data.slice(ndarray::s![2, l, ..]), nb.data.slice(ndarray::s![2, p[l], ..]));
        }
        assert_eq!(unshuffle(&sh).unwrap(), nb);
        assert!(unshuffle(&nb).is_err());
    }
}
