use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::Spectrogram;

/// Clipping margin applied before `atanh` when expanding a compressed mask.
pub const ATANH_CLIP_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskForm {
    Compressed,
    Uncompressed,
}

/// Per-(bin, frame) complex gain.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMask {
    pub data: Array2<Complex64>,
    pub form: MaskForm,
}

impl ComplexMask {
    pub fn uncompressed(data: Array2<Complex64>) -> Self {
        Self {
            data,
            form: MaskForm::Uncompressed,
        }
    }

    pub fn compressed(data: Array2<Complex64>) -> Self {
        Self {
            data,
            form: MaskForm::Compressed,
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }
}

/// `atanh` with the argument clipped to `[-(1-eps), 1-eps]`.
pub fn atanh_clipped(x: f64) -> f64 {
    let lim = 1.0 - ATANH_CLIP_EPS;
    x.clamp(-lim, lim).atanh()
}

/// Componentwise tanh on real and imaginary parts.
pub fn compress_mask(mask: &ComplexMask) -> ComplexMask {
    ComplexMask::compressed(mask.data.mapv(|z| Complex64::new(z.re.tanh(), z.im.tanh())))
}

/// Componentwise clipped atanh on real and imaginary parts.
pub fn uncompress_mask(mask: &ComplexMask) -> ComplexMask {
    ComplexMask::uncompressed(
        mask.data
            .mapv(|z| Complex64::new(atanh_clipped(z.re), atanh_clipped(z.im))),
    )
}

/// Elementwise product of an uncompressed mask with a single-channel spectrogram.
pub fn apply_mask(mask: &ComplexMask, reference: &Spectrogram) -> Result<Spectrogram> {
    if mask.form != MaskForm::Uncompressed {
        return Err(Error::InvalidArgument(
            "apply_mask expects an uncompressed mask".into(),
        ));
    }
    let (f, t) = mask.dim();
    if reference.num_channels() != 1 || reference.num_bins() != f || reference.num_frames() != t {
        return Err(Error::shape(
            "apply_mask",
            &[1, f, t],
            reference.data.shape(),
        ));
    }
    let out = &mask.data * &reference.channel(0);
    Ok(Spectrogram::from_mono(out, reference.params, reference.signal_len))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::StftParams;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn spec_from(data: Array2<Complex64>) -> Spectrogram {
        Spectrogram::from_mono(data, StftParams::new(4, 16_000), 8)
    }

    fn sample() -> Array2<Complex64> {
        Array2::from_shape_fn((3, 4), |(k, i)| c(k as f64 - 1.0, 0.5 * i as f64 - 0.3))
    }

    #[test]
    fn identity_and_zero_masks() {
        let y = spec_from(sample());
        let ones = ComplexMask::uncompressed(Array2::from_elem((3, 4), c(1.0, 0.0)));
        assert_eq!(apply_mask(&ones, &y).unwrap(), y);
        let zeros = ComplexMask::uncompressed(Array2::zeros((3, 4)));
        let out = apply_mask(&zeros, &y).unwrap();
        assert!(out.data.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn oracle_ratio_mask_recovers_target() {
        let y = sample();
        let s = Array2::from_shape_fn((3, 4), |(k, i)| c(0.1 * k as f64, -0.2 * i as f64));
        let m = Array2::from_shape_fn((3, 4), |(k, i)| {
            if y[[k, i]].norm() > 1e-8 {
                s[[k, i]] / y[[k, i]]
            } else {
                c(0.0, 0.0)
            }
        });
        let out = apply_mask(&ComplexMask::uncompressed(m), &spec_from(y.clone())).unwrap();
        for ((k, i), z) in out.channel(0).indexed_iter() {
            if y[[k, i]].norm() > 1e-8 {
                assert!((z - s[[k, i]]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        let m = ComplexMask::uncompressed(Array2::zeros((2, 4)));
        assert!(matches!(
            apply_mask(&m, &spec_from(sample())),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn codec_values() {
        let z = ComplexMask::uncompressed(Array2::from_elem((1, 1), c(0.0, 0.0)));
        assert_eq!(compress_mask(&z).data[[0, 0]], c(0.0, 0.0));

        let m = ComplexMask::uncompressed(Array2::from_elem((1, 1), c(0.5, -0.25)));
        let back = uncompress_mask(&compress_mask(&m)).data[[0, 0]];
        assert!((back - c(0.5, -0.25)).norm() < 1e-6);

        let big = ComplexMask::uncompressed(Array2::from_elem((1, 1), c(50.0, 0.0)));
        let squashed = compress_mask(&big).data[[0, 0]];
        assert!(1.0 - squashed.re < 1e-10);
        assert_eq!(squashed.im, 0.0);
        let back = uncompress_mask(&compress_mask(&big)).data[[0, 0]];
        assert_eq!(back.re, (1.0 - ATANH_CLIP_EPS).atanh());
        assert!(back.re.is_finite());
    }

    proptest! {
        #[test]
        fn codec_inverse_on_open_box(re in -0.999f64..0.999, im in -0.999f64..0.999) {
            let m = ComplexMask::compressed(Array2::from_elem((1, 1), c(re, im)));
            let back = compress_mask(&uncompress_mask(&m)).data[[0, 0]];
            prop_assert!((back - c(re, im)).norm() < 1e-6);
        }

        #[test]
        fn apply_mask_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
            let y = spec_from(sample().mapv(|z| z * (seed as f64 * 0.01 + 1.0)));
            let m1 = Array2::from_shape_fn((3, 4), |(k, i)| c(k as f64 * 0.3, i as f64 - 1.0));
            let m2 = Array2::from_shape_fn((3, 4), |(k, i)| c(-(i as f64), 0.2 * k as f64));
            let combo = ComplexMask::uncompressed(m1.mapv(|z| z * a) + m2.mapv(|z| z * b));
            let lhs = apply_mask(&combo, &y).unwrap();
            let r1 = apply_mask(&ComplexMask::uncompressed(m1), &y).unwrap();
            let r2 = apply_mask(&ComplexMask::uncompressed(m2), &y).unwrap();
            for ((l, x1), x2) in lhs.data.iter().zip(r1.data.iter()).zip(r2.data.iter()) {
                prop_assert!((l - (x1 * a + x2 * b)).norm() < 1e-9);
            }
        }
    }
}
