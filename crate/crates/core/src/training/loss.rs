use std::sync::Arc;

use ndarray::{Array2, IxDyn};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::neural::{Graph, Tensor, Var};
use crate::signal::{ComplexMask, MaskForm, StftPlan};

/// Weight of the time-domain terms relative to the magnitude terms.
pub const DEFAULT_ALPHA: f64 = 10.0;

/// Noise mask from the speech mask: `Re M_V = 1 − Re M_S`, `Im M_V = −Im M_S`.
pub fn derive_noise_mask(mask_s: &ComplexMask) -> Result<ComplexMask> {
    if mask_s.form != MaskForm::Uncompressed {
        return Err(Error::InvalidArgument("noise mask needs an uncompressed speech mask".into()));
    }
    Ok(ComplexMask::uncompressed(mask_s.data.mapv(|z| Complex64::new(1.0 - z.re, -z.im))))
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Reference and estimate of one signal in both domains.
pub struct LossTerm<'a> {
    pub reference: &'a [f64],
    pub estimate: &'a [f64],
    pub reference_mag: &'a [f64],
    pub estimate_mag: &'a [f64],
}

/// `Σ_u α‖u − û‖₁ + ‖|U| − |Û|‖₁` over the given terms.
pub fn loss_value(terms: &[LossTerm<'_>], alpha: f64) -> Result<f64> {
    let mut total = 0.0;
    for t in terms {
        if t.reference.len() != t.estimate.len() || t.reference_mag.len() != t.estimate_mag.len() {
            return Err(Error::LengthMismatch("loss operands differ in length".into()));
        }
        total += alpha * l1(t.reference, t.estimate) + l1(t.reference_mag, t.estimate_mag);
    }
    if !total.is_finite() {
        return Err(Error::NonFinite(format!("loss evaluated to {total}")));
    }
    Ok(total)
}

/// Constant inputs of the loss for one sample.
pub struct LossTargets<'a> {
    /// Reference-channel mixture spectrogram (F × T).
    pub reference: &'a Array2<Complex64>,
    pub speech: &'a [f64],
    pub speech_mag: &'a Array2<f64>,
    /// Noise waveform and magnitude; `None` drops the noise terms.
    pub noise: Option<(&'a [f64], &'a Array2<f64>)>,
}

fn constant2(g: &mut Graph, a: &Array2<f64>) -> Var {
    g.constant(a.clone().into_dyn())
}

fn constant1(g: &mut Graph, a: &[f64]) -> Var {
    g.constant(Tensor::from_shape_vec(IxDyn(&[a.len()]), a.to_vec()).expect("1-d"))
}

/// Applies the complex mask `(mr, mi)` to the reference spectrogram.
fn masked(g: &mut Graph, mr: Var, mi: Var, yr: Var, yi: Var) -> Result<(Var, Var)> {
    let a = g.mul(mr, yr)?;
    let b = g.mul(mi, yi)?;
    let re = g.sub(a, b)?;
    let c = g.mul(mr, yi)?;
    let d = g.mul(mi, yr)?;
    let im = g.add(c, d)?;
    Ok((re, im))
}

fn term(
    g: &mut Graph,
    (re, im): (Var, Var),
    wave: &[f64],
    mag: &Array2<f64>,
    plan: &Arc<StftPlan>,
    alpha: f64,
) -> Result<Var> {
    let est = g.istft(re, im, plan.clone(), wave.len())?;
    let reference = constant1(g, wave);
    let time = g.l1(est, reference)?;
    let time = g.affine(time, alpha, 0.0);
    let est_mag = g.complex_magnitude(re, im)?;
    let ref_mag = constant2(g, mag);
    let freq = g.l1(est_mag, ref_mag)?;
    g.add(time, freq)
}

/// Records the loss of one sample given its compressed mask node (F × T × 2).
pub fn loss_graph(
    g: &mut Graph,
    compressed: Var,
    targets: &LossTargets<'_>,
    plan: &Arc<StftPlan>,
    alpha: f64,
) -> Result<Var> {
    let shape = g.value(compressed).shape().to_vec();
    let (f, t) = targets.reference.dim();
    if shape != [f, t, 2] {
        return Err(Error::shape("loss mask", &[f, t, 2], &shape));
    }
    let cr = g.slice(compressed, 2, 0, 1)?;
    let cr = g.reshape(cr, &[f, t])?;
    let ci = g.slice(compressed, 2, 1, 2)?;
    let ci = g.reshape(ci, &[f, t])?;
    let mr = g.atanh_clipped(cr);
    let mi = g.atanh_clipped(ci);
    let yr = constant2(g, &targets.reference.mapv(|z| z.re));
    let yi = constant2(g, &targets.reference.mapv(|z| z.im));

    let speech = masked(g, mr, mi, yr, yi)?;
    let mut loss = term(g, speech, targets.speech, targets.speech_mag, plan, alpha)?;
    if let Some((noise, noise_mag)) = targets.noise {
        let vr = g.affine(mr, -1.0, 1.0);
        let vi = g.affine(mi, -1.0, 0.0);
        let est = masked(g, vr, vi, yr, yi)?;
        let nt = term(g, est, noise, noise_mag, plan, alpha)?;
        loss = g.add(loss, nt)?;
    }
    Ok(loss)
}
