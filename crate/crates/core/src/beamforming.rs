//! Oracle MVDR beamformer: recursive covariance tracking, ATF recovery from
//! the generalized eigenvalue problem, distortionless weights.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use ndarray::{Array3, Array4, Axis};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::signal::Spectrogram;

pub const DEFAULT_LAMBDA: f64 = 0.95;
/// Diagonal loading relative to the mean diagonal of the loaded matrix.
pub const LOADING: f64 = 1e-6;
/// Absolute loading floor for all-zero matrices.
pub const LOADING_FLOOR: f64 = 1e-20;
/// Initial regularization relative to the per-channel power of the first frame.
pub const INITIAL_EPSILON: f64 = 1e-6;

type CMatrix = DMatrix<Complex64>;
type CVector = DVector<Complex64>;

/// Covariance matrices per (bin, frame), stored as (F, T, C, C).
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceTrack {
    pub data: Array4<Complex64>,
    pub lambda: f64,
}

impl CovarianceTrack {
    pub fn num_bins(&self) -> usize {
        self.data.dim().0
    }

    pub fn num_frames(&self) -> usize {
        self.data.dim().1
    }

    pub fn matrix(&self, k: usize, i: usize) -> CMatrix {
        let c = self.data.dim().2;
        let view = self.data.index_axis(Axis(0), k);
        let m = view.index_axis(Axis(0), i);
        CMatrix::from_fn(c, c, |r, col| m[[r, col]])
    }
}

/// Weight vectors per (bin, frame), stored as (F, T, C).
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerWeights {
    pub data: Array3<Complex64>,
}

impl BeamformerWeights {
    /// The same weight vector at every bin and frame.
    pub fn constant(w: &[Complex64], bins: usize, frames: usize) -> Self {
        Self {
            data: Array3::from_shape_fn((bins, frames, w.len()), |(_, _, c)| w[c]),
        }
    }
}

/// Exponentially smoothed outer products along time for one bin.
struct Recursion {
    phi: CMatrix,
    lambda: f64,
    started: bool,
}

impl Recursion {
    fn new(channels: usize, lambda: f64) -> Self {
        Self {
            phi: CMatrix::zeros(channels, channels),
            lambda,
            started: false,
        }
    }

    fn push(&mut self, y: &CVector) -> &CMatrix {
        let outer = y * y.adjoint();
        if self.started {
            self.phi = &self.phi * Complex64::from(self.lambda) + outer * Complex64::from(1.0 - self.lambda);
        } else {
            let c = y.len() as f64;
            let eps = (INITIAL_EPSILON * y.norm_squared() / c).max(LOADING_FLOOR);
            self.phi = outer + CMatrix::identity(y.len(), y.len()) * Complex64::from(eps);
            self.started = true;
        }
        &self.phi
    }
}

fn frame_vector(spec: &Spectrogram, k: usize, i: usize) -> CVector {
    CVector::from_fn(spec.num_channels(), |c, _| spec.data[[c, k, i]])
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("smoothing factor {lambda} outside [0, 1)")))
    }
}

/// `Φ(k,0) = y yᴴ + εI`, `Φ(k,i) = λΦ(k,i−1) + (1−λ) y yᴴ`.
pub fn recursive_covariance(spec: &Spectrogram, lambda: f64) -> Result<CovarianceTrack> {
    check_lambda(lambda)?;
    let (c, f, t) = spec.data.dim();
    let bins: Vec<Vec<CMatrix>> = (0..f)
        .into_par_iter()
        .map(|k| {
            let mut rec = Recursion::new(c, lambda);
            (0..t).map(|i| rec.push(&frame_vector(spec, k, i)).clone()).collect()
        })
        .collect();
    let data = Array4::from_shape_fn((f, t, c, c), |(k, i, r, col)| bins[k][i][(r, col)]);
    Ok(CovarianceTrack { data, lambda })
}

fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::from(0.5)
}

/// `Φ + δI` with `δ = LOADING·mean(diag Φ)`, floored.
pub fn diagonal_loading(phi: &CMatrix) -> CMatrix {
    let n = phi.nrows();
    let mean = phi.diagonal().iter().map(|z| z.re).sum::<f64>() / n.max(1) as f64;
    let delta = (LOADING * mean).max(LOADING_FLOOR);
    hermitian_part(phi) + CMatrix::identity(n, n) * Complex64::from(delta)
}

fn cholesky(phi: &CMatrix) -> Result<Cholesky<Complex64, nalgebra::Dyn>> {
    Cholesky::new(diagonal_loading(phi)).ok_or(Error::NotPositiveDefinite("noise covariance"))
}

/// Acoustic transfer function normalized to the reference channel.
///
/// Solves `Φ_ss v = μ Φ_vv v` by whitening with the Cholesky factor of the
/// loaded `Φ_vv`, takes the principal eigenvector and returns `d = Φ_ss v / (Φ_ss v)[0]`.
/// Falls back to the unit vector of the reference channel when `Φ_ss v`
/// vanishes at the reference.
pub fn estimate_atf(phi_ss: &CMatrix, phi_vv: &CMatrix) -> Result<CVector> {
    let n = phi_ss.nrows();
    let chol = cholesky(phi_vv)?;
    let l = chol.l();
    let x = l
        .solve_lower_triangular(&hermitian_part(phi_ss))
        .ok_or(Error::NotPositiveDefinite("noise covariance"))?;
    let a = l
        .solve_lower_triangular(&x.adjoint())
        .ok_or(Error::NotPositiveDefinite("noise covariance"))?;
    let eig = SymmetricEigen::new(hermitian_part(&a));
    let top = eig.eigenvalues.imax();
    let u = eig.eigenvectors.column(top).into_owned();
    let v = l
        .adjoint()
        .solve_upper_triangular(&u)
        .ok_or(Error::NotPositiveDefinite("noise covariance"))?;
    let d = phi_ss * v;
    let scale = d.norm();
    if !(scale.is_finite() && d[0].norm() > 1e-12 * scale) {
        let mut e0 = CVector::zeros(n);
        e0[0] = Complex64::from(1.0);
        return Ok(e0);
    }
    let d0 = d[0];
    Ok(d.map(|z| z / d0))
}

/// `w = Φ_vv⁻¹ d / (dᴴ Φ_vv⁻¹ d)` with diagonal loading.
pub fn mvdr_weights(d: &CVector, phi_vv: &CMatrix) -> Result<CVector> {
    if d.norm() == 0.0 {
        return Err(Error::InvalidArgument("zero steering vector".into()));
    }
    let x = cholesky(phi_vv)?.solve(d);
    let denom = d.dotc(&x);
    if !(denom.norm().is_finite() && denom.norm() > 0.0) {
        return Err(Error::NotPositiveDefinite("noise covariance"));
    }
    Ok(x.map(|z| z / denom.conj()))
}

/// Output `w(k,i)ᴴ Y(k,i)` as a single-channel spectrogram.
pub fn beamform(weights: &BeamformerWeights, spec: &Spectrogram) -> Result<Spectrogram> {
    let (c, f, t) = spec.data.dim();
    if weights.data.dim() != (f, t, c) {
        let (a, b, d) = weights.data.dim();
        return Err(Error::shape("beamform", &[f, t, c], &[a, b, d]));
    }
    let out = ndarray::Array2::from_shape_fn((f, t), |(k, i)| {
        (0..c).map(|ch| weights.data[[k, i, ch]].conj() * spec.data[[ch, k, i]]).sum()
    });
    Ok(Spectrogram::from_mono(out, spec.params, spec.signal_len))
}

/// MVDR weights at every (bin, frame) from recursively averaged oracle
/// speech and noise covariances.
pub fn oracle_mvdr_weights(speech: &Spectrogram, noise: &Spectrogram, lambda: f64) -> Result<BeamformerWeights> {
    check_lambda(lambda)?;
    if speech.data.dim() != noise.data.dim() {
        return Err(Error::shape("oracle covariances", speech.data.shape(), noise.data.shape()));
    }
    let (c, f, t) = speech.data.dim();
    let bins: Vec<Vec<CVector>> = (0..f)
        .into_par_iter()
        .map(|k| {
            let mut ss = Recursion::new(c, lambda);
            let mut vv = Recursion::new(c, lambda);
            (0..t)
                .map(|i| {
                    let phi_ss = ss.push(&frame_vector(speech, k, i)).clone();
                    let phi_vv = vv.push(&frame_vector(noise, k, i));
                    let singular = |_| Error::Singular { k, i };
                    let d = estimate_atf(&phi_ss, phi_vv).map_err(singular)?;
                    mvdr_weights(&d, phi_vv).map_err(singular)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let data = Array3::from_shape_fn((f, t, c), |(k, i, ch)| bins[k][i][ch]);
    Ok(BeamformerWeights { data })
}

/// Oracle MVDR applied to the noisy mixture.
pub fn oracle_mvdr_enhance(
    noisy: &Spectrogram,
    speech: &Spectrogram,
    noise: &Spectrogram,
    lambda: f64,
) -> Result<Spectrogram> {
    if noisy.data.dim() != speech.data.dim() {
        return Err(Error::shape("oracle MVDR input", noisy.data.shape(), speech.data.shape()));
    }
    let weights = oracle_mvdr_weights(speech, noise, lambda)?;
    beamform(&weights, noisy)
}
