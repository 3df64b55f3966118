use crate::error::{Error, Result};

pub const SI_SDR_CAP_DB: f64 = 100.0;

/// Scale-invariant SDR of `est` against `reference`, capped at ±100 dB.
pub fn si_sdr(est: &[f64], reference: &[f64]) -> Result<f64> {
    if est.len() != reference.len() {
        return Err(Error::LengthMismatch(format!(
            "estimate has {} samples, reference {}",
            est.len(),
            reference.len()
        )));
    }
    let rr: f64 = reference.iter().map(|r| r * r).sum();
    if rr == 0.0 {
        return Err(Error::ZeroReference);
    }
    let alpha = est.iter().zip(reference).map(|(e, r)| e * r).sum::<f64>() / rr;
    let (mut target, mut resid) = (0.0, 0.0);
    for (e, r) in est.iter().zip(reference) {
        let t = alpha * r;
        target += t * t;
        resid += (t - e) * (t - e);
    }
    if resid == 0.0 {
        return Ok(if target > 0.0 { SI_SDR_CAP_DB } else { -SI_SDR_CAP_DB });
    }
    if target == 0.0 {
        return Ok(-SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target / resid).log10()).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

/// Mean and 95% confidence half-width (1.96 standard errors).
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * (var / n as f64).sqrt())
}
