//! Signal-level quality measures against a clean reference.

use crate::dsp::{SampleBuffer, Spectrogram};
use crate::error::{Error, Result};

/// Bound on scale-invariant SDR in either direction; an exact match scores
/// `+SI_SDR_CAP_DB`, an estimate with no reference component `-SI_SDR_CAP_DB`.
pub const SI_SDR_CAP_DB: f64 = 60.0;
/// 30 ms at 16 kHz.
pub const SEGMENT_LEN: usize = 480;
pub const SEGMENT_SNR_RANGE: (f64, f64) = (-10.0, 35.0);

const LOG_MSE_EPS: f64 = 1e-12;

fn magnitudes(spec: &Spectrogram) -> Vec<f64> {
    match spec.magnitude_values() {
        Some(m) => m.to_vec(),
        None => spec.magnitude().magnitude_values().expect("magnitude").to_vec(),
    }
}

/// `10 log10(mean((ln(1+est) - ln(1+ref))^2) + 1e-12)` over all bins and frames.
pub fn spectral_log_mse(est: &Spectrogram, reference: &Spectrogram) -> Result<f64> {
    if (est.bins(), est.frames()) != (reference.bins(), reference.frames()) {
        return Err(Error::shape(format!(
            "estimate has {} frames, reference {}",
            est.frames(),
            reference.frames()
        )));
    }
    let (e, r) = (magnitudes(est), magnitudes(reference));
    if e.is_empty() {
        return Err(Error::Empty("spectrogram"));
    }
    let mse = e
        .iter()
        .zip(&r)
        .map(|(a, b)| (a.ln_1p() - b.ln_1p()).powi(2))
        .sum::<f64>()
        / e.len() as f64;
    Ok(10.0 * (mse + LOG_MSE_EPS).log10())
}

fn check_lengths(est: &[f64], reference: &[f64]) -> Result<()> {
    if est.len() != reference.len() {
        return Err(Error::shape(format!(
            "estimate has {} samples, reference {}",
            est.len(),
            reference.len()
        )));
    }
    Ok(())
}

/// Scale-invariant signal-to-distortion ratio in dB, clamped to +-[`SI_SDR_CAP_DB`].
pub fn si_sdr(est: &SampleBuffer, reference: &SampleBuffer) -> Result<f64> {
    let (e, s) = (est.samples(), reference.samples());
    check_lengths(e, s)?;
    let ref_energy: f64 = s.iter().map(|v| v * v).sum();
    if ref_energy == 0.0 {
        return Err(Error::DegenerateSignal("reference"));
    }
    let alpha = e.iter().zip(s).map(|(a, b)| a * b).sum::<f64>() / ref_energy;
    let target = alpha * alpha * ref_energy;
    let residual: f64 = e.iter().zip(s).map(|(a, b)| (alpha * b - a).powi(2)).sum();
    if residual == 0.0 {
        return Ok(if target > 0.0 { SI_SDR_CAP_DB } else { -SI_SDR_CAP_DB });
    }
    Ok((10.0 * (target / residual).log10()).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

/// Mean per-segment SNR over non-overlapping 30 ms segments, each clamped to
/// [-10, 35] dB. Segments where the reference is silent are skipped; a short
/// trailing segment counts like the others.
pub fn segmental_snr(est: &SampleBuffer, reference: &SampleBuffer) -> Result<f64> {
    let (e, s) = (est.samples(), reference.samples());
    check_lengths(e, s)?;
    let (lo, hi) = SEGMENT_SNR_RANGE;
    let mut total = 0.0;
    let mut count = 0usize;
    for (es, ss) in e.chunks(SEGMENT_LEN).zip(s.chunks(SEGMENT_LEN)) {
        let signal: f64 = ss.iter().map(|v| v * v).sum();
        if signal == 0.0 {
            continue;
        }
        let noise: f64 = es.iter().zip(ss).map(|(a, b)| (a - b).powi(2)).sum();
        let snr = if noise == 0.0 { hi } else { 10.0 * (signal / noise).log10() };
        total += snr.clamp(lo, hi);
        count += 1;
    }
    if count == 0 {
        return Err(Error::DegenerateSignal("reference is silent in every segment"));
    }
    Ok(total / count as f64)
}
