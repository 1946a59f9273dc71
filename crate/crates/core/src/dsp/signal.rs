use std::ops::Deref;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::SAMPLE_RATE;
use crate::error::{Error, Result};

/// A mono waveform at [`SAMPLE_RATE`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleBuffer {
    samples: Vec<f64>,
}

impl SampleBuffer {
    /// Wraps `samples`, rejecting NaN and infinities.
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("sample buffer"));
        }
        Ok(Self { samples })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            samples: vec![0.0; len],
        }
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / SAMPLE_RATE as f64
    }

    /// Mean square amplitude over the whole buffer.
    pub fn power(&self) -> f64 {
        mean_power(&self.samples)
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
        }
    }

    /// Truncates or zero-pads to exactly `len` samples.
    pub fn resized(&self, len: usize) -> Self {
        let mut samples = self.samples.clone();
        samples.resize(len, 0.0);
        Self { samples }
    }

    /// Delays by `shift` samples, keeping the leading zeros (length grows).
    pub fn delayed(&self, shift: usize) -> Self {
        let mut samples = vec![0.0; shift];
        samples.extend_from_slice(&self.samples);
        Self { samples }
    }

    /// Sample-wise sum; the shorter operand is zero-extended.
    pub fn add(&self, other: &SampleBuffer) -> Self {
        let len = self.len().max(other.len());
        let samples = (0..len)
            .map(|i| {
                self.samples.get(i).copied().unwrap_or(0.0)
                    + other.samples.get(i).copied().unwrap_or(0.0)
            })
            .collect();
        Self { samples }
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }
}

/// Room impulse response taps at [`SAMPLE_RATE`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpulseResponse {
    taps: Vec<f64>,
}

impl ImpulseResponse {
    /// Requires finite taps and at least one nonzero tap.
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::Empty("impulse response"));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("impulse response"));
        }
        if taps.iter().all(|&t| t == 0.0) {
            return Err(Error::DegenerateSignal("impulse response"));
        }
        Ok(Self { taps })
    }

    /// Unit impulse delayed by `delay` samples.
    pub fn impulse(delay: usize) -> Self {
        let mut taps = vec![0.0; delay + 1];
        taps[delay] = 1.0;
        Self { taps }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum()
    }

    /// Index of the largest-magnitude tap.
    pub fn peak_index(&self) -> usize {
        self.taps
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, t)| {
                if t.abs() > bv {
                    (i, t.abs())
                } else {
                    (bi, bv)
                }
            })
            .0
    }

    /// Index of the first nonzero tap.
    pub fn first_arrival(&self) -> usize {
        self.taps.iter().position(|&t| t != 0.0).unwrap_or(0)
    }
}

impl Deref for ImpulseResponse {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.taps
    }
}

pub fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|s| s * s).sum::<f64>() / x.len() as f64
}

// Below this many multiply-adds the direct sum beats the FFT round trip.
const DIRECT_CONV_LIMIT: usize = 1 << 16;

/// Full linear convolution, `len(signal) + len(rir) - 1` samples long.
pub fn convolve(signal: &SampleBuffer, rir: &ImpulseResponse) -> Result<SampleBuffer> {
    if signal.is_empty() {
        return Err(Error::Empty("signal"));
    }
    if rir.taps.is_empty() {
        return Err(Error::Empty("impulse response"));
    }
    let out = if signal.len() * rir.len() <= DIRECT_CONV_LIMIT {
        convolve_direct(signal.samples(), rir.taps())
    } else {
        convolve_fft(signal.samples(), rir.taps())
    };
    SampleBuffer::new(out)
}

fn convolve_direct(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len() + h.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (o, &hj) in out[i..i + h.len()].iter_mut().zip(h) {
            *o += xi * hj;
        }
    }
    out
}

fn convolve_fft(x: &[f64], h: &[f64]) -> Vec<f64> {
    let out_len = x.len() + h.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut a: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    a.resize(n, Complex64::default());
    let mut b: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    b.resize(n, Complex64::default());
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (ai, bi) in a.iter_mut().zip(&b) {
        *ai *= bi;
    }
    inv.process(&mut a);
    let scale = 1.0 / n as f64;
    a[..out_len].iter().map(|c| c.re * scale).collect()
}

/// Gain `alpha` such that `10 log10(P_target / P_{alpha * noise}) == snr_db`,
/// with both powers taken over the common (overlapping) length.
pub fn snr_scale_factor(target: &[f64], noise: &[f64], snr_db: f64) -> Result<f64> {
    let overlap = target.len().min(noise.len());
    if overlap == 0 {
        return Err(Error::Empty("snr mixing input"));
    }
    let p_target = mean_power(&target[..overlap]);
    let p_noise = mean_power(&noise[..overlap]);
    if p_target == 0.0 {
        return Err(Error::DegenerateSignal("target"));
    }
    if p_noise == 0.0 {
        return Err(Error::DegenerateSignal("noise"));
    }
    Ok((p_target / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt())
}

/// Returns `alpha * noise` at the requested SNR relative to `target`.
pub fn scale_noise_to_snr(
    target: &SampleBuffer,
    noise: &SampleBuffer,
    snr_db: f64,
) -> Result<SampleBuffer> {
    let alpha = snr_scale_factor(target.samples(), noise.samples(), snr_db)?;
    Ok(noise.scaled(alpha))
}

/// `10 log10(P_target / P_noise)` over the common length.
pub fn measure_snr_db(target: &[f64], noise: &[f64]) -> f64 {
    let overlap = target.len().min(noise.len());
    10.0 * (mean_power(&target[..overlap]) / mean_power(&noise[..overlap])).log10()
}
