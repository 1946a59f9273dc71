use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::signal::SampleBuffer;
use crate::error::{Error, Result};

/// Frequency bins retained per frame (`fft_size / 2 + 1`).
pub const BINS: usize = 257;

// Lower bound on the overlap-add window normalizer.
const NORM_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hann,
}

impl WindowKind {
    /// Periodic window of length `len`.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::Hann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
                .collect(),
        }
    }
}

/// 25 ms frames, 10 ms hop (15 ms overlap), 512-point FFT at 16 kHz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            frame_len: 400,
            hop: 160,
            fft_size: 512,
            window: WindowKind::Hann,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fft_size / 2 + 1 != BINS {
            return Err(Error::config(format!(
                "fft_size {} does not give {BINS} bins",
                self.fft_size
            )));
        }
        if self.frame_len == 0 || self.frame_len > self.fft_size {
            return Err(Error::config("frame_len must be in 1..=fft_size"));
        }
        if self.hop == 0 || self.hop > self.frame_len {
            return Err(Error::config("hop must be in 1..=frame_len"));
        }
        Ok(())
    }

    pub fn overlap(&self) -> usize {
        self.frame_len - self.hop
    }

    /// Frame count for a signal of `len` samples (0 if shorter than a frame).
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.frame_len {
            0
        } else {
            1 + (len - self.frame_len) / self.hop
        }
    }

    /// Samples covered by `frames` overlapping frames.
    pub fn signal_len(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.frame_len
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecKind {
    Complex,
    Magnitude,
}

#[derive(Debug, Clone, PartialEq)]
enum SpecData {
    Complex(Vec<Complex64>),
    Magnitude(Vec<f64>),
}

/// A 257-bin time-frequency matrix, stored bin-major (`values[bin * frames + frame]`).
///
/// The bin-major layout matches the network's channel-by-frame feature maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    frames: usize,
    data: SpecData,
}

impl Spectrogram {
    pub fn from_complex(frames: usize, values: Vec<Complex64>) -> Result<Self> {
        check_len(frames, values.len())?;
        if values.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("spectrogram"));
        }
        Ok(Self {
            frames,
            data: SpecData::Complex(values),
        })
    }

    pub fn from_magnitude(frames: usize, values: Vec<f64>) -> Result<Self> {
        check_len(frames, values.len())?;
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::shape("magnitude values must be finite and >= 0"));
        }
        Ok(Self {
            frames,
            data: SpecData::Magnitude(values),
        })
    }

    pub fn bins(&self) -> usize {
        BINS
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn kind(&self) -> SpecKind {
        match self.data {
            SpecData::Complex(_) => SpecKind::Complex,
            SpecData::Magnitude(_) => SpecKind::Magnitude,
        }
    }

    pub fn complex_values(&self) -> Option<&[Complex64]> {
        match &self.data {
            SpecData::Complex(v) => Some(v),
            SpecData::Magnitude(_) => None,
        }
    }

    pub fn magnitude_values(&self) -> Option<&[f64]> {
        match &self.data {
            SpecData::Magnitude(v) => Some(v),
            SpecData::Complex(_) => None,
        }
    }

    /// Magnitude spectrogram (a copy if already magnitude).
    pub fn magnitude(&self) -> Spectrogram {
        let values = match &self.data {
            SpecData::Complex(v) => v.iter().map(|c| c.norm()).collect(),
            SpecData::Magnitude(v) => v.clone(),
        };
        Spectrogram {
            frames: self.frames,
            data: SpecData::Magnitude(values),
        }
    }

    /// Combines `magnitude` (negative entries clamped to 0) with the phase of `phase_src`.
    pub fn with_phase(magnitude: &[f64], phase_src: &Spectrogram) -> Result<Spectrogram> {
        let phase = phase_src.complex_values().ok_or(Error::PhaseRequired)?;
        if magnitude.len() != phase.len() {
            return Err(Error::shape(format!(
                "magnitude has {} values, phase source {}",
                magnitude.len(),
                phase.len()
            )));
        }
        let values = magnitude
            .iter()
            .zip(phase)
            .map(|(&m, p)| {
                let m = m.max(0.0);
                let norm = p.norm();
                if norm > 0.0 {
                    p * (m / norm)
                } else {
                    Complex64::new(m, 0.0)
                }
            })
            .collect();
        Spectrogram::from_complex(phase_src.frames, values)
    }

    /// Frames `start..end` as a new spectrogram.
    pub fn slice_frames(&self, start: usize, end: usize) -> Result<Spectrogram> {
        if start >= end || end > self.frames {
            return Err(Error::shape(format!(
                "frame range {start}..{end} outside 0..{}",
                self.frames
            )));
        }
        let width = end - start;
        let data = match &self.data {
            SpecData::Complex(v) => {
                SpecData::Complex(gather_rows(v, self.frames, |row| &row[start..end]))
            }
            SpecData::Magnitude(v) => {
                SpecData::Magnitude(gather_rows(v, self.frames, |row| &row[start..end]))
            }
        };
        Ok(Spectrogram {
            frames: width,
            data,
        })
    }

    /// Concatenates spectrograms of the same kind along the frame axis.
    pub fn concat_frames(parts: &[Spectrogram]) -> Result<Spectrogram> {
        let first = parts.first().ok_or(Error::Empty("spectrogram list"))?;
        if parts.iter().any(|p| p.kind() != first.kind()) {
            return Err(Error::shape("cannot concatenate mixed spectrogram kinds"));
        }
        let frames: usize = parts.iter().map(|p| p.frames).sum();
        match first.kind() {
            SpecKind::Magnitude => {
                let mut out = Vec::with_capacity(BINS * frames);
                for b in 0..BINS {
                    for p in parts {
                        let v = p.magnitude_values().unwrap();
                        out.extend_from_slice(&v[b * p.frames..(b + 1) * p.frames]);
                    }
                }
                Spectrogram::from_magnitude(frames, out)
            }
            SpecKind::Complex => {
                let mut out = Vec::with_capacity(BINS * frames);
                for b in 0..BINS {
                    for p in parts {
                        let v = p.complex_values().unwrap();
                        out.extend_from_slice(&v[b * p.frames..(b + 1) * p.frames]);
                    }
                }
                Spectrogram::from_complex(frames, out)
            }
        }
    }

    /// Rearranges frames so output frame `f` is input frame `index[f]`.
    fn gather_frames(&self, index: &[usize]) -> Spectrogram {
        let data = match &self.data {
            SpecData::Complex(v) => SpecData::Complex(gather_index(v, self.frames, index)),
            SpecData::Magnitude(v) => SpecData::Magnitude(gather_index(v, self.frames, index)),
        };
        Spectrogram {
            frames: index.len(),
            data,
        }
    }
}

fn check_len(frames: usize, len: usize) -> Result<()> {
    if frames == 0 {
        return Err(Error::Empty("spectrogram"));
    }
    if len != BINS * frames {
        return Err(Error::shape(format!(
            "expected {BINS}x{frames} values, got {len}"
        )));
    }
    Ok(())
}

fn gather_rows<T: Copy>(v: &[T], frames: usize, pick: impl Fn(&[T]) -> &[T]) -> Vec<T> {
    v.chunks_exact(frames)
        .flat_map(|row| pick(row).iter().copied())
        .collect()
}

fn gather_index<T: Copy>(v: &[T], frames: usize, index: &[usize]) -> Vec<T> {
    v.chunks_exact(frames)
        .flat_map(|row| index.iter().map(move |&i| row[i]))
        .collect()
}

/// Short-time Fourier transform with a zero-padded `fft_size`-point DFT per frame.
pub fn stft(signal: &SampleBuffer, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    let frames = cfg.frame_count(signal.len());
    if frames == 0 {
        return Err(Error::SignalTooShort {
            len: signal.len(),
            needed: cfg.frame_len,
        });
    }
    let window = cfg.window.coefficients(cfg.frame_len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.fft_size);
    let x = signal.samples();

    let mut values = vec![Complex64::default(); BINS * frames];
    let mut buf = vec![Complex64::default(); cfg.fft_size];
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    for f in 0..frames {
        let start = f * cfg.hop;
        for (n, slot) in buf.iter_mut().enumerate() {
            *slot = if n < cfg.frame_len {
                Complex64::new(x[start + n] * window[n], 0.0)
            } else {
                Complex64::default()
            };
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (b, c) in buf[..BINS].iter().enumerate() {
            values[b * frames + f] = *c;
        }
    }
    Spectrogram::from_complex(frames, values)
}

/// Weighted overlap-add inverse with per-sample squared-window normalization.
///
/// Output length is `(frames - 1) * hop + frame_len`.
pub fn istft(spec: &Spectrogram, cfg: &StftConfig) -> Result<SampleBuffer> {
    istft_with_floor(spec, cfg, 0.0)
}

/// [`istft`] with the normalizer floored at `relative_floor` times its largest
/// value. Edge samples covered only by window tails are then attenuated
/// instead of amplified, which matters when the spectrogram was modified.
pub fn istft_with_floor(spec: &Spectrogram, cfg: &StftConfig, relative_floor: f64) -> Result<SampleBuffer> {
    cfg.validate()?;
    let values = spec.complex_values().ok_or(Error::PhaseRequired)?;
    let frames = spec.frames();
    let n = cfg.fft_size;
    let window = cfg.window.coefficients(cfg.frame_len);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);

    let out_len = cfg.signal_len(frames);
    let mut out = vec![0.0; out_len];
    let mut norm = vec![0.0; out_len];
    let mut buf = vec![Complex64::default(); n];
    let mut scratch = vec![Complex64::default(); ifft.get_inplace_scratch_len()];
    let scale = 1.0 / n as f64;
    for f in 0..frames {
        // Hermitian completion; DC and Nyquist bins are forced real.
        buf[0] = Complex64::new(values[f].re, 0.0);
        buf[n / 2] = Complex64::new(values[(BINS - 1) * frames + f].re, 0.0);
        for b in 1..BINS - 1 {
            let c = values[b * frames + f];
            buf[b] = c;
            buf[n - b] = c.conj();
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let start = f * cfg.hop;
        for k in 0..cfg.frame_len {
            out[start + k] += buf[k].re * scale * window[k];
            norm[start + k] += window[k] * window[k];
        }
    }
    let floor = norm.iter().fold(0.0f64, |m, &v| m.max(v)) * relative_floor;
    let floor = floor.max(NORM_FLOOR);
    for (o, w) in out.iter_mut().zip(&norm) {
        *o /= w.max(floor);
    }
    SampleBuffer::new(out)
}

/// Extends the frame axis to the next multiple of `window_frames` by mirroring
/// the trailing frames about the last frame, without repeating it. When more
/// padding is needed than frames exist, the reflection keeps bouncing between
/// the two ends.
pub fn reflect_pad_frames(spec: &Spectrogram, window_frames: usize) -> Result<Spectrogram> {
    if window_frames == 0 {
        return Err(Error::config("window_frames must be positive"));
    }
    let frames = spec.frames();
    let target = frames.div_ceil(window_frames) * window_frames;
    if target == frames {
        return Ok(spec.clone());
    }
    let index: Vec<usize> = (0..target).map(|p| reflect_index(p, frames)).collect();
    Ok(spec.gather_frames(&index))
}

fn reflect_index(p: usize, len: usize) -> usize {
    if p < len {
        return p;
    }
    if len == 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let q = p % period;
    if q < len {
        q
    } else {
        period - q
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(seed: u64, n: usize) -> SampleBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SampleBuffer::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn interior_snr_db(x: &[f64], y: &[f64], skip: usize) -> f64 {
        let end = y.len().min(x.len()) - skip;
        let (mut sig, mut err) = (0.0, 0.0);
        for i in skip..end {
            sig += x[i] * x[i];
            err += (x[i] - y[i]) * (x[i] - y[i]);
        }
        10.0 * (sig / err).log10()
    }

    #[test]
    fn one_second_gives_98_frames() {
        let spec = stft(&noise(1, 16000), &StftConfig::default()).unwrap();
        assert_eq!(spec.frames(), 98);
        assert_eq!(spec.bins(), 257);
    }

    #[test]
    fn too_short_signal_is_rejected() {
        let err = stft(&SampleBuffer::zeros(399), &StftConfig::default()).unwrap_err();
        assert!(err.to_string().contains("signal too short"));
    }

    #[test]
    fn zero_signal_gives_zero_spectrogram() {
        let spec = stft(&SampleBuffer::zeros(1000), &StftConfig::default()).unwrap();
        assert!(spec.complex_values().unwrap().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn bin_centred_sinusoid_peaks_at_its_bin() {
        let f = 31.0 * 16000.0 / 512.0;
        assert!((f - 968.75) < 1e-12);
        let x: Vec<f64> = (0..4000)
            .map(|n| (2.0 * PI * f * n as f64 / 16000.0).sin())
            .collect();
        let spec = stft(&SampleBuffer::new(x).unwrap(), &StftConfig::default()).unwrap();
        let mag = spec.magnitude();
        let v = mag.magnitude_values().unwrap();
        let frames = spec.frames();
        for fr in 0..frames {
            let peak = (0..BINS)
                .max_by(|&a, &b| v[a * frames + fr].total_cmp(&v[b * frames + fr]))
                .unwrap();
            assert!((30..=32).contains(&peak), "frame {fr} peaks at {peak}");
            let total: f64 = (0..BINS).map(|b| v[b * frames + fr].powi(2)).sum();
            let near: f64 = (29..=33).map(|b| v[b * frames + fr].powi(2)).sum();
            assert!(near / total > 0.99);
        }
    }

    #[test]
    fn round_trip_reconstructs_interior() {
        let cfg = StftConfig::default();
        let x = noise(2, 16000);
        let y = istft(&stft(&x, &cfg).unwrap(), &cfg).unwrap();
        assert_eq!(y.len(), 15920);
        assert!(interior_snr_db(x.samples(), y.samples(), cfg.frame_len) > 60.0);
    }

    #[test]
    fn magnitude_input_needs_phase() {
        let cfg = StftConfig::default();
        let spec = stft(&noise(3, 1000), &cfg).unwrap().magnitude();
        assert!(matches!(istft(&spec, &cfg), Err(Error::PhaseRequired)));
    }

    #[test]
    fn zero_spectrogram_inverts_to_zero() {
        let spec = Spectrogram::from_complex(4, vec![Complex64::default(); BINS * 4]).unwrap();
        let y = istft(&spec, &StftConfig::default()).unwrap();
        assert!(y.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn single_dc_frame_matches_hand_evaluation() {
        // One frame with X[0] = 1: the inverse DFT is 1/512 everywhere, then the
        // synthesis window w and the normalizer w^2 leave (1/512) * w / max(w^2, floor).
        let cfg = StftConfig::default();
        let mut values = vec![Complex64::default(); BINS];
        values[0] = Complex64::new(1.0, 0.0);
        let y = istft(&Spectrogram::from_complex(1, values).unwrap(), &cfg).unwrap();
        let w = cfg.window.coefficients(cfg.frame_len);
        assert_eq!(y.len(), cfg.frame_len);
        for (n, &s) in y.samples().iter().enumerate() {
            let expected = w[n] / 512.0 / (w[n] * w[n]).max(NORM_FLOOR);
            assert!((s - expected).abs() <= 1e-12 * expected.abs().max(1.0));
        }
        // Centre of the frame: w = 1, so the value is exactly the DC level 1/512.
        assert!((y.samples()[200] - 1.0 / 512.0).abs() < 1e-15);
    }

    #[test]
    fn parseval_per_frame() {
        let cfg = StftConfig::default();
        let x = noise(4, 2000);
        let spec = stft(&x, &cfg).unwrap();
        let frames = spec.frames();
        let v = spec.complex_values().unwrap();
        let w = cfg.window.coefficients(cfg.frame_len);
        for f in 0..frames {
            let time: f64 = (0..cfg.frame_len)
                .map(|n| (x.samples()[f * cfg.hop + n] * w[n]).powi(2))
                .sum();
            let mut freq = v[f].norm_sqr() + v[256 * frames + f].norm_sqr();
            freq += 2.0 * (1..256).map(|b| v[b * frames + f].norm_sqr()).sum::<f64>();
            assert!((time - freq / 512.0).abs() < 1e-10 * time);
        }
    }

    #[test]
    fn reflect_pad_98_to_160() {
        let frames = 98;
        let values: Vec<f64> = (0..BINS * frames).map(|i| (i % frames) as f64).collect();
        let spec = Spectrogram::from_magnitude(frames, values).unwrap();
        let padded = reflect_pad_frames(&spec, 160).unwrap();
        assert_eq!(padded.frames(), 160);
        let v = padded.magnitude_values().unwrap();
        for f in 98..160 {
            assert_eq!(v[f] as usize, 96 - (f - 98));
        }
        assert_eq!(v[159], 35.0);
    }

    #[test]
    fn reflect_pad_alignment_rules() {
        let spec = Spectrogram::from_magnitude(160, vec![1.0; BINS * 160]).unwrap();
        assert_eq!(reflect_pad_frames(&spec, 160).unwrap(), spec);
        let spec = Spectrogram::from_magnitude(161, vec![1.0; BINS * 161]).unwrap();
        assert_eq!(reflect_pad_frames(&spec, 160).unwrap().frames(), 320);
    }

    #[test]
    fn reflect_pad_bounces_when_short() {
        let values: Vec<f64> = (0..BINS * 3).map(|i| (i % 3) as f64).collect();
        let spec = Spectrogram::from_magnitude(3, values).unwrap();
        let padded = reflect_pad_frames(&spec, 8).unwrap();
        let v = padded.magnitude_values().unwrap();
        assert_eq!(&v[..8], &[0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0]);
        let single = Spectrogram::from_magnitude(1, vec![5.0; BINS]).unwrap();
        let padded = reflect_pad_frames(&single, 4).unwrap();
        assert!(padded.magnitude_values().unwrap().iter().all(|&x| x == 5.0));
    }

    #[test]
    fn empty_spectrogram_rejected() {
        assert!(Spectrogram::from_magnitude(0, vec![]).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config::with_cases(16))]

        #[test]
        fn stft_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let cfg = StftConfig::default();
            let x = noise(seed, 1200);
            let y = noise(seed + 1, 1200);
            let mix: Vec<f64> = x.samples().iter().zip(y.samples()).map(|(p, q)| a * p + b * q).collect();
            let sm = stft(&SampleBuffer::new(mix).unwrap(), &cfg).unwrap();
            let sx = stft(&x, &cfg).unwrap();
            let sy = stft(&y, &cfg).unwrap();
            for ((m, p), q) in sm.complex_values().unwrap().iter().zip(sx.complex_values().unwrap()).zip(sy.complex_values().unwrap()) {
                proptest::prop_assert!((m - (p * a + q * b)).norm() < 1e-10);
            }
        }

        #[test]
        fn round_trip_any_length(seed in 0u64..1000, len in 1200usize..4000) {
            let cfg = StftConfig::default();
            let x = noise(seed, len);
            let y = istft(&stft(&x, &cfg).unwrap(), &cfg).unwrap();
            proptest::prop_assert!(interior_snr_db(x.samples(), y.samples(), cfg.frame_len) > 60.0);
        }
    }
}
