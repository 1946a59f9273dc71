//! Utterance-level enhancement: STFT, optional dereverberation, window-wise
//! magnitude estimation, and resynthesis with the beam-0 phase.

use crate::data::frame_windows;
use crate::dsp::{istft_with_floor, stft, SampleBuffer, Spectrogram, StftConfig};
use crate::error::{Error, Result};
use crate::nn::TcnModel;
use crate::tensor::Mat;
use crate::wpe::{wpe_pair, WpeConfig};

/// Maps stacked beam magnitude windows (`bins x (n * width)`) to target
/// magnitude estimates of the same shape.
pub trait Enhancer: Sync {
    fn estimate(&self, b0: &Mat<f32>, b1: &Mat<f32>, width: usize) -> Result<Mat<f32>>;
}

impl Enhancer for TcnModel<f32> {
    fn estimate(&self, b0: &Mat<f32>, b1: &Mat<f32>, width: usize) -> Result<Mat<f32>> {
        self.predict(b0, b1, width)
    }
}

/// Pass-through that returns the beam-0 magnitude unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct Passthrough;

impl Enhancer for Passthrough {
    fn estimate(&self, b0: &Mat<f32>, _b1: &Mat<f32>, _width: usize) -> Result<Mat<f32>> {
        Ok(b0.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceOptions {
    pub stft: StftConfig,
    pub window_frames: usize,
    pub wpe: Option<WpeConfig>,
    /// Windows per forward pass.
    pub batch_size: usize,
}

impl Default for EnhanceOptions {
    fn default() -> Self {
        Self {
            stft: StftConfig::default(),
            window_frames: 160,
            wpe: None,
            batch_size: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Enhanced {
    /// Estimated clean magnitude, one frame per input frame.
    pub magnitude: Spectrogram,
    /// Resynthesized estimate, the length of the input.
    pub waveform: SampleBuffer,
}

/// Overlap-add normalizer floor for resynthesis, relative to its steady-state
/// value. Without it, estimation errors in the first and last frames are
/// divided by near-zero window sums and dominate the output energy.
pub const RESYNTH_NORM_FLOOR: f64 = 0.1;

/// Magnitude `bins x frames` as a spectrogram with the phase of `phase_src`,
/// resynthesized and resized to `len` samples.
pub fn resynthesize(magnitude: &Mat<f32>, phase_src: &Spectrogram, cfg: &StftConfig, len: usize) -> Result<SampleBuffer> {
    let mag: Vec<f64> = magnitude.as_slice().iter().map(|&v| v.max(0.0) as f64).collect();
    let spec = Spectrogram::with_phase(&mag, phase_src)?;
    Ok(istft_with_floor(&spec, cfg, RESYNTH_NORM_FLOOR)?.resized(len))
}

/// Runs `enhancer` over an utterance and returns the estimated magnitude
/// spectrogram and waveform.
pub fn enhance_signals(
    b0: &SampleBuffer,
    b1: &SampleBuffer,
    enhancer: &dyn Enhancer,
    opts: &EnhanceOptions,
) -> Result<Enhanced> {
    crate::data::check_window_frames(opts.window_frames)?;
    if b0.len() != b1.len() {
        return Err(Error::shape(format!("beam signals have {} and {} samples", b0.len(), b1.len())));
    }
    let mut specs = (stft(b0, &opts.stft)?, stft(b1, &opts.stft)?);
    if let Some(cfg) = &opts.wpe {
        specs = wpe_pair(&specs.0, &specs.1, cfg)?;
    }
    let (s0, s1) = specs;
    let frames = s0.frames();
    let w = opts.window_frames;
    let w0 = frame_windows(&s0, w)?;
    let w1 = frame_windows(&s1, w)?;
    let mut parts = Vec::with_capacity(w0.len());
    for (c0, c1) in w0.chunks(opts.batch_size.max(1)).zip(w1.chunks(opts.batch_size.max(1))) {
        let x0 = Mat::hstack(&c0.iter().map(|(m, _)| m).collect::<Vec<_>>())?;
        let x1 = Mat::hstack(&c1.iter().map(|(m, _)| m).collect::<Vec<_>>())?;
        let y = enhancer.estimate(&x0, &x1, w)?;
        if y.shape() != x0.shape() {
            return Err(Error::shape(format!("enhancer returned {}x{}", y.rows(), y.cols())));
        }
        for (k, (_, valid)) in c0.iter().enumerate() {
            parts.push(y.cols_range(k * w, k * w + valid));
        }
    }
    let magnitude = Mat::hstack(&parts.iter().collect::<Vec<_>>())?;
    debug_assert_eq!(magnitude.cols(), frames);
    let waveform = resynthesize(&magnitude, &s0, &opts.stft, b0.len())?;
    let mag: Vec<f64> = magnitude.as_slice().iter().map(|&v| v.max(0.0) as f64).collect();
    Ok(Enhanced {
        magnitude: Spectrogram::from_magnitude(frames, mag)?,
        waveform,
    })
}
