use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{
    convolve, reflect_pad_frames, snr_scale_factor, stft, SampleBuffer, Spectrogram, StftConfig, SAMPLE_RATE,
};
use crate::error::{Error, Result};
use crate::nn::AnalysisWindow;
use crate::room::RirQuadruple;
use crate::tensor::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    NoReverb,
    RirMatched,
    RirMulticondition,
    TimeVaryingSnr,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::NoReverb,
        Condition::RirMatched,
        Condition::RirMulticondition,
        Condition::TimeVaryingSnr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::NoReverb => "no_reverb",
            Condition::RirMatched => "rir_matched",
            Condition::RirMulticondition => "rir_multicondition",
            Condition::TimeVaryingSnr => "time_varying_snr",
        }
    }

    pub fn is_reverberant(self) -> bool {
        self != Condition::NoReverb
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown condition `{s}`")))
    }
}

/// Per-utterance mixing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    /// SNR of beam 0 in dB.
    pub snr_b0: f64,
    /// Beam 1 is mixed at `snr_b0 + snr_offset_b1`.
    pub snr_offset_b1: f64,
    pub seed: u64,
    pub condition: Condition,
}

pub const SNR_RANGE_DB: (f64, f64) = (0.0, 15.0);
pub const B1_OFFSET_DB: f64 = -3.0;

impl MixSpec {
    /// Draws `snr_b0` uniformly from [`SNR_RANGE_DB`].
    pub fn draw(seed: u64, condition: Condition) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            snr_b0: rng.random_range(SNR_RANGE_DB.0..=SNR_RANGE_DB.1),
            snr_offset_b1: B1_OFFSET_DB,
            seed,
            condition,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(SNR_RANGE_DB.0..=SNR_RANGE_DB.1).contains(&self.snr_b0) {
            return Err(Error::config(format!("snr_b0 {} dB outside [0, 15]", self.snr_b0)));
        }
        if self.snr_offset_b1 != B1_OFFSET_DB {
            return Err(Error::config("beam 1 must be mixed 3 dB below beam 0"));
        }
        Ok(())
    }

    pub fn snr_b1(&self) -> f64 {
        self.snr_b0 + self.snr_offset_b1
    }
}

/// Straight-line back-and-forth movement of the target speaker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub start_dist: f64,
    pub end_dist: f64,
    pub speed_kmh: f64,
    /// Distance at which the gain is 1.
    pub ref_dist: f64,
}

impl Default for Trajectory {
    fn default() -> Self {
        Self {
            start_dist: 1.0,
            end_dist: 3.0,
            speed_kmh: 5.0,
            ref_dist: 2.0,
        }
    }
}

impl Trajectory {
    pub fn reversed(&self) -> Self {
        Self {
            start_dist: self.end_dist,
            end_dist: self.start_dist,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start_dist > 0.0 && self.end_dist > 0.0 && self.ref_dist > 0.0) {
            return Err(Error::Geometry("trajectory distances must be positive".into()));
        }
        if !(self.speed_kmh > 0.0) {
            return Err(Error::config("trajectory speed must be positive"));
        }
        let (lo, hi) = (self.start_dist.min(self.end_dist), self.start_dist.max(self.end_dist));
        if !(lo..=hi).contains(&self.ref_dist) {
            return Err(Error::Geometry("reference distance must lie on the trajectory".into()));
        }
        Ok(())
    }

    pub fn speed_mps(&self) -> f64 {
        self.speed_kmh / 3.6
    }

    /// Samples needed to travel from one end to the other.
    pub fn leg_samples(&self) -> f64 {
        (self.end_dist - self.start_dist).abs() / self.speed_mps() * SAMPLE_RATE as f64
    }

    /// Distance at sample `t`, turning around at either end.
    pub fn distance_at(&self, t: usize) -> f64 {
        let leg = (self.end_dist - self.start_dist).abs();
        if leg == 0.0 {
            return self.start_dist;
        }
        let travelled = t as f64 * self.speed_mps() / SAMPLE_RATE as f64;
        let phase = travelled % (2.0 * leg);
        let along = if phase <= leg { phase } else { 2.0 * leg - phase };
        self.start_dist + (self.end_dist - self.start_dist).signum() * along
    }

    pub fn gain_at(&self, t: usize) -> f64 {
        (self.ref_dist / self.distance_at(t)).powi(2)
    }
}

/// Scales sample `t` by `(ref_dist / x(t))^2`.
pub fn apply_moving_gain(signal: &SampleBuffer, traj: &Trajectory) -> Result<SampleBuffer> {
    traj.validate()?;
    let out = signal
        .samples()
        .iter()
        .enumerate()
        .map(|(t, &v)| v * traj.gain_at(t))
        .collect();
    SampleBuffer::new(out)
}

/// Beam signals, the dry target, and the four mixed components.
#[derive(Debug, Clone, PartialEq)]
pub struct UtterancePair {
    pub b0: SampleBuffer,
    pub b1: SampleBuffer,
    pub s0_ref: SampleBuffer,
    pub speech_b0: SampleBuffer,
    pub noise_b0: SampleBuffer,
    pub speech_b1: SampleBuffer,
    pub noise_b1: SampleBuffer,
}

fn truncate_noise(clean: &SampleBuffer, noise: &SampleBuffer) -> Result<SampleBuffer> {
    if noise.len() < clean.len() {
        return Err(Error::SignalTooShort {
            len: noise.len(),
            needed: clean.len(),
        });
    }
    Ok(noise.resized(clean.len()))
}

pub fn mix_no_reverb(clean: &SampleBuffer, noise: &SampleBuffer, spec: &MixSpec) -> Result<UtterancePair> {
    let noise = truncate_noise(clean, noise)?;
    let a0 = snr_scale_factor(clean.samples(), noise.samples(), spec.snr_b0)?;
    let a1 = snr_scale_factor(clean.samples(), noise.samples(), spec.snr_b1())?;
    let (n0, n1) = (noise.scaled(a0), noise.scaled(a1));
    Ok(UtterancePair {
        b0: clean.add(&n0),
        b1: clean.add(&n1),
        s0_ref: clean.clone(),
        speech_b0: clean.clone(),
        noise_b0: n0,
        speech_b1: clean.clone(),
        noise_b1: n1,
    })
}

/// Reverberant mix through the beamformed responses.
pub fn mix_reverberant(
    clean: &SampleBuffer,
    noise: &SampleBuffer,
    quad: &RirQuadruple,
    spec: &MixSpec,
) -> Result<UtterancePair> {
    mix_convolved(clean, clean, noise, quad, spec)
}

/// Reverberant mix with the speaker moving along `traj`. The noise gain is
/// set from the stationary speech, so the SNR holds where the gain is 1.
pub fn mix_moving(
    clean: &SampleBuffer,
    noise: &SampleBuffer,
    quad: &RirQuadruple,
    spec: &MixSpec,
    traj: &Trajectory,
) -> Result<UtterancePair> {
    let moving = apply_moving_gain(clean, traj)?;
    mix_convolved(clean, &moving, noise, quad, spec)
}

fn mix_convolved(
    clean: &SampleBuffer,
    speech: &SampleBuffer,
    noise: &SampleBuffer,
    quad: &RirQuadruple,
    spec: &MixSpec,
) -> Result<UtterancePair> {
    let noise = truncate_noise(clean, noise)?;
    let mut parts = [
        convolve(clean, &quad.h00)?,
        convolve(&noise, &quad.h01)?,
        convolve(clean, &quad.h10)?,
        convolve(&noise, &quad.h11)?,
    ];
    let len = parts.iter().map(SampleBuffer::len).max().unwrap_or(0);
    for p in &mut parts {
        *p = p.resized(len);
    }
    let [s0, n0, s1, n1] = parts;
    if n0.power() == 0.0 || n1.power() == 0.0 {
        return Err(Error::DegenerateSignal("noise path"));
    }
    let a0 = snr_scale_factor(s0.samples(), n0.samples(), spec.snr_b0)?;
    let a1 = snr_scale_factor(s1.samples(), n1.samples(), spec.snr_b1())?;
    let (speech_b0, speech_b1) = if std::ptr::eq(clean, speech) {
        (s0, s1)
    } else {
        (
            convolve(speech, &quad.h00)?.resized(len),
            convolve(speech, &quad.h10)?.resized(len),
        )
    };
    let (noise_b0, noise_b1) = (n0.scaled(a0), n1.scaled(a1));
    Ok(UtterancePair {
        b0: speech_b0.add(&noise_b0),
        b1: speech_b1.add(&noise_b1),
        s0_ref: clean.delayed(quad.h00.first_arrival()).resized(len),
        speech_b0,
        noise_b0,
        speech_b1,
        noise_b1,
    })
}

/// Magnitude spectrogram as a `bins x frames` matrix.
pub fn magnitude_mat(spec: &Spectrogram) -> Mat<f32> {
    let m = spec.magnitude();
    let values = m.magnitude_values().expect("magnitude spectrogram");
    Mat::from_vec(spec.bins(), spec.frames(), values.iter().map(|&v| v as f32).collect())
        .expect("bin-major layout")
}

/// Cuts a spectrogram into consecutive `window_frames`-wide magnitude windows,
/// reflect-padding the last. Returns each window with its count of real frames.
pub fn frame_windows(spec: &Spectrogram, window_frames: usize) -> Result<Vec<(Mat<f32>, usize)>> {
    let frames = spec.frames();
    let padded = magnitude_mat(&reflect_pad_frames(spec, window_frames)?);
    Ok((0..padded.cols() / window_frames)
        .map(|w| {
            let start = w * window_frames;
            (padded.cols_range(start, start + window_frames), frames.saturating_sub(start).min(window_frames))
        })
        .collect())
}

pub fn check_window_frames(window_frames: usize) -> Result<()> {
    if !matches!(window_frames, 160 | 320 | 640) {
        return Err(Error::config(format!(
            "window must be 160, 320 or 640 frames, got {window_frames}"
        )));
    }
    Ok(())
}

/// Analysis windows from beam signals and the target; the target is cut or
/// zero-padded to the length of `b0` first.
pub fn segment_signals(
    b0: &SampleBuffer,
    b1: &SampleBuffer,
    s0: &SampleBuffer,
    cfg: &StftConfig,
    window_frames: usize,
) -> Result<Vec<AnalysisWindow>> {
    check_window_frames(window_frames)?;
    let s0 = s0.resized(b0.len());
    let specs = [stft(b0, cfg)?, stft(b1, cfg)?, stft(&s0, cfg)?];
    if specs[0].frames() != specs[1].frames() {
        return Err(Error::shape(format!(
            "beam signals have {} and {} frames",
            specs[0].frames(),
            specs[1].frames()
        )));
    }
    let [w0, w1, wt] = specs.map(|s| frame_windows(&s, window_frames));
    Ok(w0?
        .into_iter()
        .zip(w1?)
        .zip(wt?)
        .map(|(((b0, valid), (b1, _)), (target, _))| AnalysisWindow {
            b0,
            b1,
            target,
            valid_frames: valid,
        })
        .collect())
}

pub fn segment_windows(pair: &UtterancePair, cfg: &StftConfig, window_frames: usize) -> Result<Vec<AnalysisWindow>> {
    segment_signals(&pair.b0, &pair.b1, &pair.s0_ref, cfg, window_frames)
}
