//! Synthetic stand-in corpus: speech-like utterances built from formant-shaped
//! syllables with pauses, and babble made by summing several of them.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{derive_seed, Split};
use crate::dsp::{SampleBuffer, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::wav::write_wav;

const FS: f64 = SAMPLE_RATE as f64;
const TARGET_RMS: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub min_secs: f64,
    pub max_secs: f64,
    /// Length of the generated noise file.
    pub noise_secs: f64,
    pub babble_talkers: usize,
    /// Level of the white floor added to the noise file, in dB relative to the babble.
    pub noise_floor_db: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            train: 100,
            dev: 20,
            test: 20,
            min_secs: 2.5,
            max_secs: 3.5,
            noise_secs: 60.0,
            babble_talkers: 8,
            noise_floor_db: -30.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_secs > 0.1) || self.max_secs < self.min_secs {
            return Err(Error::config("utterance duration range must satisfy 0.1 < min <= max"));
        }
        if self.noise_secs < self.max_secs {
            return Err(Error::config("noise must be at least as long as the longest utterance"));
        }
        if self.babble_talkers == 0 {
            return Err(Error::config("babble needs at least one talker"));
        }
        if !self.noise_floor_db.is_finite() {
            return Err(Error::config("noise floor level must be finite"));
        }
        Ok(())
    }

    fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Dev => self.dev,
            Split::Test => self.test,
        }
    }
}

struct Shaper {
    planner: FftPlanner<f64>,
}

impl Shaper {
    fn new() -> Self {
        Self {
            planner: FftPlanner::new(),
        }
    }

    fn plans(&mut self, n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
        (self.planner.plan_fft_forward(n), self.planner.plan_fft_inverse(n))
    }

    /// Filters `x` with a zero-phase magnitude response `gain(freq_hz)`.
    fn shape(&mut self, x: &[f64], gain: impl Fn(f64) -> f64) -> Vec<f64> {
        let n = (2 * x.len()).next_power_of_two();
        let (fwd, inv) = self.plans(n);
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        buf.resize(n, Complex64::default());
        fwd.process(&mut buf);
        for (k, c) in buf.iter_mut().enumerate() {
            let bin = k.min(n - k);
            *c *= gain(bin as f64 * FS / n as f64);
        }
        inv.process(&mut buf);
        buf[..x.len()].iter().map(|c| c.re / n as f64).collect()
    }
}

fn formant_envelope(freq: f64, formants: &[(f64, f64, f64)]) -> f64 {
    let tilt = 1.0 / (1.0 + (freq / 1500.0).powi(2)).sqrt();
    let highpass = freq / (freq + 80.0);
    let peaks: f64 = formants
        .iter()
        .map(|&(f, bw, a)| a * (-(freq - f).powi(2) / (2.0 * bw * bw)).exp())
        .sum();
    tilt * highpass * (peaks + 0.02)
}

fn normalize_rms(x: &mut [f64], rms: f64) {
    let p = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    if p > 0.0 {
        let g = rms / p;
        x.iter_mut().for_each(|v| *v *= g);
    }
}

fn syllable(rng: &mut ChaCha8Rng, shaper: &mut Shaper, len: usize, f0: f64) -> Vec<f64> {
    let voiced = rng.random_bool(0.7);
    let excitation: Vec<f64> = if voiced {
        let glide = rng.random_range(0.9..1.1);
        let mut phase = rng.random_range(0.0..1.0);
        (0..len)
            .map(|i| {
                let f = f0 * (1.0 + (glide - 1.0) * i as f64 / len as f64);
                phase += f / FS;
                let pulse = if phase >= 1.0 {
                    phase -= 1.0;
                    1.0
                } else {
                    0.0
                };
                let aspiration: f64 = StandardNormal.sample(&mut *rng);
                pulse + 0.02 * aspiration
            })
            .collect()
    } else {
        (0..len).map(|_| StandardNormal.sample(&mut *rng)).collect()
    };
    let formants: Vec<(f64, f64, f64)> = if voiced {
        vec![
            (rng.random_range(300.0..850.0), 80.0, 1.0),
            (rng.random_range(850.0..2300.0), 120.0, 0.6),
            (rng.random_range(2300.0..3300.0), 180.0, 0.3),
        ]
    } else {
        vec![(rng.random_range(2500.0..5000.0), 800.0, 4.0)]
    };
    let mut out = shaper.shape(&excitation, |f| formant_envelope(f, &formants));
    normalize_rms(&mut out, 1.0);
    let amp = rng.random_range(0.3..1.0);
    for (i, v) in out.iter_mut().enumerate() {
        let w = (std::f64::consts::PI * (i as f64 + 0.5) / len as f64).sin();
        *v *= amp * w;
    }
    out
}

fn utterance_samples(rng: &mut ChaCha8Rng, shaper: &mut Shaper, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    let secs = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| (rng.random_range(lo..hi) * FS) as usize;
    let f0 = rng.random_range(90.0..220.0);
    let tail = secs(rng, 0.05, 0.15);
    let mut t = secs(rng, 0.1, 0.25);
    while t + tail < len {
        let n = secs(rng, 0.10, 0.28).min(len - tail - t);
        if n < 160 {
            break;
        }
        let s = syllable(rng, shaper, n, f0);
        out[t..t + n].iter_mut().zip(&s).for_each(|(o, v)| *o += v);
        t += n + secs(rng, 0.02, 0.08);
        if rng.random_bool(0.15) {
            t += secs(rng, 0.15, 0.35);
        }
    }
    normalize_rms(&mut out, TARGET_RMS);
    out
}

/// One speech-like utterance of `len` samples.
pub fn synth_utterance(seed: u64, len: usize) -> SampleBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = utterance_samples(&mut rng, &mut Shaper::new(), len);
    SampleBuffer::new(samples).expect("synthetic samples are finite")
}

/// Sum of `talkers` independent synthetic talkers, each speaking continuously.
pub fn synth_babble(seed: u64, len: usize, talkers: usize) -> SampleBuffer {
    let streams: Vec<Vec<f64>> = (0..talkers as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "talker", k));
            let mut shaper = Shaper::new();
            let mut s = Vec::with_capacity(len);
            while s.len() < len {
                let n = (rng.random_range(2.0..4.0) * FS) as usize;
                s.extend(utterance_samples(&mut rng, &mut shaper, n));
            }
            s.truncate(len);
            s
        })
        .collect();
    let mut out = vec![0.0; len];
    for s in &streams {
        out.iter_mut().zip(s).for_each(|(o, v)| *o += v);
    }
    normalize_rms(&mut out, TARGET_RMS);
    SampleBuffer::new(out).expect("synthetic samples are finite")
}

/// File name of utterance `index` in a corpus split.
pub fn utterance_name(index: usize) -> String {
    format!("utt{index:04}.wav")
}

/// Writes `<dir>/{train,dev,test}/uttNNNN.wav` and `<dir>/noise.wav`.
/// Returns the path of the noise file.
pub fn write_synthetic_corpus(dir: &Path, cfg: &SynthConfig, seed: u64) -> Result<PathBuf> {
    cfg.validate()?;
    for split in Split::ALL {
        let sub = dir.join(split.as_str());
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        (0..cfg.count(split)).into_par_iter().try_for_each(|i| {
            let useed = derive_seed(seed, split.as_str(), i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(useed);
            let len = (rng.random_range(cfg.min_secs..=cfg.max_secs) * FS) as usize;
            write_wav(sub.join(utterance_name(i)), &synth_utterance(rng.random(), len))
        })?;
    }
    let noise_path = dir.join("noise.wav");
    let babble = synth_babble(derive_seed(seed, "babble", 0), (cfg.noise_secs * FS) as usize, cfg.babble_talkers);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "floor", 0));
    let floor = TARGET_RMS * 10f64.powf(cfg.noise_floor_db / 20.0);
    let noise: Vec<f64> = babble
        .samples()
        .iter()
        .map(|v| {
            let g: f64 = StandardNormal.sample(&mut rng);
            v + floor * g
        })
        .collect();
    write_wav(&noise_path, &SampleBuffer::new(noise)?)?;
    Ok(noise_path)
}

/// Sorted `.wav` files of one corpus split.
pub fn list_split(corpus_dir: &Path, split: Split) -> Result<Vec<PathBuf>> {
    let dir = corpus_dir.join(split.as_str());
    let entries = std::fs::read_dir(&dir).map_err(|_| Error::MissingFiles(vec![dir.clone()]))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::MissingFiles(vec![dir.join("*.wav")]));
    }
    Ok(files)
}
