//! Delay-and-sum beamforming over a linear array.
//!
//! Delays follow the plane-wave model `tau_m = offset_m * sin(aoi) / c`, where
//! `offset_m` is the microphone's position along the array axis relative to the
//! array centre and `aoi` is measured from broadside, positive towards the +axis
//! end. A positive `tau_m` delays channel `m`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dsp::{SampleBuffer, SAMPLE_RATE, SPEED_OF_SOUND};
use crate::error::{Error, Result};

/// Kinect-style microphone positions along the array axis, metres.
pub const KINECT_OFFSETS: [f64; 4] = [-0.113, 0.036, 0.076, 0.113];

/// Symmetric alternative (`-3.6 cm` in place of `+3.6 cm`, mirrored inner pair).
pub const SYMMETRIC_OFFSETS: [f64; 4] = [-0.113, -0.036, 0.036, 0.113];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformerConfig {
    pub mic_offsets: Vec<f64>,
    pub speed_of_sound: f64,
    /// Look direction, radians from broadside.
    pub look_aoi: f64,
}

impl BeamformerConfig {
    pub fn new(mic_offsets: Vec<f64>, look_aoi: f64) -> Result<Self> {
        let cfg = Self {
            mic_offsets,
            speed_of_sound: SPEED_OF_SOUND,
            look_aoi,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mic_offsets.is_empty() {
            return Err(Error::config("beamformer needs at least one microphone"));
        }
        if self.mic_offsets.iter().any(|o| !o.is_finite()) {
            return Err(Error::config("microphone offsets must be finite"));
        }
        if !(self.look_aoi.abs() <= PI / 2.0) {
            return Err(Error::config(format!(
                "look direction {} rad outside [-pi/2, pi/2]",
                self.look_aoi
            )));
        }
        if !(self.speed_of_sound > 0.0) {
            return Err(Error::config("speed of sound must be positive"));
        }
        Ok(())
    }

    pub fn mics(&self) -> usize {
        self.mic_offsets.len()
    }

    pub fn with_look(&self, look_aoi: f64) -> Self {
        Self {
            look_aoi,
            ..self.clone()
        }
    }

    fn delays_for(&self, aoi: f64) -> impl Iterator<Item = f64> + '_ {
        let s = aoi.sin() / self.speed_of_sound;
        self.mic_offsets.iter().map(move |d| d * s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringDelays {
    pub seconds: Vec<f64>,
    /// Nearest-sample delays at [`SAMPLE_RATE`].
    pub samples: Vec<i64>,
}

pub fn steering_delays(cfg: &BeamformerConfig) -> SteeringDelays {
    let seconds: Vec<f64> = cfg.delays_for(cfg.look_aoi).collect();
    let samples = seconds
        .iter()
        .map(|t| (t * SAMPLE_RATE as f64).round() as i64)
        .collect();
    SteeringDelays { seconds, samples }
}

/// `b(t) = sum_m y_m(t - delay_m)` with out-of-range reads as zero. No 1/M scaling.
pub fn delay_and_sum(channels: &[SampleBuffer], delays: &[i64]) -> Result<SampleBuffer> {
    let first = channels.first().ok_or(Error::Empty("channel list"))?;
    if delays.len() != channels.len() {
        return Err(Error::shape(format!(
            "{} channels but {} delays",
            channels.len(),
            delays.len()
        )));
    }
    let len = first.len();
    if let Some(bad) = channels.iter().find(|c| c.len() != len) {
        return Err(Error::shape(format!(
            "channel lengths differ: {} vs {}",
            len,
            bad.len()
        )));
    }
    let mut out = vec![0.0; len];
    for (ch, &d) in channels.iter().zip(delays) {
        let y = ch.samples();
        for (t, o) in out.iter_mut().enumerate() {
            let src = t as i64 - d;
            if src >= 0 && (src as usize) < len {
                *o += y[src as usize];
            }
        }
    }
    SampleBuffer::new(out)
}

/// Normalized narrowband array response towards `src_aoi` at `freq` Hz, in [0, 1].
///
/// Expects `0 < freq < 8000`.
pub fn narrowband_gain(cfg: &BeamformerConfig, src_aoi: f64, freq: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (ts, tl) in cfg.delays_for(src_aoi).zip(cfg.delays_for(cfg.look_aoi)) {
        let phase = 2.0 * PI * freq * (ts - tl);
        re += phase.cos();
        im += phase.sin();
    }
    (re * re + im * im).sqrt() / cfg.mics() as f64
}

/// Gain over an angle (degrees) by frequency (Hz) grid, row-major by angle.
pub fn beampattern(cfg: &BeamformerConfig, angles_deg: &[f64], freqs: &[f64]) -> Vec<(f64, f64, f64)> {
    angles_deg
        .iter()
        .flat_map(|&a| {
            freqs
                .iter()
                .map(move |&f| (a, f, narrowband_gain(cfg, a.to_radians(), f)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    #[test]
    fn broadside_has_zero_delays() {
        let d = steering_delays(&BeamformerConfig::new(KINECT_OFFSETS.to_vec(), 0.0).unwrap());
        assert!(d.seconds.iter().all(|&t| t == 0.0));
        assert!(d.samples.iter().all(|&t| t == 0));
    }

    #[test]
    fn endfire_and_thirty_degree_delays() {
        let d = steering_delays(&BeamformerConfig::new(vec![0.113], PI / 2.0).unwrap());
        assert!((d.seconds[0] - 3.2945e-4).abs() < 1e-8);
        assert_eq!(d.samples[0], 5);
        let d = steering_delays(&BeamformerConfig::new(vec![0.113], PI / 6.0).unwrap());
        assert!((d.seconds[0] - 1.6472e-4).abs() < 1e-8);
        assert_eq!(d.samples[0], 3);
    }

    #[test]
    fn delays_are_odd_in_look_direction() {
        for deg in [5.0f64, 17.0, 45.0, 80.0] {
            let p = steering_delays(&BeamformerConfig::new(KINECT_OFFSETS.to_vec(), deg.to_radians()).unwrap());
            let n = steering_delays(&BeamformerConfig::new(KINECT_OFFSETS.to_vec(), -deg.to_radians()).unwrap());
            for (a, b) in p.seconds.iter().zip(&n.seconds) {
                assert_eq!(*a, -b);
            }
        }
    }

    #[test]
    fn rejects_look_beyond_endfire() {
        assert!(BeamformerConfig::new(vec![0.0], 2.0).is_err());
    }

    #[test]
    fn identical_channels_sum_coherently() {
        let x = SampleBuffer::new(vec![1.0, -0.5, 0.25, 2.0]).unwrap();
        let out = delay_and_sum(&vec![x.clone(); 4], &[0; 4]).unwrap();
        assert_eq!(out, x.scaled(4.0));
    }

    #[test]
    fn shifted_copies_realign_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let base = gaussian(&mut rng, 200);
        let delays = [3i64, -2, 0, 5];
        // Channel m is the base signal advanced by delay_m, so delaying it by
        // delay_m restores the original alignment.
        let channels: Vec<SampleBuffer> = delays
            .iter()
            .map(|&d| {
                let s = (0..200)
                    .map(|t| {
                        let i = t as i64 + d;
                        if (0..200).contains(&i) { base[i as usize] } else { 0.0 }
                    })
                    .collect();
                SampleBuffer::new(s).unwrap()
            })
            .collect();
        let out = delay_and_sum(&channels, &delays).unwrap();
        for t in 10..190 {
            assert!((out.samples()[t] - 4.0 * base[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let a = SampleBuffer::zeros(4);
        let b = SampleBuffer::zeros(5);
        assert!(delay_and_sum(&[a, b], &[0, 0]).is_err());
    }

    #[test]
    fn incoherent_noise_adds_in_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let channels: Vec<SampleBuffer> = (0..4)
            .map(|_| SampleBuffer::new(gaussian(&mut rng, 16000)).unwrap())
            .collect();
        let single = channels[0].power();
        let out = delay_and_sum(&channels, &[0, 1, 2, 3]).unwrap();
        let ratio = out.power() / single;
        assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
    }

    #[test]
    fn gain_is_one_in_look_direction() {
        for deg in [-60.0f64, 0.0, 30.0, 75.0] {
            let cfg = BeamformerConfig::new(KINECT_OFFSETS.to_vec(), deg.to_radians()).unwrap();
            for f in [100.0, 1000.0, 4000.0, 7900.0] {
                assert!((narrowband_gain(&cfg, deg.to_radians(), f) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn half_wavelength_pair_nulls_endfire() {
        let f = 1000.0;
        let spacing = SPEED_OF_SOUND / f / 2.0;
        let cfg = BeamformerConfig::new(vec![0.0, spacing], 0.0).unwrap();
        assert!(narrowband_gain(&cfg, PI / 2.0, f) < 1e-12);
    }

    #[test]
    fn kinect_gain_matches_phasor_sum() {
        let cfg = BeamformerConfig::new(KINECT_OFFSETS.to_vec(), 0.0).unwrap();
        let src = 45f64.to_radians();
        // Independent evaluation with complex exponentials.
        let sum: rustfft::num_complex::Complex64 = KINECT_OFFSETS
            .iter()
            .map(|d| {
                let tau = d * src.sin() / SPEED_OF_SOUND;
                rustfft::num_complex::Complex64::from_polar(1.0, 2.0 * PI * 1000.0 * tau)
            })
            .sum();
        let expected = sum.norm() / 4.0;
        let got = narrowband_gain(&cfg, src, 1000.0);
        assert!((got - expected).abs() < 1e-12);
        assert!(got < 1.0 && got > 0.0);
    }

    #[test]
    fn white_noise_array_gain_is_ten_log_m() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut improvements = Vec::new();
        for _ in 0..20 {
            let target = gaussian(&mut rng, 8000);
            let channels: Vec<Vec<f64>> = (0..4).map(|_| gaussian(&mut rng, 8000)).collect();
            let noise_out = delay_and_sum(
                &channels.iter().map(|c| SampleBuffer::new(c.clone()).unwrap()).collect::<Vec<_>>(),
                &[0; 4],
            )
            .unwrap();
            let snr_in = crate::dsp::mean_power(&target) / crate::dsp::mean_power(&channels[0]);
            let snr_out = crate::dsp::mean_power(&target) * 16.0 / noise_out.power();
            improvements.push(10.0 * (snr_out / snr_in).log10());
        }
        let mean = improvements.iter().sum::<f64>() / improvements.len() as f64;
        assert!((mean - 6.02).abs() < 0.5, "mean improvement {mean}");
    }
}
