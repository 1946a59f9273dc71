//! Single-channel delayed linear-prediction dereverberation, run independently
//! on each frequency bin of a complex spectrogram.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::Spectrogram;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WpeConfig {
    /// Prediction filter length per bin.
    pub taps: usize,
    /// Frames between the current frame and the newest frame used for prediction.
    pub delay: usize,
    #[serde(rename = "iters")]
    pub iterations: usize,
    /// Lower bound on the per-frame variance estimate.
    pub floor: f64,
    /// Additional lower bound as a fraction of the bin's mean input power.
    pub relative_floor: f64,
}

impl Default for WpeConfig {
    fn default() -> Self {
        Self {
            taps: 10,
            delay: 3,
            iterations: 3,
            floor: 1e-10,
            relative_floor: 1e-4,
        }
    }
}

impl WpeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.taps == 0 || self.delay == 0 || self.iterations == 0 {
            return Err(Error::config("WPE taps, delay and iterations must all be at least 1"));
        }
        if !(self.floor > 0.0) || !(self.relative_floor >= 0.0) {
            return Err(Error::config("WPE variance floors must be positive"));
        }
        Ok(())
    }
}

/// Dereverberates one bin trajectory.
pub fn wpe_trajectory(x: &[Complex64], cfg: &WpeConfig) -> Vec<Complex64> {
    let k = cfg.taps;
    let delayed = |f: usize, j: usize| -> Complex64 {
        let back = cfg.delay + j;
        if f >= back {
            x[f - back]
        } else {
            Complex64::default()
        }
    };
    let mean_power = x.iter().map(|c| c.norm_sqr()).sum::<f64>() / x.len().max(1) as f64;
    let floor = cfg.floor.max(cfg.relative_floor * mean_power);
    let mut d = x.to_vec();
    for _ in 0..cfg.iterations {
        let mut r = vec![Complex64::default(); k * k];
        let mut p = vec![Complex64::default(); k];
        for f in cfg.delay..x.len() {
            let w = 1.0 / d[f].norm_sqr().max(floor);
            for i in 0..k {
                let xi = delayed(f, i);
                if xi == Complex64::default() {
                    continue;
                }
                p[i] += xi * x[f].conj() * w;
                for j in 0..k {
                    r[i * k + j] += xi * delayed(f, j).conj() * w;
                }
            }
        }
        let trace: f64 = (0..k).map(|i| r[i * k + i].re).sum();
        let loading = 1e-8 * trace / k as f64;
        for i in 0..k {
            r[i * k + i] += loading;
        }
        let Some(g) = solve(r, p, k) else { break };
        for f in 0..x.len() {
            let mut pred = Complex64::default();
            for (j, gj) in g.iter().enumerate() {
                pred += gj.conj() * delayed(f, j);
            }
            d[f] = x[f] - pred;
        }
    }
    // The weighted fit can add energy on bins with nothing predictable; keep the input there.
    if d.iter().map(|c| c.norm_sqr()).sum::<f64>() > mean_power * x.len() as f64 {
        return x.to_vec();
    }
    d
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting; `None`
/// when the system is singular.
fn solve(mut a: Vec<Complex64>, mut b: Vec<Complex64>, n: usize) -> Option<Vec<Complex64>> {
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i * n + col].norm().total_cmp(&a[j * n + col].norm()))?;
        if a[pivot * n + col].norm() == 0.0 {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                a.swap(pivot * n + j, col * n + j);
            }
            b.swap(pivot, col);
        }
        let inv = 1.0 / a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] * inv;
            if factor == Complex64::default() {
                continue;
            }
            for j in col..n {
                let v = a[col * n + j];
                a[row * n + j] -= factor * v;
            }
            let v = b[col];
            b[row] -= factor * v;
        }
    }
    let mut x = vec![Complex64::default(); n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for j in row + 1..n {
            s -= a[row * n + j] * x[j];
        }
        x[row] = s / a[row * n + row];
    }
    Some(x)
}

pub fn wpe_single(spec: &Spectrogram, cfg: &WpeConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    let values = spec.complex_values().ok_or(Error::PhaseRequired)?;
    let frames = spec.frames();
    if frames <= cfg.delay + cfg.taps {
        return Err(Error::shape(format!(
            "dereverberation needs more than {} frames, got {frames}",
            cfg.delay + cfg.taps
        )));
    }
    let out: Vec<Complex64> = values
        .par_chunks(frames)
        .flat_map_iter(|bin| wpe_trajectory(bin, cfg))
        .collect();
    Spectrogram::from_complex(frames, out)
}

/// Applies [`wpe_single`] to each beam independently.
pub fn wpe_pair(b0: &Spectrogram, b1: &Spectrogram, cfg: &WpeConfig) -> Result<(Spectrogram, Spectrogram)> {
    Ok((wpe_single(b0, cfg)?, wpe_single(b1, cfg)?))
}
