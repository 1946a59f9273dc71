//! Dataset-level evaluation of an enhancer against the unprocessed beam-0 signal.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{check_files, load_manifest, load_utterance, Condition, Split};
use crate::dsp::stft;
use crate::enhance::{enhance_signals, EnhanceOptions, Enhancer, Passthrough};
use crate::error::{Error, Result};
use crate::metrics::{segmental_snr, si_sdr, spectral_log_mse};
use crate::nn::{Fusion, InputMode};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub log_mse_db: f64,
    pub si_sdr_db: f64,
    pub seg_snr_db: f64,
}

/// Means over utterances. `log_mse_linear` averages `10^(dB/10)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub log_mse_db: f64,
    pub log_mse_linear: f64,
    pub si_sdr_db: f64,
    pub seg_snr_db: f64,
}

impl Aggregate {
    fn of(sets: &[MetricSet]) -> Self {
        let n = sets.len().max(1) as f64;
        let mean = |f: fn(&MetricSet) -> f64| sets.iter().map(f).sum::<f64>() / n;
        Self {
            log_mse_db: mean(|m| m.log_mse_db),
            log_mse_linear: mean(|m| 10f64.powf(m.log_mse_db / 10.0)),
            si_sdr_db: mean(|m| m.si_sdr_db),
            seg_snr_db: mean(|m| m.seg_snr_db),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceMetrics {
    pub id: String,
    pub enhanced: MetricSet,
    pub baseline: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub model_id: String,
    pub condition: Condition,
    pub split: Split,
    pub window_frames: usize,
    pub fusion: Option<Fusion>,
    pub input_mode: Option<InputMode>,
    pub wpe: bool,
    pub count: usize,
    pub enhanced: Aggregate,
    pub baseline: Aggregate,
    /// Reserved for recognition results from external tooling; always null here.
    pub wer: Option<f64>,
    pub utterances: Vec<UtteranceMetrics>,
}

/// How the evaluated model is labelled in the report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelLabel {
    pub id: String,
    pub fusion: Option<Fusion>,
    pub input_mode: Option<InputMode>,
}

/// Enhances every utterance of the dataset at `path` and scores it, and the
/// unprocessed beam-0 signal, against the dry target.
pub fn evaluate(path: &Path, enhancer: &dyn Enhancer, label: &ModelLabel, opts: &EnhanceOptions) -> Result<EvalReport> {
    let (manifest, dir) = load_manifest(path)?;
    check_files(&manifest, &dir)?;
    let opts = EnhanceOptions {
        stft: manifest.stft,
        ..opts.clone()
    };
    let baseline_opts = EnhanceOptions {
        wpe: None,
        ..opts.clone()
    };
    let utterances: Vec<UtteranceMetrics> = manifest
        .entries
        .par_iter()
        .map(|entry| -> Result<UtteranceMetrics> {
            let (b0, b1, s0) = load_utterance(entry, &dir)?;
            let s0 = s0.resized(b0.len());
            let reference = stft(&s0, &opts.stft)?.magnitude();
            let score = |enhancer: &dyn Enhancer, o: &EnhanceOptions| -> Result<MetricSet> {
                let out = enhance_signals(&b0, &b1, enhancer, o)?;
                Ok(MetricSet {
                    log_mse_db: spectral_log_mse(&out.magnitude, &reference)?,
                    si_sdr_db: si_sdr(&out.waveform, &s0)?,
                    seg_snr_db: segmental_snr(&out.waveform, &s0)?,
                })
            };
            Ok(UtteranceMetrics {
                id: entry.id.clone(),
                enhanced: score(enhancer, &opts)?,
                baseline: score(&Passthrough, &baseline_opts)?,
            })
        })
        .collect::<Result<_>>()?;
    let enhanced: Vec<MetricSet> = utterances.iter().map(|u| u.enhanced).collect();
    let baseline: Vec<MetricSet> = utterances.iter().map(|u| u.baseline).collect();
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        model_id: label.id.clone(),
        condition: manifest.condition,
        split: manifest.split,
        window_frames: opts.window_frames,
        fusion: label.fusion,
        input_mode: label.input_mode,
        wpe: opts.wpe.is_some(),
        count: utterances.len(),
        enhanced: Aggregate::of(&enhanced),
        baseline: Aggregate::of(&baseline),
        wer: None,
        utterances,
    })
}

/// Mean of reports from repeated training runs on the same dataset and
/// window. Aggregates are averaged; per-utterance rows are dropped.
pub fn mean_report(reports: &[EvalReport]) -> Result<EvalReport> {
    let first = reports.first().ok_or(Error::Empty("reports"))?;
    if reports
        .iter()
        .any(|r| (r.condition, r.split, r.window_frames, r.count) != (first.condition, first.split, first.window_frames, first.count))
    {
        return Err(Error::shape("reports cover different datasets or windows"));
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&EvalReport) -> &Aggregate| Aggregate {
        log_mse_db: reports.iter().map(|r| f(r).log_mse_db).sum::<f64>() / n,
        log_mse_linear: reports.iter().map(|r| f(r).log_mse_linear).sum::<f64>() / n,
        si_sdr_db: reports.iter().map(|r| f(r).si_sdr_db).sum::<f64>() / n,
        seg_snr_db: reports.iter().map(|r| f(r).seg_snr_db).sum::<f64>() / n,
    };
    Ok(EvalReport {
        model_id: format!("mean of {}", reports.len()),
        enhanced: mean(|r| &r.enhanced),
        baseline: mean(|r| &r.baseline),
        utterances: Vec::new(),
        ..first.clone()
    })
}

/// Plain-text table with one row per report.
pub fn format_table(reports: &[EvalReport]) -> String {
    let header = [
        "condition", "window", "fusion", "input", "wpe", "n", "logmse", "logmse_b0", "sisdr", "sisdr_b0", "segsnr",
        "segsnr_b0",
    ];
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let label = |v: Option<String>| v.unwrap_or_else(|| "-".into());
            vec![
                r.condition.as_str().to_string(),
                r.window_frames.to_string(),
                label(r.fusion.map(|f| format!("{f:?}").to_lowercase())),
                label(r.input_mode.map(|m| format!("{m:?}").to_lowercase())),
                if r.wpe { "yes" } else { "no" }.to_string(),
                r.count.to_string(),
                format!("{:.2}", r.enhanced.log_mse_db),
                format!("{:.2}", r.baseline.log_mse_db),
                format!("{:.2}", r.enhanced.si_sdr_db),
                format!("{:.2}", r.baseline.si_sdr_db),
                format!("{:.2}", r.enhanced.seg_snr_db),
                format!("{:.2}", r.baseline.seg_snr_db),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i < 5 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(header.to_vec());
    for r in &rows {
        line(r.iter().map(String::as_str).collect());
    }
    out
}
