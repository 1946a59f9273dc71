//! WAV I/O. Pipeline audio is 16-bit signed PCM, mono, 16 kHz; anything else is
//! rejected on read. Impulse responses can additionally be written as 32-bit float.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::dsp::{SampleBuffer, SAMPLE_RATE};
use crate::error::{Error, Result};

const PCM_SCALE: f64 = 32768.0;

fn pcm16_spec() -> WavSpec {
    WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    }
}

fn wav_err(path: &Path, source: hound::Error) -> Error {
    match source {
        hound::Error::IoError(e) => Error::io(path, e),
        other => Error::Wav {
            path: path.to_path_buf(),
            source: other,
        },
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<SampleBuffer> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    let reject = |reason: String| Error::AudioFormat {
        path: path.to_path_buf(),
        reason,
    };
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(reject(format!(
            "expected 16-bit PCM, found {:?} {}-bit",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    if spec.channels != 1 {
        return Err(reject(format!("expected mono, found {} channels", spec.channels)));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(reject(format!(
            "expected {SAMPLE_RATE} Hz, found {} Hz",
            spec.sample_rate
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / PCM_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| wav_err(path, e))?;
    SampleBuffer::new(samples)
}

/// Writes 16-bit PCM; samples outside [-1, 1) are clipped.
pub fn write_wav(path: impl AsRef<Path>, signal: &SampleBuffer) -> Result<()> {
    let path = path.as_ref();
    let mut writer = WavWriter::create(path, pcm16_spec()).map_err(|e| wav_err(path, e))?;
    for &s in signal.samples() {
        let v = (s * PCM_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        writer.write_sample(v).map_err(|e| wav_err(path, e))?;
    }
    writer.finalize().map_err(|e| wav_err(path, e))
}

/// Writes 32-bit float mono WAV (used for impulse responses).
pub fn write_wav_f32(path: impl AsRef<Path>, samples: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    for &s in samples {
        writer.write_sample(s as f32).map_err(|e| wav_err(path, e))?;
    }
    writer.finalize().map_err(|e| wav_err(path, e))
}

/// Quantizes to the 16-bit grid used by [`write_wav`], without touching disk.
pub fn quantize_pcm16(signal: &SampleBuffer) -> SampleBuffer {
    let samples = signal
        .samples()
        .iter()
        .map(|&s| (s * PCM_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) / PCM_SCALE)
        .collect();
    SampleBuffer::new(samples).expect("quantized samples are finite")
}
