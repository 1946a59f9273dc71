//! Waveform and time-frequency primitives.
//!
//! Everything in here works in 64-bit floats. Signals are mono and sampled at
//! [`SAMPLE_RATE`]; the rest of the pipeline relies on the sample-count
//! constants that follow from it (400-sample frames, 160-sample hop, 512-point
//! FFT, 257 bins).

mod signal;
mod stft;

pub use signal::{
    convolve, measure_snr_db, mean_power, scale_noise_to_snr, snr_scale_factor, ImpulseResponse,
    SampleBuffer,
};
pub use stft::{
    istft, istft_with_floor, reflect_pad_frames, stft, SpecKind, Spectrogram, StftConfig, WindowKind, BINS,
};

/// Sample rate of every signal in the pipeline, in Hz.
pub const SAMPLE_RATE: u32 = 16_000;

/// Speed of sound used for propagation delays and steering, in m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;
