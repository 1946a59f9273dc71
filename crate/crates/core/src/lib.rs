//! Two-beam speech separation: room and array simulation, delay-and-sum
//! beamforming, a dilated temporal convolutional network with compact bilinear
//! fusion, linear-prediction dereverberation and signal-level evaluation.

pub mod beam;
pub mod cbp;
pub mod data;
pub mod dsp;
pub mod enhance;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod nn;
pub mod room;
pub mod tensor;
pub mod wav;
pub mod wpe;

pub use error::{Error, Result};
