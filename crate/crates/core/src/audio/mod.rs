//! Stereo sample buffers, the RIFF/WAVE interchange codec and RMS metering.
//!
//! Every buffer that reaches the loop engine is stereo at [`SAMPLE_RATE`].
//! Samples are stored as interleaved `[left, right]` frames of `f32` in
//! `[-1.0, 1.0]`; all arithmetic on them is done in `f64`.

mod buffer;
pub(crate) mod power;
mod wav;

pub use buffer::{AudioBuffer, Frame};
pub use power::{rms_power, Decibels, PowerMeasure};
pub use wav::{decode_wav, encode_wav, resample_linear, WavError};

/// Engine sample rate in Hz.
pub const SAMPLE_RATE: u32 = 44_100;

/// Engine channel count.
pub const CHANNELS: u16 = 2;
