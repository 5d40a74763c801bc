use serde::{Deserialize, Serialize};

use super::AudioBuffer;

/// A level in dB relative to full scale, with silence kept explicit so it
/// never turns into a NaN downstream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "db", rename_all = "snake_case")]
pub enum Decibels {
    Silence,
    Level(f64),
}

impl Decibels {
    pub fn from_linear(rms: f64) -> Self {
        if rms > 0.0 {
            Decibels::Level(20.0 * rms.log10())
        } else {
            Decibels::Silence
        }
    }

    /// `f64::NEG_INFINITY` for silence.
    pub fn as_f64(self) -> f64 {
        match self {
            Decibels::Silence => f64::NEG_INFINITY,
            Decibels::Level(db) => db,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerMeasure {
    pub window_start: usize,
    pub window_len: usize,
    pub rms: f64,
    pub rms_db: Decibels,
}

impl PowerMeasure {
    /// Mean square over the window (RMS squared).
    pub fn mean_square(&self) -> f64 {
        self.rms * self.rms
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("window [{start}, {start}+{len}) exceeds buffer of {available} samples")]
pub struct WindowOutOfRange {
    pub start: usize,
    pub len: usize,
    pub available: usize,
}

/// RMS over both channels jointly for the window `[start, start + len)`.
pub fn rms_power(
    buf: &AudioBuffer,
    start: usize,
    len: usize,
) -> Result<PowerMeasure, WindowOutOfRange> {
    let end = start.checked_add(len).filter(|&e| e <= buf.len());
    let Some(end) = end else {
        return Err(WindowOutOfRange {
            start,
            len,
            available: buf.len(),
        });
    };
    let rms = frames_rms(&buf.frames()[start..end]);
    Ok(PowerMeasure {
        window_start: start,
        window_len: len,
        rms,
        rms_db: Decibels::from_linear(rms),
    })
}

pub(crate) fn frames_rms(frames: &[[f32; 2]]) -> f64 {
    if frames.is_empty() {
        return 0.0;
    }
    let sum: f64 = frames
        .iter()
        .map(|f| {
            let l = f64::from(f[0]);
            let r = f64::from(f[1]);
            l * l + r * r
        })
        .sum();
    (sum / (2 * frames.len()) as f64).sqrt()
}
