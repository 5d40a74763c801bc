//! Deterministic stand-in for a text-to-music model.
//!
//! Output depends only on the prompt text and tempo hint. Each instrument
//! named before the first "section" word of the prompt adds one tempo-locked
//! layer; with none named the result is a quiet noise bed.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::audio::{AudioBuffer, SAMPLE_RATE};
use crate::prompt::Instrument;

use super::GenerationRequest;

/// Peak level of a percussion click.
pub const CLICK_PEAK: f64 = 0.8;
/// RMS of the fallback noise bed, in dBFS.
pub const NOISE_BED_DBFS: f64 = -30.0;
/// Gain applied when the prompt asks for a "moody" sound.
pub const MOODY_GAIN_DB: f64 = -6.0;

const KEYS_ATTACK_S: f64 = 0.1;
const CLICK_DECAY_S: f64 = 0.004;
const CLICK_TONE_HZ: f64 = 2_000.0;
const BASS_HZ: f64 = 55.0;
const RAMP_S: f64 = 0.01;

const CHORDS: [[f64; 3]; 4] = [
    [220.00, 261.63, 329.63],
    [196.00, 246.94, 293.66],
    [174.61, 220.00, 261.63],
    [164.81, 196.00, 246.94],
];

/// Instruments named in the instrumentation part of a prompt.
pub fn prompt_instruments(prompt: &str) -> Vec<Instrument> {
    let head = prompt.split(" section").next().unwrap_or("");
    let words: Vec<&str> = head
        .split(|c: char| !c.is_ascii_alphabetic())
        .filter(|w| !w.is_empty())
        .collect();
    Instrument::ALL
        .into_iter()
        .filter(|i| words.contains(&i.as_str()))
        .collect()
}

fn prompt_words(prompt: &str) -> impl Iterator<Item = &str> {
    prompt
        .split(|c: char| !c.is_ascii_alphabetic())
        .filter(|w| !w.is_empty())
}

fn seed(req: &GenerationRequest) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(req.prompt.as_bytes());
    h.update(req.bpm_hint.to_le_bytes());
    h.finalize().into()
}

pub fn mock_synthesize(req: &GenerationRequest) -> AudioBuffer {
    let sr = f64::from(SAMPLE_RATE);
    let len = (req.duration_seconds * sr).round() as usize;
    let digest = seed(req);
    let mut rng = ChaCha8Rng::from_seed(digest);
    let beat = 60.0 / req.bpm_hint;
    let beat_samples = beat * sr;
    let instruments = prompt_instruments(&req.prompt);
    let gain = if prompt_words(&req.prompt).any(|w| w == "moody") {
        10f64.powf(MOODY_GAIN_DB / 20.0)
    } else {
        1.0
    };

    let mut left = vec![0.0f64; len];
    let mut right = vec![0.0f64; len];

    if instruments.is_empty() {
        // uniform noise on [-a, a] has RMS a/sqrt(3)
        let a = 10f64.powf(NOISE_BED_DBFS / 20.0) * 3f64.sqrt();
        for (l, r) in left.iter_mut().zip(right.iter_mut()) {
            *l = rng.gen_range(-a..a);
            *r = rng.gen_range(-a..a);
        }
    }

    for inst in &instruments {
        match inst {
            Instrument::Percussion => {
                let click_len = (CLICK_DECAY_S * 8.0 * sr) as usize;
                let mut k = 0usize;
                loop {
                    let onset = (k as f64 * beat_samples).round() as usize;
                    if onset >= len {
                        break;
                    }
                    for i in 0..click_len.min(len - onset) {
                        let t = i as f64 / sr;
                        let v = CLICK_PEAK * (-t / CLICK_DECAY_S).exp() * (TAU * CLICK_TONE_HZ * t).cos();
                        left[onset + i] += v;
                        right[onset + i] += v;
                    }
                    k += 1;
                }
            }
            Instrument::Keys => {
                let chord = CHORDS[usize::from(digest[0]) % CHORDS.len()];
                let attack = KEYS_ATTACK_S * sr;
                for n in 0..len {
                    let t = n as f64 / sr;
                    let env = (n as f64 / attack).min(1.0);
                    let v: f64 = chord.iter().map(|f| (TAU * f * t).sin()).sum::<f64>() * 0.1 * env;
                    left[n] += v;
                    right[n] += v;
                }
            }
            Instrument::Bass => {
                let bar = 4.0 * beat;
                for n in 0..len {
                    let t = n as f64 / sr;
                    let phase = t % bar;
                    // on for three beats of every bar, with short ramps
                    let on = 3.0 * beat;
                    let env = if phase < on {
                        (phase / RAMP_S).min(1.0).min((on - phase) / RAMP_S)
                    } else {
                        0.0
                    };
                    let v = 0.35 * env * (TAU * BASS_HZ * t).sin();
                    left[n] += v;
                    right[n] += v;
                }
            }
            Instrument::Guitar => {
                let root = [110.0, 146.83, 164.81][usize::from(digest[1]) % 3];
                let eighth = beat / 2.0;
                let alpha = 1.0 - (-TAU * 1_200.0 / sr).exp();
                let mut lp = 0.0f64;
                for n in 0..len {
                    let t = n as f64 / sr;
                    let saw = 2.0 * ((root * t) % 1.0) - 1.0;
                    lp += alpha * (saw - lp);
                    let since = t % eighth;
                    let env = (since / RAMP_S).min(1.0) * (-since / (eighth * 0.6)).exp();
                    let v = 0.18 * env * lp;
                    left[n] += 0.6 * v;
                    right[n] += 0.4 * v;
                }
            }
        }
    }

    let frames = left
        .iter()
        .zip(&right)
        .map(|(&l, &r)| [(l * gain) as f32, (r * gain) as f32])
        .collect();
    AudioBuffer::new(SAMPLE_RATE, frames)
}
