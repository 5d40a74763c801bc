//! Text-to-music generation under a fixed clip contract.

mod synth;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::audio::{decode_wav, encode_wav, AudioBuffer, CHANNELS, SAMPLE_RATE};
use crate::backend::{BackendError, Timed};

pub use synth::{mock_synthesize, prompt_instruments, CLICK_PEAK, MOODY_GAIN_DB, NOISE_BED_DBFS};

/// Every generated clip is this long.
pub const CLIP_SECONDS: f64 = 15.0;
/// Allowed relative deviation from the clip length after decoding.
pub const LENGTH_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub duration_seconds: f64,
    pub sample_rate: u32,
    pub channels: u16,
    pub bpm_hint: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, bpm_hint: f64) -> Self {
        Self {
            prompt: prompt.into(),
            duration_seconds: CLIP_SECONDS,
            sample_rate: SAMPLE_RATE,
            channels: CHANNELS,
            bpm_hint,
            seed: None,
        }
    }

    pub fn expected_samples(&self) -> usize {
        (self.duration_seconds * f64::from(self.sample_rate)).round() as usize
    }
}

#[derive(Debug, Clone)]
pub struct GenerationResult {
    pub audio: AudioBuffer,
    pub request: GenerationRequest,
    pub backend_latency: Duration,
    pub simulated: bool,
    pub cost_units: f64,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerationError {
    #[error("generation backend unavailable: {0}")]
    BackendUnavailable(BackendError),
    #[error("generated audio violates the clip contract: {0}")]
    ContractViolation(String),
    #[error("generation timed out after {0:?}")]
    Timeout(Duration),
}

/// A text-to-music service returning a WAV file.
pub trait GenerationBackend: Send + Sync {
    fn generate(&self, req: &GenerationRequest) -> Result<Timed<Vec<u8>>, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationPolicy {
    pub timeout: Duration,
    pub cost_per_call: f64,
}

impl Default for GenerationPolicy {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(30),
            cost_per_call: 0.14,
        }
    }
}

/// Checks a decoded clip against the request.
pub fn check_contract(req: &GenerationRequest, audio: &AudioBuffer) -> Result<(), GenerationError> {
    if req.duration_seconds != CLIP_SECONDS || req.sample_rate != SAMPLE_RATE || req.channels != CHANNELS {
        return Err(GenerationError::ContractViolation(format!(
            "request must be {CLIP_SECONDS} s stereo at {SAMPLE_RATE} Hz"
        )));
    }
    if !audio.is_engine_rate() {
        return Err(GenerationError::ContractViolation(format!(
            "sample rate {} Hz",
            audio.sample_rate()
        )));
    }
    let want = req.expected_samples() as f64;
    let got = audio.len() as f64;
    if (got - want).abs() > want * LENGTH_TOLERANCE {
        return Err(GenerationError::ContractViolation(format!(
            "clip is {:.3} s, expected {:.3} s",
            got / f64::from(SAMPLE_RATE),
            req.duration_seconds
        )));
    }
    Ok(())
}

/// Runs one generation, retrying once on a transient failure.
pub fn generate(
    req: &GenerationRequest,
    backend: &dyn GenerationBackend,
    policy: &GenerationPolicy,
) -> Result<GenerationResult, GenerationError> {
    let mut attempts = 0;
    let mut spent = Duration::ZERO;
    let reply = loop {
        attempts += 1;
        let outcome = backend.generate(req).and_then(|r| {
            if r.latency > policy.timeout {
                Err(BackendError::Timeout(policy.timeout))
            } else {
                Ok(r)
            }
        });
        match outcome {
            Ok(r) => break r,
            Err(e) if e.is_transient() && attempts < 2 => {
                if let BackendError::Timeout(t) = e {
                    spent += t;
                }
            }
            Err(BackendError::Timeout(t)) => return Err(GenerationError::Timeout(t)),
            Err(e) => return Err(GenerationError::BackendUnavailable(e)),
        }
    };
    let audio = decode_wav(&reply.value)
        .map_err(|e| GenerationError::ContractViolation(format!("undecodable audio: {e}")))?;
    check_contract(req, &audio)?;
    Ok(GenerationResult {
        audio,
        request: req.clone(),
        backend_latency: spent + reply.latency,
        simulated: reply.simulated,
        cost_units: policy.cost_per_call * f64::from(attempts),
        attempts,
    })
}

/// Local synthesizer with a configurable reported latency.
#[derive(Debug, Clone, Default)]
pub struct MockGenerationBackend {
    pub latency: Duration,
}

impl MockGenerationBackend {
    pub fn new(latency: Duration) -> Self {
        Self { latency }
    }
}

impl GenerationBackend for MockGenerationBackend {
    fn generate(&self, req: &GenerationRequest) -> Result<Timed<Vec<u8>>, BackendError> {
        Ok(Timed::simulated(encode_wav(&mock_synthesize(req)), self.latency))
    }
}

/// JSON-over-HTTPS adapter: posts `{prompt, duration, sample_rate, seed}` and
/// expects WAV bytes back.
#[derive(Debug, Clone)]
pub struct LiveGenerationBackend {
    pub endpoint: String,
    pub api_key: String,
    pub timeout: Duration,
}

impl GenerationBackend for LiveGenerationBackend {
    fn generate(&self, req: &GenerationRequest) -> Result<Timed<Vec<u8>>, BackendError> {
        let mut body = serde_json::json!({
            "prompt": req.prompt,
            "duration": req.duration_seconds,
            "sample_rate": req.sample_rate,
            "output_format": "wav",
        });
        if let Some(seed) = req.seed {
            body["seed"] = seed.into();
        }
        let started = Instant::now();
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let bytes = client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .header(reqwest::header::ACCEPT, "audio/wav")
            .json(&body)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.bytes())
            .map_err(|e| crate::backend::http_error(e, self.timeout))?;
        Ok(Timed::measured(bytes.to_vec(), started.elapsed()))
    }
}
