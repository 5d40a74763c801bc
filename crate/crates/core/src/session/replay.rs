use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use crate::backend::BackendError;
use crate::caption::{CaptureFrame, RecordedCaptionBackend, VisionInstructions};
use crate::config::{BackendMode, ConfigError};
use crate::generation::MockGenerationBackend;

use super::driver::{mock_mix, prompt_tables};
use super::{Backends, EventLog, EventPayload, Orchestrator, Simulation, Stage};

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("event {seq} refers to unknown capture {capture}")]
    UnknownCapture { seq: u64, capture: u64 },
}

/// Re-runs a recorded session against mock services in virtual time.
///
/// Captures and controls are fed back at their logged times. Captions come
/// from the log itself (raw answer and latency), so sessions captured against
/// a live vision service replay exactly; generation and mixing use the mocks
/// with the logged configuration.
pub fn replay(log: &EventLog) -> Result<Simulation, ReplayError> {
    let mut config = log.header.config.clone();
    config.caption_backend = BackendMode::Mock;
    config.generation_backend = BackendMode::Mock;
    config.mix_backend = BackendMode::Mock;

    let captions = RecordedCaptionBackend::new();
    let mut shas: HashMap<u64, String> = HashMap::new();
    for e in &log.events {
        let sha = |capture: &u64| {
            shas.get(capture).cloned().ok_or(ReplayError::UnknownCapture {
                seq: e.seq,
                capture: *capture,
            })
        };
        match &e.payload {
            EventPayload::Capture { capture, sha256, .. } => {
                shas.insert(*capture, sha256.clone());
            }
            EventPayload::CaptionReady {
                capture,
                raw,
                latency_us,
                ..
            } => captions.push(&sha(capture)?, raw.clone(), Duration::from_micros(*latency_us)),
            EventPayload::Error {
                stage: Stage::Caption,
                capture: Some(capture),
                latency_us,
                ..
            } => captions.push_failure(
                &sha(capture)?,
                BackendError::Timeout(Duration::from_micros(latency_us.unwrap_or(0))),
            ),
            _ => {}
        }
    }

    let backends = Backends {
        caption: Arc::new(captions),
        generation: Arc::new(MockGenerationBackend::new(Duration::from_millis(config.latencies.generation_ms))),
        mix: Arc::new(mock_mix(&config)),
        instructions: VisionInstructions::default(),
        mix_live: false,
    };
    let tables = prompt_tables(&config)?;
    let orch = Orchestrator::new(log.header.session.clone(), config, tables);
    let mut sim = Simulation::new(orch, backends);
    for e in &log.events {
        match &e.payload {
            EventPayload::Capture {
                sha256,
                width,
                height,
                instruments,
                ..
            } => sim.schedule_capture(
                e.at_us,
                CaptureFrame::recorded(sha256.clone(), *width, *height, e.at_us),
                instruments.clone(),
            ),
            EventPayload::Control { control } => sim.schedule_control(e.at_us, control.clone()),
            _ => {}
        }
    }
    sim.run();
    Ok(sim)
}
