//! Append-only session event log and its line-delimited JSON file format.
//!
//! The first line is a [`LogHeader`]; every further line is one
//! [`SessionEvent`].

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::caption::{SceneCaption, SectionRole};
use crate::config::Config;
use crate::mix::{JobStatus, MixKind};
use crate::prompt::{InstrumentSelection, SessionLock};
use crate::scheduler::SwapReason;

pub const LOG_SCHEMA: &str = "scenetone.session";
pub const LOG_VERSION: u32 = 1;

pub type CaptureId = u64;

/// Requests routed to the session besides captures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Control {
    SetAutoMix { enabled: bool },
    SelectInstruments { instruments: InstrumentSelection },
    Master,
    Export,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Caption,
    Prompt,
    Generation,
    Schedule,
    Mix,
    Swap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventPayload {
    Capture {
        capture: CaptureId,
        sha256: String,
        width: u32,
        height: u32,
        instruments: InstrumentSelection,
    },
    CaptionReady {
        capture: CaptureId,
        caption: SceneCaption,
        /// Backend answer the caption was parsed from.
        raw: String,
        latency_us: u64,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        warnings: Vec<String>,
    },
    SessionLocked {
        lock: SessionLock,
    },
    GenerationReady {
        capture: CaptureId,
        prompt: String,
        latency_us: u64,
        samples: usize,
        attempts: u32,
    },
    SectionScheduled {
        capture: CaptureId,
        section: usize,
        role: SectionRole,
        bars: u32,
        start_s: f64,
        start_sample: i64,
        nominal_start_s: f64,
        length_s: f64,
        envelope: String,
        prompt: String,
    },
    MixSubmitted {
        job: u64,
        mix: MixKind,
        task_id: String,
        stems: usize,
    },
    MixStatus {
        job: u64,
        mix: MixKind,
        status: JobStatus,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
    },
    SwapCommitted {
        ticket: u64,
        reason: SwapReason,
        job: Option<u64>,
        boundary_s: f64,
        boundary_sample: i64,
    },
    Control {
        control: Control,
    },
    Error {
        stage: Stage,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        capture: Option<CaptureId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        job: Option<u64>,
        message: String,
        /// Backend time spent before the failure, when known.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        latency_us: Option<u64>,
    },
}

impl EventPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            EventPayload::Capture { .. } => "capture",
            EventPayload::CaptionReady { .. } => "caption_ready",
            EventPayload::SessionLocked { .. } => "session_locked",
            EventPayload::GenerationReady { .. } => "generation_ready",
            EventPayload::SectionScheduled { .. } => "section_scheduled",
            EventPayload::MixSubmitted { .. } => "mix_submitted",
            EventPayload::MixStatus { .. } => "mix_status",
            EventPayload::SwapCommitted { .. } => "swap_committed",
            EventPayload::Control { .. } => "control",
            EventPayload::Error { .. } => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    /// Strictly increasing from 1.
    pub seq: u64,
    /// Session wall clock, microseconds.
    pub at_us: u64,
    #[serde(flatten)]
    pub payload: EventPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub schema: String,
    pub version: u32,
    pub session: String,
    pub config: Config,
}

impl LogHeader {
    pub fn new(session: &str, config: &Config) -> Self {
        Self {
            schema: LOG_SCHEMA.into(),
            version: LOG_VERSION,
            session: session.into(),
            config: config.clone(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("not a session log (schema {0:?})")]
    Schema(String),
    #[error("unsupported log version {0}")]
    Version(u32),
    #[error("empty log")]
    Empty,
    #[error("line {line}: sequence {seq} does not follow {prev}")]
    Sequence { line: usize, seq: u64, prev: u64 },
}

/// A header plus the events that followed it.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub header: LogHeader,
    pub events: Vec<SessionEvent>,
}

impl EventLog {
    pub fn write_to(&self, mut w: impl Write) -> Result<(), LogError> {
        write_line(&mut w, &self.header)?;
        for e in &self.events {
            write_line(&mut w, e)?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("json is utf-8")
    }

    pub fn read_from(r: impl BufRead) -> Result<Self, LogError> {
        let mut lines = r.lines().enumerate().filter(|(_, l)| match l {
            Ok(l) => !l.trim().is_empty(),
            Err(_) => true,
        });
        let (_, first) = lines.next().ok_or(LogError::Empty)?;
        let header: LogHeader =
            serde_json::from_str(&first?).map_err(|source| LogError::Json { line: 1, source })?;
        if header.schema != LOG_SCHEMA {
            return Err(LogError::Schema(header.schema));
        }
        if header.version != LOG_VERSION {
            return Err(LogError::Version(header.version));
        }
        let mut events = Vec::new();
        let mut prev = 0;
        for (i, line) in lines {
            let e: SessionEvent = serde_json::from_str(&line?)
                .map_err(|source| LogError::Json { line: i + 1, source })?;
            if e.seq <= prev {
                return Err(LogError::Sequence {
                    line: i + 1,
                    seq: e.seq,
                    prev,
                });
            }
            prev = e.seq;
            events.push(e);
        }
        Ok(Self { header, events })
    }

    pub fn from_jsonl(text: &str) -> Result<Self, LogError> {
        Self::read_from(text.as_bytes())
    }
}

pub(crate) fn write_line<T: Serialize>(w: &mut impl Write, value: &T) -> Result<(), LogError> {
    serde_json::to_writer(&mut *w, value).map_err(|source| LogError::Json { line: 0, source })?;
    w.write_all(b"\n")?;
    Ok(())
}
