//! The session state machine.
//!
//! [`Orchestrator`] owns all session state and is driven by three kinds of
//! input: captures, controls and backend completions. It never calls a
//! backend itself; it answers every input with [`Effect`]s that a driver
//! executes (virtually in [`Simulation`], on worker threads in the service)
//! and feeds back as [`Completion`]s. Time is the session wall clock in
//! microseconds, supplied by the driver with every input.

mod driver;
mod events;
mod replay;
mod report;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::audio::{encode_wav, AudioBuffer, Decibels, SAMPLE_RATE};
use crate::backend::Timed;
use crate::caption::{CaptionError, CaptionOutcome, CaptureFrame, SceneCaption, SectionRole, BPM_MAX, BPM_MIN};
use crate::config::Config;
use crate::crossfade::EnvelopeFamily;
use crate::device::{DisplayState, CAPTURE_LED, LEVEL_MAX};
use crate::generation::{GenerationError, GenerationRequest, GenerationResult};
use crate::mix::{
    master_stem, preview_stems, JobStatus, JobUpdate, MasterSettings, MixError, MixJob, MixJobs, MixKind,
    RemoteStatus, Stem, TaskHandle,
};
use crate::prompt::{build_prompt, InstrumentSelection, PromptError, PromptRecord, PromptTables, SessionLock};
use crate::scheduler::{
    from_micros, secs_f64, SectionAudio, SegmentOrigin, SessionClock, Seconds, SwapReason, Timeline,
    TimelineConfig,
};

pub use driver::{execute, prompt_tables, Backends, Executed, SimStats, Simulation, BLOCK_FRAMES, BUSY_RETRY};
pub use events::{
    CaptureId, Control, EventLog, EventPayload, LogError, LogHeader, SessionEvent, Stage, LOG_SCHEMA, LOG_VERSION,
};
pub use replay::{replay, ReplayError};
pub use report::{CostSummary, LatencyReport, ReportError, SectionLatency, StageStats};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("session is not active")]
    SessionNotActive,
    #[error("{pending} captures already pending")]
    Busy { pending: usize },
    #[error(transparent)]
    Instruments(#[from] PromptError),
    #[error("{0}")]
    InvalidState(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureState {
    Captioning,
    /// Captioned, waiting for the session lock or an earlier capture.
    Captioned,
    Generating,
    /// Generated, waiting for earlier captures to be scheduled.
    Generated,
    Scheduled,
    Failed,
}

impl CaptureState {
    pub fn is_pending(self) -> bool {
        !matches!(self, CaptureState::Scheduled | CaptureState::Failed)
    }
}

#[derive(Debug, Clone)]
pub struct CaptureRecord {
    pub id: CaptureId,
    pub at_us: u64,
    pub sha256: String,
    pub instruments: InstrumentSelection,
    pub state: CaptureState,
    pub caption: Option<SceneCaption>,
    pub caption_at_us: Option<u64>,
    pub prompt: Option<PromptRecord>,
    pub generated_at_us: Option<u64>,
    pub section: Option<usize>,
    pub scheduled_at_us: Option<u64>,
    /// Host compute spent on this capture, outside simulated service time.
    pub processing: Duration,
    audio: Option<Arc<AudioBuffer>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEntry {
    pub stage: Stage,
    pub units: f64,
    pub at_us: u64,
}

/// Work for a driver.
#[derive(Debug, Clone)]
pub enum Effect {
    Caption {
        capture: CaptureId,
        frame: CaptureFrame,
    },
    Generate {
        capture: CaptureId,
        request: GenerationRequest,
    },
    /// `job` is a pending copy for [`crate::mix::submit`].
    SubmitMix {
        job: MixJob,
        stems: Vec<Stem>,
        master: Option<MasterSettings>,
    },
    /// Poll (or take `pushed` as the status) after `after`.
    CheckMix {
        job: MixJob,
        pushed: Option<RemoteStatus>,
        after: Duration,
    },
    /// The service will call the webhook for `task_id` after `after`.
    ExpectWebhook { task_id: String, after: Duration },
    WakeAt { at_us: u64 },
}

impl Effect {
    /// How long after its emission the effect should run.
    pub fn due_in(&self, now_us: u64) -> Duration {
        match self {
            Effect::CheckMix { after, .. } | Effect::ExpectWebhook { after, .. } => *after,
            Effect::WakeAt { at_us } => Duration::from_micros(at_us.saturating_sub(now_us)),
            _ => Duration::ZERO,
        }
    }
}

/// A backend result coming back to the session.
#[derive(Debug, Clone)]
pub enum Completion {
    Caption {
        capture: CaptureId,
        outcome: Result<CaptionOutcome, CaptionError>,
        latency: Duration,
        /// Host compute spent producing the result.
        work: Duration,
    },
    Generation {
        capture: CaptureId,
        outcome: Result<GenerationResult, GenerationError>,
        latency: Duration,
        work: Duration,
    },
    MixSubmitted {
        job: MixJob,
        outcome: Result<Timed<TaskHandle>, MixError>,
    },
    MixChecked {
        job: MixJob,
        outcome: Result<JobUpdate, MixError>,
    },
    MixWebhook {
        task_id: String,
        status: RemoteStatus,
    },
    Wake,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlReply {
    Ack,
    Export(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub bpm: Option<f64>,
    pub genre: Option<String>,
    pub t_bar_s: Option<f64>,
    pub crossfade_s: Option<f64>,
    pub auto_mix: bool,
    pub master_requested: bool,
    pub instruments: InstrumentSelection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionSummary {
    pub index: usize,
    pub capture: CaptureId,
    pub role: SectionRole,
    pub start_s: f64,
    pub start_sample: i64,
    pub length_s: f64,
    pub bars: u32,
    pub prompt: String,
    pub envelope: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub start_s: f64,
    pub start_sample: i64,
    /// `section` or the swap reason.
    pub source: String,
    pub section: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSummary {
    pub id: u64,
    pub kind: MixKind,
    pub status: JobStatus,
    pub task_id: Option<String>,
    pub current: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingCapture {
    pub id: CaptureId,
    pub state: CaptureState,
}

/// Immutable view of the session at one queue position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub session: SessionSummary,
    pub sections: Vec<SectionSummary>,
    pub segments: Vec<SegmentSummary>,
    pub jobs: Vec<JobSummary>,
    pub pending_captures: Vec<PendingCapture>,
    pub display: DisplayState,
    /// Seconds since section 0 started; the last section loops past `end_s`.
    pub playhead_s: f64,
    pub end_s: f64,
    /// Sequence number of the last event applied.
    pub seq: u64,
}

pub(crate) fn envelope_label(family: Option<EnvelopeFamily>) -> String {
    match family {
        None => "none".into(),
        Some(EnvelopeFamily::EqualPower) => "equal_power".into(),
        Some(EnvelopeFamily::PowerLaw { alpha }) => format!("power_law({alpha})"),
    }
}

/// One composition session.
#[derive(Debug, Clone)]
pub struct Orchestrator {
    id: String,
    config: Config,
    tables: PromptTables,
    active: bool,
    lock: Option<SessionLock>,
    timeline: Option<Timeline>,
    /// Wall time at which timeline second 0 plays.
    epoch_us: Option<u64>,
    captures: Vec<CaptureRecord>,
    auto_mix: bool,
    master_requested: bool,
    instruments: InstrumentSelection,
    jobs: MixJobs,
    swap_jobs: HashMap<u64, u64>,
    events: Vec<SessionEvent>,
    costs: Vec<CostEntry>,
    last_wake: Option<u64>,
}

impl Orchestrator {
    pub fn new(id: impl Into<String>, config: Config, tables: PromptTables) -> Self {
        let auto_mix = config.auto_mix;
        Self {
            id: id.into(),
            config,
            tables,
            active: true,
            lock: None,
            timeline: None,
            epoch_us: None,
            captures: Vec::new(),
            auto_mix,
            master_requested: false,
            instruments: InstrumentSelection::new([crate::prompt::Instrument::Keys]).expect("one instrument"),
            jobs: MixJobs::new(),
            swap_jobs: HashMap::new(),
            events: Vec::new(),
            costs: Vec::new(),
            last_wake: None,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn lock(&self) -> Option<&SessionLock> {
        self.lock.as_ref()
    }

    pub fn clock(&self) -> Option<&SessionClock> {
        self.timeline.as_ref().map(Timeline::clock)
    }

    pub fn timeline(&self) -> Option<&Timeline> {
        self.timeline.as_ref()
    }

    pub fn epoch_us(&self) -> Option<u64> {
        self.epoch_us
    }

    pub fn captures(&self) -> &[CaptureRecord] {
        &self.captures
    }

    pub fn jobs(&self) -> &MixJobs {
        &self.jobs
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    pub fn events_since(&self, seq: u64) -> &[SessionEvent] {
        let i = self.events.partition_point(|e| e.seq <= seq);
        &self.events[i..]
    }

    pub fn last_seq(&self) -> u64 {
        self.events.last().map_or(0, |e| e.seq)
    }

    pub fn costs(&self) -> &[CostEntry] {
        &self.costs
    }

    pub fn auto_mix(&self) -> bool {
        self.auto_mix
    }

    pub fn instruments(&self) -> &InstrumentSelection {
        &self.instruments
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    /// Stops accepting captures; in-flight work still completes.
    pub fn close(&mut self) {
        self.active = false;
    }

    pub fn event_log(&self) -> EventLog {
        EventLog {
            header: LogHeader::new(&self.id, &self.config),
            events: self.events.clone(),
        }
    }

    pub fn pending_captures(&self) -> usize {
        self.captures.iter().filter(|c| c.state.is_pending()).count()
    }

    /// Offline render of the whole timeline, `[0, t_K + L_K)`.
    pub fn render(&self) -> Option<AudioBuffer> {
        self.timeline.as_ref().filter(|t| t.is_playing()).map(Timeline::render)
    }

    /// Timeline position of wall time `now_us`; negative before playback.
    pub fn timeline_time(&self, now_us: u64) -> Option<Seconds> {
        self.epoch_us.map(|e| from_micros(now_us) - from_micros(e))
    }

    fn log(&mut self, at_us: u64, payload: EventPayload) {
        let seq = self.last_seq() + 1;
        self.events.push(SessionEvent { seq, at_us, payload });
    }

    fn charge(&mut self, stage: Stage, units: f64, at_us: u64) {
        if units > 0.0 {
            self.costs.push(CostEntry { stage, units, at_us });
        }
    }

    fn tnow(&self, now_us: u64) -> Seconds {
        self.timeline_time(now_us).unwrap_or_else(|| Seconds::from_integer(0))
    }

    /// Accepts a captured frame and asks for its caption.
    pub fn capture(
        &mut self,
        now_us: u64,
        frame: CaptureFrame,
        instruments: InstrumentSelection,
    ) -> Result<(CaptureId, Vec<Effect>), SessionError> {
        if !self.active {
            return Err(SessionError::SessionNotActive);
        }
        let pending = self.pending_captures();
        if pending >= self.config.max_pending_captures {
            return Err(SessionError::Busy { pending });
        }
        let started = Instant::now();
        let mut fx = self.commit_swaps(now_us);
        let id = self.captures.len() as CaptureId;
        self.log(
            now_us,
            EventPayload::Capture {
                capture: id,
                sha256: frame.sha256().to_string(),
                width: frame.width,
                height: frame.height,
                instruments: instruments.clone(),
            },
        );
        self.captures.push(CaptureRecord {
            id,
            at_us: now_us,
            sha256: frame.sha256().to_string(),
            instruments,
            state: CaptureState::Captioning,
            caption: None,
            caption_at_us: None,
            prompt: None,
            generated_at_us: None,
            section: None,
            scheduled_at_us: None,
            processing: Duration::ZERO,
            audio: None,
        });
        fx.push(Effect::Caption { capture: id, frame });
        self.captures[id as usize].processing += started.elapsed();
        Ok((id, fx))
    }

    pub fn control(&mut self, now_us: u64, control: Control) -> Result<(ControlReply, Vec<Effect>), SessionError> {
        let mut fx = self.commit_swaps(now_us);
        let reply = match &control {
            Control::SetAutoMix { enabled } => {
                self.auto_mix = *enabled;
                self.log(now_us, EventPayload::Control { control: control.clone() });
                if self.auto_mix && self.sections_len() >= 2 {
                    fx.extend(self.submit_mix(now_us, MixKind::PreviewMix));
                }
                ControlReply::Ack
            }
            Control::SelectInstruments { instruments } => {
                self.instruments = instruments.clone();
                self.log(now_us, EventPayload::Control { control: control.clone() });
                ControlReply::Ack
            }
            Control::Master => {
                if self.sections_len() == 0 {
                    return Err(SessionError::InvalidState("nothing to master yet".into()));
                }
                self.master_requested = true;
                self.log(now_us, EventPayload::Control { control: control.clone() });
                fx.extend(self.submit_mix(now_us, MixKind::Master));
                ControlReply::Ack
            }
            Control::Export => {
                let audio = self
                    .render()
                    .ok_or_else(|| SessionError::InvalidState("no sections to export".into()))?;
                ControlReply::Export(encode_wav(&audio))
            }
        };
        fx.extend(self.wake_effect());
        Ok((reply, fx))
    }

    /// Applies a backend result.
    pub fn complete(&mut self, now_us: u64, completion: Completion) -> Vec<Effect> {
        let started = Instant::now();
        let mut fx = self.commit_swaps(now_us);
        let mut charged_to = None;
        match completion {
            Completion::Caption {
                capture,
                outcome,
                latency,
                work,
            } => {
                charged_to = Some((capture, work));
                self.on_caption(now_us, capture, outcome, latency);
                fx.extend(self.advance(now_us));
            }
            Completion::Generation {
                capture,
                outcome,
                latency,
                work,
            } => {
                charged_to = Some((capture, work));
                self.on_generation(now_us, capture, outcome, latency);
                fx.extend(self.advance(now_us));
            }
            Completion::MixSubmitted { job, outcome } => fx.extend(self.on_mix_submitted(now_us, job, outcome)),
            Completion::MixChecked { job, outcome } => fx.extend(self.on_mix_checked(now_us, job, outcome)),
            Completion::MixWebhook { task_id, status } => {
                if let Some(job) = self.jobs.by_task(&task_id) {
                    if self.jobs.is_current(job.id) && job.status == JobStatus::Processing {
                        fx.push(Effect::CheckMix {
                            job: job.clone(),
                            pushed: Some(status),
                            after: Duration::ZERO,
                        });
                    }
                }
            }
            Completion::Wake => {}
        }
        fx.extend(self.wake_effect());
        if let Some((capture, work)) = charged_to {
            if let Some(c) = self.captures.get_mut(capture as usize) {
                c.processing += work + started.elapsed();
            }
        }
        fx
    }

    fn sections_len(&self) -> usize {
        self.timeline.as_ref().map_or(0, |t| t.sections().len())
    }

    fn on_caption(
        &mut self,
        now_us: u64,
        capture: CaptureId,
        outcome: Result<CaptionOutcome, CaptionError>,
        latency: Duration,
    ) {
        let Some(rec) = self.captures.get(capture as usize) else {
            return;
        };
        if rec.state != CaptureState::Captioning {
            return;
        }
        let latency_us = latency.as_micros() as u64;
        match outcome {
            Ok(out) => {
                let units = self.config.costs.caption * f64::from(out.attempts);
                self.charge(Stage::Caption, units, now_us);
                self.log(
                    now_us,
                    EventPayload::CaptionReady {
                        capture,
                        caption: out.caption.clone(),
                        raw: out.raw,
                        latency_us,
                        warnings: out.warnings,
                    },
                );
                let rec = &mut self.captures[capture as usize];
                rec.caption = Some(out.caption);
                rec.caption_at_us = Some(now_us);
                rec.state = CaptureState::Captioned;
            }
            Err(e) => self.fail(now_us, capture, Stage::Caption, e.to_string(), Some(latency_us)),
        }
    }

    fn on_generation(
        &mut self,
        now_us: u64,
        capture: CaptureId,
        outcome: Result<GenerationResult, GenerationError>,
        latency: Duration,
    ) {
        let Some(rec) = self.captures.get(capture as usize) else {
            return;
        };
        if rec.state != CaptureState::Generating {
            return;
        }
        let latency_us = latency.as_micros() as u64;
        match outcome {
            Ok(res) => {
                self.charge(Stage::Generation, res.cost_units, now_us);
                self.log(
                    now_us,
                    EventPayload::GenerationReady {
                        capture,
                        prompt: res.request.prompt.clone(),
                        latency_us,
                        samples: res.audio.len(),
                        attempts: res.attempts,
                    },
                );
                let rec = &mut self.captures[capture as usize];
                rec.audio = Some(Arc::new(res.audio));
                rec.generated_at_us = Some(now_us);
                rec.state = CaptureState::Generated;
            }
            Err(e) => self.fail(now_us, capture, Stage::Generation, e.to_string(), Some(latency_us)),
        }
    }

    fn fail(&mut self, now_us: u64, capture: CaptureId, stage: Stage, message: String, latency_us: Option<u64>) {
        self.captures[capture as usize].state = CaptureState::Failed;
        self.captures[capture as usize].audio = None;
        self.log(
            now_us,
            EventPayload::Error {
                stage,
                capture: Some(capture),
                job: None,
                message,
                latency_us,
            },
        );
    }

    fn is_ambient(&self, caption: &SceneCaption) -> bool {
        let hook = &self.config.ambient;
        hook.enabled
            && hook.keywords.iter().any(|k| {
                let k = k.to_lowercase();
                caption.genre.to_lowercase().contains(&k) || caption.mood.iter().any(|m| m.to_lowercase() == k)
            })
    }

    /// Moves captures forward in capture order: lock, prompt, schedule.
    fn advance(&mut self, now_us: u64) -> Vec<Effect> {
        let mut fx = Vec::new();
        if self.lock.is_none() {
            let first = self.captures.iter().find(|c| c.state != CaptureState::Failed);
            if let Some(caption) = first.and_then(|c| c.caption.clone()) {
                self.lock_session(now_us, &caption);
            }
        }
        if self.lock.is_some() {
            let mut k = 0;
            for i in 0..self.captures.len() {
                match self.captures[i].state {
                    CaptureState::Failed => continue,
                    CaptureState::Captioned => fx.extend(self.request_generation(now_us, i, k)),
                    _ => {}
                }
                if self.captures[i].state != CaptureState::Failed {
                    k += 1;
                }
            }
        }
        for i in 0..self.captures.len() {
            match self.captures[i].state {
                CaptureState::Failed | CaptureState::Scheduled => continue,
                CaptureState::Generated => fx.extend(self.schedule(now_us, i)),
                _ => break,
            }
        }
        fx
    }

    fn lock_session(&mut self, now_us: u64, caption: &SceneCaption) {
        let bpm = caption.bpm.unwrap_or(self.config.default_bpm).clamp(BPM_MIN, BPM_MAX);
        let genre = if caption.genre.trim().is_empty() {
            self.tables.fallback_genre.clone()
        } else {
            caption.genre.clone()
        };
        let clock = SessionClock::new(bpm).expect("clamped tempo is in range");
        let tl_config = TimelineConfig {
            lookahead: from_micros(self.config.lookahead_ms * 1000),
            policy: self.config.policy.clone(),
            ambient_max_delta_db: self.config.ambient.enabled.then_some(self.config.ambient.max_delta_db),
        };
        self.timeline = Some(Timeline::new(clock, tl_config));
        let lock = SessionLock { genre, bpm };
        self.lock = Some(lock.clone());
        self.log(now_us, EventPayload::SessionLocked { lock });
    }

    fn request_generation(&mut self, now_us: u64, i: usize, k: usize) -> Vec<Effect> {
        let lock = self.lock.clone().expect("locked");
        let rec = &self.captures[i];
        let caption = rec.caption.as_ref().expect("captioned");
        match build_prompt(caption, &rec.instruments, k, Some(&lock), &self.tables) {
            Ok(prompt) => {
                let request = GenerationRequest::new(prompt.text.clone(), lock.bpm);
                let rec = &mut self.captures[i];
                rec.prompt = Some(prompt);
                rec.state = CaptureState::Generating;
                vec![Effect::Generate {
                    capture: rec.id,
                    request,
                }]
            }
            Err(e) => {
                let id = rec.id;
                self.fail(now_us, id, Stage::Prompt, e.to_string(), None);
                Vec::new()
            }
        }
    }

    fn schedule(&mut self, now_us: u64, i: usize) -> Vec<Effect> {
        let rec = &self.captures[i];
        let caption = rec.caption.clone().expect("captioned");
        let audio = SectionAudio {
            clip: rec.audio.clone().expect("generated"),
            role: caption.section_role,
            ambient: self.is_ambient(&caption),
        };
        let first = self.epoch_us.is_none();
        if first {
            self.epoch_us = Some(now_us);
        }
        let t = self.tnow(now_us);
        let timeline = self.timeline.as_mut().expect("locked before scheduling");
        match timeline.append_section(audio, t) {
            Ok(sec) => {
                let payload = EventPayload::SectionScheduled {
                    capture: i as CaptureId,
                    section: sec.index,
                    role: sec.role,
                    bars: sec.bar_count,
                    start_s: secs_f64(sec.start),
                    start_sample: crate::scheduler::to_samples(sec.start),
                    nominal_start_s: secs_f64(sec.nominal_start),
                    length_s: secs_f64(sec.length),
                    envelope: envelope_label((sec.index > 0).then_some(sec.crossfade.family)),
                    prompt: self.captures[i].prompt.as_ref().map(|p| p.text.clone()).unwrap_or_default(),
                };
                let index = sec.index;
                self.log(now_us, payload);
                let rec = &mut self.captures[i];
                rec.state = CaptureState::Scheduled;
                rec.section = Some(index);
                rec.scheduled_at_us = Some(now_us);
                let mut fx = Vec::new();
                if self.auto_mix && index >= 1 {
                    fx.extend(self.submit_mix(now_us, MixKind::PreviewMix));
                }
                if self.master_requested {
                    fx.extend(self.submit_mix(now_us, MixKind::Master));
                }
                fx
            }
            Err(e) => {
                if first {
                    self.epoch_us = None;
                }
                let id = i as CaptureId;
                self.fail(now_us, id, Stage::Schedule, e.to_string(), None);
                Vec::new()
            }
        }
    }

    fn submit_mix(&mut self, now_us: u64, kind: MixKind) -> Vec<Effect> {
        let Some(timeline) = self.timeline.as_ref() else {
            return Vec::new();
        };
        let style = self.lock.as_ref().map(|l| l.genre.clone()).unwrap_or_default();
        let defaults = self.config.stem_defaults;
        let built = match kind {
            MixKind::PreviewMix => preview_stems(timeline.sections(), &style, &defaults).map(|s| (s, None)),
            MixKind::Master => master_stem(timeline, &style, &defaults).map(|s| {
                (
                    vec![s],
                    Some(MasterSettings {
                        musical_style: style.clone(),
                        target_dbfs: self.config.master_target_dbfs,
                        sample_rate: SAMPLE_RATE,
                    }),
                )
            }),
        };
        let (stems, master) = match built {
            Ok(b) => b,
            Err(e) => {
                self.log(
                    now_us,
                    EventPayload::Error {
                        stage: Stage::Mix,
                        capture: None,
                        job: None,
                        message: e.to_string(),
                        latency_us: None,
                    },
                );
                return Vec::new();
            }
        };
        let (id, _superseded) = self.jobs.create(kind, &stems, now_us);
        let job = self.jobs.get(id).expect("just created").clone();
        self.jobs
            .get_mut(id)
            .expect("just created")
            .advance(JobStatus::Uploading)
            .expect("pending job can upload");
        vec![Effect::SubmitMix { job, stems, master }]
    }

    fn on_mix_submitted(&mut self, now_us: u64, job: MixJob, outcome: Result<Timed<TaskHandle>, MixError>) -> Vec<Effect> {
        let id = job.id;
        let kind = job.kind;
        let stems = job.stems.len();
        if let Some(slot) = self.jobs.get_mut(id) {
            *slot = job.clone();
        }
        match outcome {
            Err(e) => {
                if let Some(slot) = self.jobs.get_mut(id) {
                    let _ = slot.fail(e.to_string(), now_us);
                }
                self.jobs.release(id);
                self.log(
                    now_us,
                    EventPayload::Error {
                        stage: Stage::Mix,
                        capture: None,
                        job: Some(id),
                        message: e.to_string(),
                        latency_us: None,
                    },
                );
                Vec::new()
            }
            Ok(handle) => {
                let units = match kind {
                    MixKind::PreviewMix => self.config.costs.preview_mix_per_stem * stems as f64,
                    MixKind::Master => self.config.costs.master,
                };
                self.charge(Stage::Mix, units, now_us);
                self.log(
                    now_us,
                    EventPayload::MixSubmitted {
                        job: id,
                        mix: kind,
                        task_id: handle.value.task_id.clone(),
                        stems,
                    },
                );
                if !self.jobs.is_current(id) {
                    return Vec::new();
                }
                match (self.config.mix_delivery, handle.value.webhook_after) {
                    (crate::config::MixDelivery::Webhook, Some(after)) => vec![Effect::ExpectWebhook {
                        task_id: handle.value.task_id,
                        after,
                    }],
                    (crate::config::MixDelivery::Webhook, None) => Vec::new(),
                    (crate::config::MixDelivery::Poll, _) => vec![Effect::CheckMix {
                        job,
                        pushed: None,
                        after: crate::mix::poll_delay(0),
                    }],
                }
            }
        }
    }

    fn on_mix_checked(&mut self, now_us: u64, job: MixJob, outcome: Result<JobUpdate, MixError>) -> Vec<Effect> {
        let id = job.id;
        let kind = job.kind;
        if let Some(slot) = self.jobs.get_mut(id) {
            *slot = job.clone();
        }
        let current = self.jobs.is_current(id);
        match outcome {
            Ok(JobUpdate::StillProcessing { next_poll }) => {
                if current {
                    vec![Effect::CheckMix {
                        job,
                        pushed: None,
                        after: next_poll,
                    }]
                } else {
                    Vec::new()
                }
            }
            Ok(JobUpdate::Ready { .. }) => {
                self.jobs.release(id);
                self.log(
                    now_us,
                    EventPayload::MixStatus {
                        job: id,
                        mix: kind,
                        status: JobStatus::Ready,
                        detail: (!current).then(|| "superseded, result discarded".to_string()),
                    },
                );
                if !current {
                    return Vec::new();
                }
                let t = self.tnow(now_us);
                let Some(request) = job.swap_request(t) else {
                    return Vec::new();
                };
                let timeline = self.timeline.as_mut().expect("mixing implies a timeline");
                match timeline.request_hot_swap(request, t) {
                    Ok(ticket) => {
                        self.swap_jobs.insert(ticket.id, id);
                    }
                    Err(e) => self.log(
                        now_us,
                        EventPayload::Error {
                            stage: Stage::Swap,
                            capture: None,
                            job: Some(id),
                            message: e.to_string(),
                            latency_us: None,
                        },
                    ),
                }
                Vec::new()
            }
            Err(e) => {
                self.jobs.release(id);
                self.log(
                    now_us,
                    EventPayload::MixStatus {
                        job: id,
                        mix: kind,
                        status: JobStatus::Failed,
                        detail: Some(e.to_string()),
                    },
                );
                Vec::new()
            }
        }
    }

    fn commit_swaps(&mut self, now_us: u64) -> Vec<Effect> {
        let t = self.tnow(now_us);
        let Some(timeline) = self.timeline.as_mut() else {
            return Vec::new();
        };
        if self.epoch_us.is_none() {
            return Vec::new();
        }
        for outcome in timeline.commit_due(t) {
            let job = self.swap_jobs.get(&outcome.ticket.id).copied();
            let payload = match outcome.result {
                Ok(boundary) => EventPayload::SwapCommitted {
                    ticket: outcome.ticket.id,
                    reason: outcome.ticket.reason,
                    job,
                    boundary_s: secs_f64(boundary),
                    boundary_sample: crate::scheduler::to_samples(boundary),
                },
                Err(e) => EventPayload::Error {
                    stage: Stage::Swap,
                    capture: None,
                    job,
                    message: e.to_string(),
                    latency_us: None,
                },
            };
            self.log(now_us, payload);
        }
        Vec::new()
    }

    /// A wake-up for the next swap commit, unless one is already out.
    fn wake_effect(&mut self) -> Option<Effect> {
        let epoch = self.epoch_us?;
        let t = self.timeline.as_ref()?.next_commit_time()?;
        let micros = (t * Seconds::from_integer(1_000_000)).ceil().to_integer().max(0);
        let at_us = epoch + micros.to_u64().unwrap_or(u64::MAX);
        if self.last_wake == Some(at_us) {
            return None;
        }
        self.last_wake = Some(at_us);
        Some(Effect::WakeAt { at_us })
    }

    /// What the controller display should show at `now_us`.
    pub fn display_state(&self, now_us: u64) -> DisplayState {
        let mut led_mask = self.instruments.mask();
        if self.pending_captures() > 0 {
            led_mask |= CAPTURE_LED;
        }
        let (mut role, mut level) = (SectionRole::Verse, 0u8);
        if let (Some(tl), Some(t)) = (self.timeline.as_ref().filter(|t| t.is_playing()), self.timeline_time(now_us)) {
            let p = crate::scheduler::to_samples(t).max(0);
            if let Some(seg) = tl.segments().iter().rev().find(|s| s.start_sample <= p) {
                role = seg.role;
            }
            let window = 1024;
            let block = tl.render_range((p - window as i64).max(0), window);
            let rms = crate::audio::power::frames_rms(block.frames());
            level = match Decibels::from_linear(rms) {
                Decibels::Level(db) => ((db + 60.0) / 4.0).round().clamp(0.0, f64::from(LEVEL_MAX)) as u8,
                Decibels::Silence => 0,
            };
        }
        DisplayState {
            tempo: self.lock.as_ref().map_or(0, |l| l.bpm.round() as u16),
            genre: self.lock.as_ref().map(|l| l.genre.clone()).unwrap_or_default(),
            section_role: role,
            audio_level: level,
            led_mask,
        }
        .normalized()
    }

    pub fn snapshot(&self, now_us: u64) -> StateSnapshot {
        let tl = self.timeline.as_ref();
        let sections = tl
            .map(|t| {
                t.sections()
                    .iter()
                    .map(|s| {
                        let rec = self.captures.iter().find(|c| c.section == Some(s.index));
                        SectionSummary {
                            index: s.index,
                            capture: rec.map_or(0, |c| c.id),
                            role: s.role,
                            start_s: secs_f64(s.start),
                            start_sample: crate::scheduler::to_samples(s.start),
                            length_s: secs_f64(s.length),
                            bars: s.bar_count,
                            prompt: rec.and_then(|c| c.prompt.as_ref()).map(|p| p.text.clone()).unwrap_or_default(),
                            envelope: envelope_label((s.index > 0).then_some(s.crossfade.family)),
                        }
                    })
                    .collect()
            })
            .unwrap_or_default();
        let segments = tl
            .map(|t| {
                t.segments()
                    .iter()
                    .map(|s| {
                        let (source, section) = match s.origin {
                            SegmentOrigin::Section(k) => ("section".to_string(), Some(k)),
                            SegmentOrigin::Swap { reason, .. } => (reason.as_str().to_string(), None),
                        };
                        SegmentSummary {
                            start_s: secs_f64(s.start),
                            start_sample: s.start_sample,
                            source,
                            section,
                        }
                    })
                    .collect()
            })
            .unwrap_or_default();
        let playhead_s = self
            .timeline_time(now_us)
            .map_or(0.0, |t| secs_f64(t).max(0.0));
        StateSnapshot {
            session: SessionSummary {
                id: self.id.clone(),
                bpm: self.lock.as_ref().map(|l| l.bpm),
                genre: self.lock.as_ref().map(|l| l.genre.clone()),
                t_bar_s: self.clock().map(|c| secs_f64(c.t_bar())),
                crossfade_s: self.clock().map(|c| secs_f64(c.crossfade())),
                auto_mix: self.auto_mix,
                master_requested: self.master_requested,
                instruments: self.instruments.clone(),
            },
            sections,
            segments,
            jobs: self
                .jobs
                .all()
                .iter()
                .map(|j| JobSummary {
                    id: j.id,
                    kind: j.kind,
                    status: j.status,
                    task_id: j.task_id.clone(),
                    current: self.jobs.is_current(j.id),
                })
                .collect(),
            pending_captures: self
                .captures
                .iter()
                .filter(|c| c.state.is_pending())
                .map(|c| PendingCapture { id: c.id, state: c.state })
                .collect(),
            display: self.display_state(now_us),
            playhead_s,
            end_s: tl.map_or(0.0, |t| secs_f64(t.end())),
            seq: self.last_seq(),
        }
    }

    /// Swap reason counts, for reports.
    pub fn committed_swaps(&self) -> Vec<(SwapReason, f64)> {
        self.events
            .iter()
            .filter_map(|e| match &e.payload {
                EventPayload::SwapCommitted { reason, boundary_s, .. } => Some((*reason, *boundary_s)),
                _ => None,
            })
            .collect()
    }
}
