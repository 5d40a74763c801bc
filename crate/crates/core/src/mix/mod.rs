//! Preview-mix and mastering jobs.
//!
//! A job uploads stems to a mixing service, waits for completion (webhook or
//! polling), downloads the result and hands it back as a hot-swap request.
//! Nothing here touches the render path; the caller decides when each step
//! runs.

mod mock;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::audio::{decode_wav, encode_wav, AudioBuffer};
use crate::backend::{BackendError, Timed};
use crate::scheduler::{HotSwapRequest, ScheduledSection, Seconds, SwapReason, Timeline};

pub use mock::{master_to_target, mix_stems, MockMixBackend, MASTER_TARGET_DBFS, MIX_HEADROOM_DB};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrumentGroup {
    Keys,
    Guitar,
    Bass,
    Percussion,
    FullSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Presence {
    Lead,
    Normal,
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pan {
    Left,
    Center,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reverb {
    Dry,
    Room,
    Hall,
}

/// Per-stem hints sent to the mixing service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StemMetadata {
    pub instrument_group: InstrumentGroup,
    pub presence_setting: Presence,
    pub pan_preference: Pan,
    pub reverb_preference: Reverb,
    pub musical_style: String,
}

/// Preferences applied to full-section stems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StemDefaults {
    pub presence: Presence,
    pub pan: Pan,
    pub reverb: Reverb,
}

impl Default for StemDefaults {
    fn default() -> Self {
        Self {
            presence: Presence::Normal,
            pan: Pan::Center,
            reverb: Reverb::Room,
        }
    }
}

impl StemDefaults {
    pub fn metadata(&self, style: &str) -> StemMetadata {
        StemMetadata {
            instrument_group: InstrumentGroup::FullSection,
            presence_setting: self.presence,
            pan_preference: self.pan,
            reverb_preference: self.reverb,
            musical_style: style.to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Stem {
    /// Section index, or `None` for a rendered concatenation.
    pub section: Option<usize>,
    pub audio: Arc<AudioBuffer>,
    pub metadata: StemMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixKind {
    PreviewMix,
    Master,
}

impl MixKind {
    pub fn swap_reason(self) -> SwapReason {
        match self {
            MixKind::PreviewMix => SwapReason::PreviewMix,
            MixKind::Master => SwapReason::Mastered,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MixKind::PreviewMix => "preview_mix",
            MixKind::Master => "master",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Pending,
    Uploading,
    Processing,
    Ready,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Ready | JobStatus::Failed)
    }

    /// Whether `self -> next` is a legal step.
    pub fn allows(self, next: JobStatus) -> bool {
        use JobStatus::*;
        matches!(
            (self, next),
            (Pending, Uploading) | (Uploading, Processing) | (Processing, Ready) | (Processing, Failed)
        )
    }
}

/// Loudness and format requested from the mastering service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterSettings {
    pub musical_style: String,
    pub target_dbfs: f64,
    pub sample_rate: u32,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MixError {
    #[error("a preview mix needs at least two sections, have {0}")]
    TooFewSections(usize),
    #[error("stem upload failed: {0}")]
    UploadFailed(BackendError),
    #[error("mix job failed: {0}")]
    JobFailed(String),
    #[error("job status cannot go from {from:?} to {to:?}")]
    InvalidTransition { from: JobStatus, to: JobStatus },
}

#[derive(Debug, Clone)]
pub struct MixJob {
    pub id: u64,
    pub task_id: Option<String>,
    pub kind: MixKind,
    pub stems: Vec<(Option<usize>, StemMetadata)>,
    pub status: JobStatus,
    pub result: Option<Arc<AudioBuffer>>,
    pub failure: Option<String>,
    /// Session wall-clock microseconds.
    pub submitted_at: u64,
    pub completed_at: Option<u64>,
    pub polls: u32,
}

impl MixJob {
    pub fn new(id: u64, kind: MixKind, stems: &[Stem], now_us: u64) -> Self {
        Self {
            id,
            task_id: None,
            kind,
            stems: stems.iter().map(|s| (s.section, s.metadata.clone())).collect(),
            status: JobStatus::Pending,
            result: None,
            failure: None,
            submitted_at: now_us,
            completed_at: None,
            polls: 0,
        }
    }

    pub fn advance(&mut self, to: JobStatus) -> Result<(), MixError> {
        if !self.status.allows(to) {
            return Err(MixError::InvalidTransition {
                from: self.status,
                to,
            });
        }
        self.status = to;
        Ok(())
    }

    /// Marks the job ready with its decoded result.
    pub fn complete(&mut self, audio: Arc<AudioBuffer>, now_us: u64) -> Result<(), MixError> {
        self.advance(JobStatus::Ready)?;
        self.result = Some(audio);
        self.completed_at = Some(now_us);
        Ok(())
    }

    pub fn fail(&mut self, reason: String, now_us: u64) -> Result<(), MixError> {
        self.advance(JobStatus::Failed)?;
        self.failure = Some(reason);
        self.completed_at = Some(now_us);
        Ok(())
    }

    /// Hot-swap carrying the finished audio.
    pub fn swap_request(&self, earliest_time: Seconds) -> Option<HotSwapRequest> {
        self.result.as_ref().map(|audio| HotSwapRequest {
            replacement: Arc::clone(audio),
            earliest_time,
            reason: self.kind.swap_reason(),
        })
    }
}

/// Accepted upload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskHandle {
    pub task_id: String,
    /// For services that will call the webhook: delay until they do.
    pub webhook_after: Option<Duration>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RemoteStatus {
    Processing,
    Ready,
    Failed { reason: String },
}

pub trait MixBackend: Send + Sync {
    fn upload(
        &self,
        kind: MixKind,
        stems: &[Stem],
        master: Option<&MasterSettings>,
        now_us: u64,
    ) -> Result<Timed<TaskHandle>, BackendError>;

    fn status(&self, task_id: &str, now_us: u64) -> Result<Timed<RemoteStatus>, BackendError>;

    /// Finished audio as a WAV file.
    fn fetch(&self, task_id: &str) -> Result<Timed<Vec<u8>>, BackendError>;
}

/// Polling delay before poll number `attempt` (0-based): 1 s doubling to 16 s.
pub fn poll_delay(attempt: u32) -> Duration {
    Duration::from_secs(1u64 << attempt.min(4))
}

/// One stem per section, for a preview mix.
pub fn preview_stems(
    sections: &[ScheduledSection],
    style: &str,
    defaults: &StemDefaults,
) -> Result<Vec<Stem>, MixError> {
    if sections.len() < 2 {
        return Err(MixError::TooFewSections(sections.len()));
    }
    Ok(sections
        .iter()
        .map(|s| Stem {
            section: Some(s.index),
            audio: Arc::clone(&s.buffer),
            metadata: defaults.metadata(style),
        })
        .collect())
}

/// The sections rendered with their crossfades into one stem, for mastering.
pub fn master_stem(timeline: &Timeline, style: &str, defaults: &StemDefaults) -> Result<Stem, MixError> {
    if timeline.sections().is_empty() {
        return Err(MixError::TooFewSections(0));
    }
    Ok(Stem {
        section: None,
        audio: Arc::new(timeline.sections_only().render()),
        metadata: defaults.metadata(style),
    })
}

/// Registers a job and uploads its stems.
pub fn submit(
    job: &mut MixJob,
    stems: &[Stem],
    master: Option<&MasterSettings>,
    backend: &dyn MixBackend,
    now_us: u64,
) -> Result<Timed<TaskHandle>, MixError> {
    job.advance(JobStatus::Uploading)?;
    let handle = backend
        .upload(job.kind, stems, master, now_us)
        .map_err(MixError::UploadFailed)?;
    job.task_id = Some(handle.value.task_id.clone());
    job.advance(JobStatus::Processing)?;
    Ok(handle)
}

/// What a poll or webhook delivery produced.
#[derive(Debug, Clone, PartialEq)]
pub enum JobUpdate {
    StillProcessing { next_poll: Duration },
    Ready { latency: Duration },
}

/// Checks a processing job and, once the service reports it done, downloads
/// and decodes the result. `pushed` carries a webhook's status instead of
/// asking the service.
pub fn poll_or_receive(
    job: &mut MixJob,
    backend: &dyn MixBackend,
    pushed: Option<RemoteStatus>,
    now_us: u64,
) -> Result<JobUpdate, MixError> {
    let task = job
        .task_id
        .clone()
        .ok_or(MixError::InvalidTransition {
            from: job.status,
            to: JobStatus::Ready,
        })?;
    let (status, mut latency) = match pushed {
        Some(s) => (s, Duration::ZERO),
        None => {
            job.polls += 1;
            let r = backend
                .status(&task, now_us)
                .map_err(|e| MixError::JobFailed(e.to_string()));
            match r {
                Ok(t) => (t.value, t.latency),
                Err(e) => {
                    job.fail(e.to_string(), now_us)?;
                    return Err(e);
                }
            }
        }
    };
    match status {
        RemoteStatus::Processing => Ok(JobUpdate::StillProcessing {
            next_poll: poll_delay(job.polls),
        }),
        RemoteStatus::Failed { reason } => {
            job.fail(reason.clone(), now_us)?;
            Err(MixError::JobFailed(reason))
        }
        RemoteStatus::Ready => {
            let fetched = backend.fetch(&task).and_then(|t| {
                decode_wav(&t.value)
                    .map(|a| (a, t.latency))
                    .map_err(|e| BackendError::Rejected(e.to_string()))
            });
            match fetched {
                Ok((audio, l)) => {
                    latency += l;
                    job.complete(Arc::new(audio), now_us)?;
                    Ok(JobUpdate::Ready { latency })
                }
                Err(e) => {
                    job.fail(e.to_string(), now_us)?;
                    Err(MixError::JobFailed(e.to_string()))
                }
            }
        }
    }
}

/// All jobs of a session; at most one active job per kind.
#[derive(Debug, Clone, Default)]
pub struct MixJobs {
    jobs: Vec<MixJob>,
    active: HashMap<MixKind, u64>,
    next_id: u64,
}

impl MixJobs {
    pub fn new() -> Self {
        Self::default()
    }

    /// Creates a job; an older active job of the same kind loses its claim
    /// to delivery and its id is returned.
    pub fn create(&mut self, kind: MixKind, stems: &[Stem], now_us: u64) -> (u64, Option<u64>) {
        self.next_id += 1;
        let id = self.next_id;
        self.jobs.push(MixJob::new(id, kind, stems, now_us));
        let old = self.active.insert(kind, id);
        (id, old)
    }

    pub fn get(&self, id: u64) -> Option<&MixJob> {
        self.jobs.iter().find(|j| j.id == id)
    }

    pub fn get_mut(&mut self, id: u64) -> Option<&mut MixJob> {
        self.jobs.iter_mut().find(|j| j.id == id)
    }

    pub fn by_task(&self, task_id: &str) -> Option<&MixJob> {
        self.jobs.iter().find(|j| j.task_id.as_deref() == Some(task_id))
    }

    /// Whether results of job `id` should still be delivered.
    pub fn is_current(&self, id: u64) -> bool {
        self.get(id).is_some_and(|j| self.active.get(&j.kind) == Some(&id))
    }

    /// Drops the active claim of a finished job.
    pub fn release(&mut self, id: u64) {
        if let Some(kind) = self.get(id).map(|j| j.kind) {
            if self.active.get(&kind) == Some(&id) {
                self.active.remove(&kind);
            }
        }
    }

    pub fn active(&self) -> impl Iterator<Item = &MixJob> {
        self.jobs.iter().filter(|j| self.active.values().any(|&id| id == j.id))
    }

    pub fn all(&self) -> &[MixJob] {
        &self.jobs
    }
}

/// HTTP adapter: multipart stem upload, JSON status, WAV download.
#[derive(Debug, Clone)]
pub struct LiveMixBackend {
    pub base_url: String,
    pub api_key: String,
    pub webhook_url: Option<String>,
    pub timeout: Duration,
}

impl LiveMixBackend {
    fn client(&self) -> Result<reqwest::blocking::Client, BackendError> {
        reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| BackendError::Unavailable(e.to_string()))
    }

    fn http(&self, e: reqwest::Error) -> BackendError {
        crate::backend::http_error(e, self.timeout)
    }
}

impl MixBackend for LiveMixBackend {
    fn upload(
        &self,
        kind: MixKind,
        stems: &[Stem],
        master: Option<&MasterSettings>,
        _now_us: u64,
    ) -> Result<Timed<TaskHandle>, BackendError> {
        use reqwest::blocking::multipart::{Form, Part};
        let started = Instant::now();
        let meta: Vec<&StemMetadata> = stems.iter().map(|s| &s.metadata).collect();
        let mut form = Form::new()
            .text("kind", kind.as_str())
            .text("stems", serde_json::to_string(&meta).expect("metadata serializes"));
        if let Some(m) = master {
            form = form.text("master", serde_json::to_string(m).expect("settings serialize"));
        }
        if let Some(hook) = &self.webhook_url {
            form = form.text("webhook_url", hook.clone());
        }
        for (i, stem) in stems.iter().enumerate() {
            let part = Part::bytes(encode_wav(&stem.audio))
                .file_name(format!("stem{i}.wav"))
                .mime_str("audio/wav")
                .map_err(|e| BackendError::Rejected(e.to_string()))?;
            form = form.part(format!("stem{i}"), part);
        }
        let reply: serde_json::Value = self
            .client()?
            .post(format!("{}/jobs", self.base_url))
            .bearer_auth(&self.api_key)
            .multipart(form)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| self.http(e))?;
        let task_id = reply["task_id"]
            .as_str()
            .ok_or_else(|| BackendError::Rejected("reply has no task_id".into()))?;
        Ok(Timed::measured(
            TaskHandle {
                task_id: task_id.to_string(),
                webhook_after: None,
            },
            started.elapsed(),
        ))
    }

    fn status(&self, task_id: &str, _now_us: u64) -> Result<Timed<RemoteStatus>, BackendError> {
        let started = Instant::now();
        let status: RemoteStatus = self
            .client()?
            .get(format!("{}/jobs/{task_id}", self.base_url))
            .bearer_auth(&self.api_key)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| self.http(e))?;
        Ok(Timed::measured(status, started.elapsed()))
    }

    fn fetch(&self, task_id: &str) -> Result<Timed<Vec<u8>>, BackendError> {
        let started = Instant::now();
        let bytes = self
            .client()?
            .get(format!("{}/jobs/{task_id}/result", self.base_url))
            .bearer_auth(&self.api_key)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.bytes())
            .map_err(|e| self.http(e))?;
        Ok(Timed::measured(bytes.to_vec(), started.elapsed()))
    }
}
