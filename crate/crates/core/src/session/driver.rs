//! Effect execution and the virtual-time session driver.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::audio::Frame;
use crate::backend::BackendError;
use crate::caption::{
    caption, CaptionBackend, CaptionError, CaptionFixtures, CaptureFrame, LiveCaptionBackend, MockCaptionBackend,
    VisionInstructions,
};
use crate::config::{ApiKeys, BackendMode, Config, ConfigError, MixDelivery};
use crate::generation::{
    generate, GenerationBackend, GenerationError, GenerationPolicy, LiveGenerationBackend, MockGenerationBackend,
};
use crate::mix::{poll_or_receive, submit, JobUpdate, LiveMixBackend, MixBackend, MockMixBackend, RemoteStatus};
use crate::prompt::{InstrumentSelection, PromptTables};
use crate::scheduler::{from_micros, to_samples, StreamingRenderer};

use super::{Completion, Control, ControlReply, Effect, Orchestrator, SessionError};

/// The three remote services a session talks to.
#[derive(Clone)]
pub struct Backends {
    pub caption: Arc<dyn CaptionBackend>,
    pub generation: Arc<dyn GenerationBackend>,
    pub mix: Arc<dyn MixBackend>,
    pub instructions: VisionInstructions,
    /// Whether mix latencies are measured rather than simulated.
    pub mix_live: bool,
}

impl std::fmt::Debug for Backends {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backends").field("mix_live", &self.mix_live).finish_non_exhaustive()
    }
}

/// Accumulates time spent inside backend calls, so host work can be told
/// apart from service time (mock synthesis included).
struct Metered<'a, B: ?Sized> {
    inner: &'a B,
    spent: std::sync::Mutex<Duration>,
}

impl<'a, B: ?Sized> Metered<'a, B> {
    fn new(inner: &'a B) -> Self {
        Self {
            inner,
            spent: std::sync::Mutex::new(Duration::ZERO),
        }
    }

    fn time<T>(&self, f: impl FnOnce(&B) -> T) -> T {
        let started = Instant::now();
        let out = f(self.inner);
        *self.spent.lock().unwrap() += started.elapsed();
        out
    }

    fn spent(&self) -> Duration {
        *self.spent.lock().unwrap()
    }
}

impl<B: CaptionBackend + ?Sized> CaptionBackend for Metered<'_, B> {
    fn describe(&self, frame: &CaptureFrame, instruction: &str) -> Result<crate::backend::Timed<String>, BackendError> {
        self.time(|b| b.describe(frame, instruction))
    }
}

impl<B: GenerationBackend + ?Sized> GenerationBackend for Metered<'_, B> {
    fn generate(
        &self,
        req: &crate::generation::GenerationRequest,
    ) -> Result<crate::backend::Timed<Vec<u8>>, BackendError> {
        self.time(|b| b.generate(req))
    }
}

fn ms(v: u64) -> Duration {
    Duration::from_millis(v)
}

pub(crate) fn mock_mix(config: &Config) -> MockMixBackend {
    let mut m = MockMixBackend::with_latencies(ms(config.latencies.preview_mix_ms), ms(config.latencies.master_ms));
    m.upload_latency = ms(config.latencies.upload_ms);
    m.webhook = config.mix_delivery == MixDelivery::Webhook;
    m
}

/// Caption fixtures named by the config, or the bundled ones.
pub fn caption_fixtures(config: &Config) -> Result<CaptionFixtures, ConfigError> {
    match &config.fixtures {
        None => Ok(CaptionFixtures::builtin()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.clone(),
                source,
            })?;
            CaptionFixtures::from_json(&text).map_err(|e| ConfigError::Fixtures(e.to_string()))
        }
    }
}

/// Prompt tables named by the config, or the bundled ones.
pub fn prompt_tables(config: &Config) -> Result<PromptTables, ConfigError> {
    match &config.prompt_tables {
        None => Ok(PromptTables::builtin()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.clone(),
                source,
            })?;
            PromptTables::from_toml(&text).map_err(|e| ConfigError::Fixtures(e.to_string()))
        }
    }
}

impl Backends {
    /// Mock services with the configured latencies, whatever the modes say.
    pub fn mock(config: &Config) -> Result<Self, ConfigError> {
        Ok(Self {
            caption: Arc::new(MockCaptionBackend::new(caption_fixtures(config)?, ms(config.latencies.caption_ms))),
            generation: Arc::new(MockGenerationBackend::new(ms(config.latencies.generation_ms))),
            mix: Arc::new(mock_mix(config)),
            instructions: VisionInstructions::default(),
            mix_live: false,
        })
    }

    /// Live or mock per backend as configured.
    pub fn from_config(config: &Config, keys: &ApiKeys) -> Result<Self, ConfigError> {
        let mut b = Self::mock(config)?;
        if config.caption_backend == BackendMode::Live {
            b.caption = Arc::new(LiveCaptionBackend {
                endpoint: config.endpoints.caption_url.clone(),
                model: config.endpoints.caption_model.clone(),
                api_key: keys
                    .caption
                    .clone()
                    .ok_or(ConfigError::MissingKey("caption", "SCENETONE_CAPTION_API_KEY"))?,
                timeout: config.caption_timeout(),
            });
        }
        if config.generation_backend == BackendMode::Live {
            b.generation = Arc::new(LiveGenerationBackend {
                endpoint: config.endpoints.generation_url.clone(),
                api_key: keys
                    .generation
                    .clone()
                    .ok_or(ConfigError::MissingKey("generation", "SCENETONE_GENERATION_API_KEY"))?,
                timeout: config.generation_timeout(),
            });
        }
        if config.mix_backend == BackendMode::Live {
            b.mix = Arc::new(LiveMixBackend {
                base_url: config.endpoints.mix_url.clone(),
                api_key: keys
                    .mix
                    .clone()
                    .ok_or(ConfigError::MissingKey("mix", "SCENETONE_MIX_API_KEY"))?,
                webhook_url: config.endpoints.webhook_url.clone(),
                timeout: config.generation_timeout(),
            });
            b.mix_live = true;
        }
        Ok(b)
    }
}

/// A completion and when it becomes visible.
#[derive(Debug)]
pub struct Executed {
    /// Service time the result stands for.
    pub latency: Duration,
    /// `latency` has not actually elapsed; the driver must apply it.
    pub simulated: bool,
    pub completion: Completion,
}

/// Runs one effect at session time `at_us`. Blocking: live backends perform
/// their HTTP calls here.
pub fn execute(effect: Effect, backends: &Backends, config: &Config, at_us: u64) -> Executed {
    match effect {
        Effect::Caption { capture, frame } => {
            let backend = Metered::new(&*backends.caption);
            let started = Instant::now();
            let outcome = caption(&frame, &backend, &backends.instructions, config.caption_timeout());
            let work = started.elapsed().saturating_sub(backend.spent());
            let latency = match &outcome {
                Ok(o) => o.latency,
                Err(CaptionError::BackendUnavailable(BackendError::Timeout(d))) => *d,
                Err(_) => Duration::ZERO,
            };
            let simulated = outcome.as_ref().map_or(true, |o| o.simulated);
            Executed {
                latency,
                simulated,
                completion: Completion::Caption {
                    capture,
                    outcome,
                    latency,
                    work,
                },
            }
        }
        Effect::Generate { capture, request } => {
            let policy = GenerationPolicy {
                timeout: config.generation_timeout(),
                cost_per_call: config.costs.generation,
            };
            let backend = Metered::new(&*backends.generation);
            let started = Instant::now();
            let outcome = generate(&request, &backend, &policy);
            let work = started.elapsed().saturating_sub(backend.spent());
            let latency = match &outcome {
                Ok(r) => r.backend_latency,
                Err(GenerationError::Timeout(d)) => *d,
                Err(_) => Duration::ZERO,
            };
            let simulated = outcome.as_ref().map_or(true, |r| r.simulated);
            Executed {
                latency,
                simulated,
                completion: Completion::Generation {
                    capture,
                    outcome,
                    latency,
                    work,
                },
            }
        }
        Effect::SubmitMix { mut job, stems, master } => {
            let outcome = submit(&mut job, &stems, master.as_ref(), &*backends.mix, at_us);
            let (latency, simulated) = outcome
                .as_ref()
                .map_or((Duration::ZERO, !backends.mix_live), |h| (h.latency, h.simulated));
            Executed {
                latency,
                simulated,
                completion: Completion::MixSubmitted { job, outcome },
            }
        }
        Effect::CheckMix { mut job, pushed, .. } => {
            let outcome = poll_or_receive(&mut job, &*backends.mix, pushed, at_us);
            let latency = match &outcome {
                Ok(JobUpdate::Ready { latency }) => *latency,
                _ => Duration::ZERO,
            };
            Executed {
                latency,
                simulated: !backends.mix_live,
                completion: Completion::MixChecked { job, outcome },
            }
        }
        Effect::ExpectWebhook { task_id, .. } => {
            let status = match backends.mix.status(&task_id, at_us) {
                Ok(t) => t.value,
                Err(e) => RemoteStatus::Failed { reason: e.to_string() },
            };
            Executed {
                latency: Duration::ZERO,
                simulated: true,
                completion: Completion::MixWebhook { task_id, status },
            }
        }
        Effect::WakeAt { .. } => Executed {
            latency: Duration::ZERO,
            simulated: true,
            completion: Completion::Wake,
        },
    }
}

/// Frames per render block of the simulated output.
pub const BLOCK_FRAMES: usize = 1024;
/// How long a scripted capture waits before retrying when the session is busy.
pub const BUSY_RETRY: Duration = Duration::from_millis(100);

#[derive(Debug)]
enum Item {
    Capture {
        frame: CaptureFrame,
        instruments: InstrumentSelection,
    },
    Control(Control),
    Effect(Effect),
    Completion(Completion),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimStats {
    pub underruns: u64,
    pub blocks: u64,
    pub streamed_samples: i64,
    pub busy_retries: u64,
    pub now_us: u64,
}

/// Runs a session in virtual time: every backend latency is applied on a
/// simulated clock and the output is rendered block by block as time passes,
/// exactly as a real-time output callback would pull it.
pub struct Simulation {
    orch: Orchestrator,
    backends: Backends,
    queue: BTreeMap<(u64, u64), Item>,
    next_seq: u64,
    now_us: u64,
    renderer: StreamingRenderer,
    block: Vec<Frame>,
    streamed: Vec<Frame>,
    keep_stream: bool,
    busy_retries: u64,
    rejected: Vec<(u64, SessionError)>,
    exports: Vec<Vec<u8>>,
}

impl Simulation {
    pub fn new(orch: Orchestrator, backends: Backends) -> Self {
        Self {
            orch,
            backends,
            queue: BTreeMap::new(),
            next_seq: 0,
            now_us: 0,
            renderer: StreamingRenderer::new(),
            block: vec![[0.0; 2]; BLOCK_FRAMES],
            streamed: Vec::new(),
            keep_stream: false,
            busy_retries: 0,
            rejected: Vec::new(),
            exports: Vec::new(),
        }
    }

    /// Keeps every streamed frame for later comparison.
    pub fn keep_stream(mut self, keep: bool) -> Self {
        self.keep_stream = keep;
        self
    }

    fn push(&mut self, at_us: u64, item: Item) {
        self.next_seq += 1;
        self.queue.insert((at_us, self.next_seq), item);
    }

    pub fn schedule_capture(&mut self, at_us: u64, frame: CaptureFrame, instruments: InstrumentSelection) {
        self.push(at_us, Item::Capture { frame, instruments });
    }

    pub fn schedule_control(&mut self, at_us: u64, control: Control) {
        self.push(at_us, Item::Control(control));
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    pub fn orchestrator(&self) -> &Orchestrator {
        &self.orch
    }

    pub fn into_orchestrator(self) -> Orchestrator {
        self.orch
    }

    pub fn streamed(&self) -> &[Frame] {
        &self.streamed
    }

    pub fn rejected(&self) -> &[(u64, SessionError)] {
        &self.rejected
    }

    pub fn exports(&self) -> &[Vec<u8>] {
        &self.exports
    }

    pub fn stats(&self) -> SimStats {
        SimStats {
            underruns: self.renderer.underruns(),
            blocks: self.renderer.blocks(),
            streamed_samples: self.renderer.position(),
            busy_retries: self.busy_retries,
            now_us: self.now_us,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    /// Pulls output blocks that lie entirely before wall time `t_us`.
    pub fn stream_until(&mut self, t_us: u64) {
        let (Some(epoch), Some(tl)) = (self.orch.epoch_us(), self.orch.timeline()) else {
            return;
        };
        if t_us < epoch {
            return;
        }
        let target = to_samples(from_micros(t_us - epoch));
        while self.renderer.position() + BLOCK_FRAMES as i64 <= target {
            self.renderer.render_block(tl, &mut self.block);
            if self.keep_stream {
                self.streamed.extend_from_slice(&self.block);
            }
        }
    }

    fn dispatch(&mut self, effects: Vec<Effect>) {
        for effect in effects {
            let due = self.now_us + effect.due_in(self.now_us).as_micros() as u64;
            self.push(due, Item::Effect(effect));
        }
    }

    /// Processes the earliest queued item. Returns `false` when idle.
    pub fn step(&mut self) -> bool {
        let Some(((at, _), item)) = self.queue.pop_first() else {
            return false;
        };
        self.stream_until(at);
        self.now_us = self.now_us.max(at);
        let now = self.now_us;
        match item {
            Item::Capture { mut frame, instruments } => {
                frame.captured_at_us = now;
                match self.orch.capture(now, frame.clone(), instruments.clone()) {
                    Ok((_, fx)) => self.dispatch(fx),
                    Err(SessionError::Busy { .. }) => {
                        self.busy_retries += 1;
                        let retry = now + BUSY_RETRY.as_micros() as u64;
                        self.push(retry, Item::Capture { frame, instruments });
                    }
                    Err(e) => self.rejected.push((now, e)),
                }
            }
            Item::Control(c) => match self.orch.control(now, c) {
                Ok((reply, fx)) => {
                    if let ControlReply::Export(wav) = reply {
                        self.exports.push(wav);
                    }
                    self.dispatch(fx);
                }
                Err(e) => self.rejected.push((now, e)),
            },
            Item::Effect(effect) => {
                let done = execute(effect, &self.backends, self.orch.config(), now);
                let at = now + done.latency.as_micros() as u64;
                self.push(at, Item::Completion(done.completion));
            }
            Item::Completion(c) => {
                let fx = self.orch.complete(now, c);
                self.dispatch(fx);
            }
        }
        true
    }

    /// Runs until nothing is left to do.
    pub fn run(&mut self) {
        while self.step() {}
    }

    /// Runs every item due before `t_us`, then streams output up to it.
    pub fn run_until(&mut self, t_us: u64) {
        while self.queue.first_key_value().is_some_and(|((at, _), _)| *at < t_us) {
            self.step();
        }
        self.now_us = self.now_us.max(t_us);
        self.stream_until(t_us);
    }
}
