use std::sync::atomic::{AtomicBool, AtomicI64, AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use tokio::sync::{mpsc, oneshot, watch};

use crate::caption::CaptureFrame;
use crate::config::Config;
use crate::device::{DeviceEvent, DisplayState, HostAction, HostController};
use crate::prompt::{InstrumentSelection, PromptTables};
use crate::scheduler::{from_micros, to_samples, StreamingRenderer, Timeline};
use crate::session::{
    execute, Backends, CaptureId, Completion, Control, ControlReply, Effect, Orchestrator, SessionError, SessionEvent,
    StateSnapshot, BLOCK_FRAMES,
};

use super::ApiError;

pub(crate) type Reply<T> = oneshot::Sender<Result<T, ApiError>>;

pub(crate) enum Command {
    Open(Reply<String>),
    Capture {
        frame: CaptureFrame,
        instruments: Option<InstrumentSelection>,
        reply: Reply<(String, CaptureId)>,
    },
    Control {
        control: Control,
        reply: Reply<ControlReply>,
    },
    State(Reply<StateSnapshot>),
    Display(oneshot::Sender<DisplayState>),
    Device(DeviceEvent),
    Camera(CaptureFrame),
    Done(Completion),
}

/// What the HTTP side reads without going through the engine queue.
pub(crate) struct Shared {
    started: Instant,
    pub events: RwLock<Vec<SessionEvent>>,
    pub seq: watch::Sender<u64>,
    /// Session epoch and an immutable copy of the timeline for audio reads.
    pub timeline: RwLock<Option<(u64, Arc<Timeline>)>>,
    pub session: RwLock<Option<String>>,
    pub monitor: MonitorStats,
}

impl Shared {
    pub fn new() -> Self {
        Self {
            started: Instant::now(),
            events: RwLock::new(Vec::new()),
            seq: watch::channel(0).0,
            timeline: RwLock::new(None),
            session: RwLock::new(None),
            monitor: MonitorStats::default(),
        }
    }

    pub fn now_us(&self) -> u64 {
        self.started.elapsed().as_micros() as u64
    }

    /// First logged event with `seq >= from`.
    pub fn event_from(&self, from: u64) -> Option<SessionEvent> {
        let events = self.events.read().unwrap();
        let i = events.partition_point(|e| e.seq < from);
        events.get(i).cloned()
    }

    pub fn timeline(&self) -> Option<(u64, Arc<Timeline>)> {
        self.timeline.read().unwrap().clone()
    }
}

#[derive(Debug, Default)]
pub(crate) struct MonitorStats {
    pub blocks: AtomicU64,
    pub underruns: AtomicU64,
    pub position: AtomicI64,
    pub stop: AtomicBool,
}

/// Pulls output blocks in real time from the latest timeline copy, the way a
/// sound card callback would. It never waits on the engine or on clients.
pub(crate) fn spawn_monitor(shared: Arc<Shared>) -> std::thread::JoinHandle<()> {
    std::thread::spawn(move || {
        let mut renderer = StreamingRenderer::new();
        let mut block = vec![[0.0f32; 2]; BLOCK_FRAMES];
        let tick = Duration::from_micros(BLOCK_FRAMES as u64 * 1_000_000 / 44_100 / 2);
        while !shared.monitor.stop.load(Ordering::Relaxed) {
            if let Some((epoch, tl)) = shared.timeline() {
                let now = shared.now_us();
                if now >= epoch {
                    let target = to_samples(from_micros(now - epoch));
                    while renderer.position() + BLOCK_FRAMES as i64 <= target {
                        renderer.render_block(&tl, &mut block);
                    }
                    let m = &shared.monitor;
                    m.blocks.store(renderer.blocks(), Ordering::Relaxed);
                    m.underruns.store(renderer.underruns(), Ordering::Relaxed);
                    m.position.store(renderer.position(), Ordering::Relaxed);
                }
            }
            std::thread::sleep(tick);
        }
    })
}

/// Owns the session. Every request passes through its queue, so state reads
/// see a single consistent queue position.
pub(crate) struct Engine {
    config: Arc<Config>,
    tables: PromptTables,
    backends: Backends,
    shared: Arc<Shared>,
    tx: mpsc::UnboundedSender<Command>,
    orch: Option<Orchestrator>,
    host: HostController,
    camera: Option<CaptureFrame>,
}

impl Engine {
    pub fn spawn(config: Config, tables: PromptTables, backends: Backends, shared: Arc<Shared>) -> mpsc::UnboundedSender<Command> {
        let (tx, mut rx) = mpsc::unbounded_channel();
        let selection = InstrumentSelection::parse_list("keys").expect("default selection");
        let mut engine = Engine {
            config: Arc::new(config),
            tables,
            backends,
            shared,
            tx: tx.clone(),
            orch: None,
            host: HostController::new(selection),
            camera: None,
        };
        tokio::spawn(async move {
            while let Some(cmd) = rx.recv().await {
                engine.handle(cmd);
                engine.publish();
            }
        });
        tx
    }

    fn handle(&mut self, cmd: Command) {
        let now = self.shared.now_us();
        match cmd {
            Command::Open(reply) => {
                let out = if self.orch.is_some() {
                    Err(ApiError::Conflict("session already running".into()))
                } else {
                    Ok(self.open(now))
                };
                let _ = reply.send(out);
            }
            Command::Capture {
                frame,
                instruments,
                reply,
            } => {
                let _ = reply.send(self.capture(now, frame, instruments));
            }
            Command::Control { control, reply } => {
                let out = match self.orch.as_mut() {
                    None => Err(ApiError::NoSession),
                    Some(o) => o.control(now, control).map_err(ApiError::from).map(|(r, fx)| {
                        self.dispatch(now, fx);
                        r
                    }),
                };
                let _ = reply.send(out);
            }
            Command::State(reply) => {
                let out = self.orch.as_ref().map(|o| o.snapshot(now)).ok_or(ApiError::NoSession);
                let _ = reply.send(out);
            }
            Command::Display(reply) => {
                let state = match &self.orch {
                    Some(o) => o.display_state(now),
                    None => DisplayState {
                        led_mask: self.host.selection().mask(),
                        ..DisplayState::default()
                    },
                };
                let _ = reply.send(state);
            }
            Command::Device(ev) => self.device(now, ev),
            Command::Camera(frame) => self.camera = Some(frame),
            Command::Done(c) => {
                if let Some(o) = self.orch.as_mut() {
                    let fx = o.complete(now, c);
                    self.dispatch(now, fx);
                }
            }
        }
    }

    fn open(&mut self, now: u64) -> String {
        let ms = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
        let id = format!("session-{ms}");
        let mut orch = Orchestrator::new(id.clone(), (*self.config).clone(), self.tables.clone());
        if orch.instruments() != self.host.selection() {
            let select = Control::SelectInstruments {
                instruments: self.host.selection().clone(),
            };
            let _ = orch.control(now, select);
        }
        self.orch = Some(orch);
        *self.shared.session.write().unwrap() = Some(id.clone());
        id
    }

    fn capture(
        &mut self,
        now: u64,
        mut frame: CaptureFrame,
        instruments: Option<InstrumentSelection>,
    ) -> Result<(String, CaptureId), ApiError> {
        if self.orch.is_none() {
            self.open(now);
        }
        let orch = self.orch.as_mut().expect("session opened");
        let sel = instruments.unwrap_or_else(|| orch.instruments().clone());
        frame.captured_at_us = now;
        let (id, fx) = orch.capture(now, frame, sel)?;
        let session = orch.id().to_string();
        self.dispatch(now, fx);
        Ok((session, id))
    }

    fn device(&mut self, now: u64, ev: DeviceEvent) {
        if let Some(o) = &self.orch {
            self.host.set_selection(o.instruments().clone());
        }
        match self.host.on_event(&ev) {
            Some(HostAction::SelectInstruments(instruments)) => {
                if let Some(o) = self.orch.as_mut() {
                    if let Ok((_, fx)) = o.control(now, Control::SelectInstruments { instruments }) {
                        self.dispatch(now, fx);
                    }
                }
            }
            Some(HostAction::Capture) => match self.camera.clone() {
                Some(frame) => {
                    if let Err(e) = self.capture(now, frame, None) {
                        log::warn!("device capture refused: {e}");
                    }
                }
                None => log::warn!("device capture ignored: no camera frame yet"),
            },
            None => {}
        }
    }

    /// Runs effects off the engine task. Mock latencies are waited out in
    /// real time; live ones already were.
    fn dispatch(&self, now: u64, effects: Vec<Effect>) {
        for effect in effects {
            if matches!(effect, Effect::ExpectWebhook { .. }) && self.backends.mix_live {
                continue;
            }
            let delay = effect.due_in(now);
            let (tx, backends, config, shared) = (
                self.tx.clone(),
                self.backends.clone(),
                self.config.clone(),
                self.shared.clone(),
            );
            tokio::spawn(async move {
                tokio::time::sleep(delay).await;
                let started = Instant::now();
                let at_us = shared.now_us();
                let Ok(done) = tokio::task::spawn_blocking(move || execute(effect, &backends, &config, at_us)).await
                else {
                    return;
                };
                if done.simulated {
                    tokio::time::sleep(done.latency.saturating_sub(started.elapsed())).await;
                }
                let _ = tx.send(Command::Done(done.completion));
            });
        }
    }

    /// Mirrors new events, then the timeline, so every change shows up on
    /// the event stream no later than in a state read.
    fn publish(&self) {
        let Some(o) = &self.orch else {
            return;
        };
        let last = *self.shared.seq.borrow();
        let fresh = o.events_since(last);
        if !fresh.is_empty() {
            self.shared.events.write().unwrap().extend_from_slice(fresh);
            self.shared.seq.send_replace(o.last_seq());
        }
        if let (Some(epoch), Some(tl)) = (o.epoch_us(), o.timeline()) {
            *self.shared.timeline.write().unwrap() = Some((epoch, Arc::new(tl.clone())));
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Instruments(p) => ApiError::Instruments(p),
            SessionError::Busy { .. } => ApiError::Busy(e.to_string()),
            SessionError::SessionNotActive | SessionError::InvalidState(_) => ApiError::Conflict(e.to_string()),
        }
    }
}
