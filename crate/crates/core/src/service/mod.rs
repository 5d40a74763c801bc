//! HTTP and event-stream boundary around a single live session.
//!
//! | Route | |
//! |---|---|
//! | `POST /session` | open the session (also opened by the first capture) |
//! | `POST /capture` | multipart `image` (JPEG) and optional `instruments` (`keys,guitar`) |
//! | `POST /camera` | raw JPEG body: the frame a device capture button takes |
//! | `POST /control` | JSON [`Control`]; `export` answers with a WAV |
//! | `GET /state` | [`StateSnapshot`] |
//! | `GET /events` | server-sent events, `id` = sequence number; resume with `?from=` or `Last-Event-ID` |
//! | `GET /audio/chunk` | `?start=<sample>&frames=<n>` rendered WAV, default one second at the playhead |
//! | `GET /monitor` | real-time render counters |
//! | `POST /webhook/mix` | `{"task_id": .., "status": {"state": "ready"}}` from the mixing service |

mod device_link;
mod engine;

use std::convert::Infallible;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, Multipart, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, oneshot};

use crate::audio::encode_wav;
use crate::caption::CaptureFrame;
use crate::config::Config;
use crate::mix::RemoteStatus;
use crate::prompt::{InstrumentSelection, PromptError, PromptTables};
use crate::scheduler::{from_micros, to_samples};
use crate::session::{Backends, Completion, Control, ControlReply, StateSnapshot};

pub use device_link::serve_device;
use engine::{spawn_monitor, Command, Engine, Shared};

/// Longest audio chunk served at once, in frames.
pub const MAX_CHUNK_FRAMES: usize = 10 * 44_100;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("no session")]
    NoSession,
    #[error("bad image: {0}")]
    BadImage(String),
    #[error(transparent)]
    Instruments(#[from] PromptError),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("{0}")]
    Busy(String),
    #[error("{0}")]
    Conflict(String),
    #[error("engine stopped")]
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self {
            ApiError::NoSession => (StatusCode::NOT_FOUND, "NoSession"),
            ApiError::BadImage(_) => (StatusCode::BAD_REQUEST, "BadImage"),
            ApiError::Instruments(PromptError::InstrumentCapViolation(_)) => {
                (StatusCode::BAD_REQUEST, "InstrumentCapViolation")
            }
            ApiError::Instruments(_) => (StatusCode::BAD_REQUEST, "BadInstruments"),
            ApiError::BadRequest(_) => (StatusCode::BAD_REQUEST, "BadRequest"),
            ApiError::Busy(_) => (StatusCode::CONFLICT, "Busy"),
            ApiError::Conflict(_) => (StatusCode::CONFLICT, "InvalidState"),
            ApiError::Stopped => (StatusCode::SERVICE_UNAVAILABLE, "Stopped"),
        };
        let body = ErrorBody {
            error: kind.into(),
            message: self.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureAccepted {
    pub session: String,
    pub capture: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub blocks: u64,
    pub underruns: u64,
    pub position: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixWebhook {
    pub task_id: String,
    pub status: RemoteStatus,
}

/// Handle shared by the HTTP routes and device links.
#[derive(Clone)]
pub struct ServiceHandle {
    tx: mpsc::UnboundedSender<Command>,
    shared: Arc<Shared>,
}

impl ServiceHandle {
    async fn ask<T>(&self, make: impl FnOnce(engine::Reply<T>) -> Command) -> Result<T, ApiError> {
        let (reply, rx) = oneshot::channel();
        self.tx.send(make(reply)).map_err(|_| ApiError::Stopped)?;
        rx.await.map_err(|_| ApiError::Stopped)?
    }

    pub(crate) fn send(&self, cmd: Command) -> Result<(), ApiError> {
        self.tx.send(cmd).map_err(|_| ApiError::Stopped)
    }

    pub fn monitor(&self) -> MonitorReport {
        let m = &self.shared.monitor;
        MonitorReport {
            blocks: m.blocks.load(Ordering::Relaxed),
            underruns: m.underruns.load(Ordering::Relaxed),
            position: m.position.load(Ordering::Relaxed),
        }
    }
}

/// The running service: routes, engine task and real-time monitor.
/// Must be created inside a tokio runtime.
pub struct Service {
    pub handle: ServiceHandle,
    pub router: Router,
    monitor: Option<std::thread::JoinHandle<()>>,
}

impl Service {
    pub fn new(config: Config, tables: PromptTables, backends: Backends) -> Self {
        let shared = Arc::new(Shared::new());
        let tx = Engine::spawn(config, tables, backends, shared.clone());
        let handle = ServiceHandle {
            tx,
            shared: shared.clone(),
        };
        let router = router(handle.clone());
        Self {
            handle,
            router,
            monitor: Some(spawn_monitor(shared)),
        }
    }
}

impl Drop for Service {
    fn drop(&mut self) {
        self.handle.shared.monitor.stop.store(true, Ordering::Relaxed);
        if let Some(t) = self.monitor.take() {
            let _ = t.join();
        }
    }
}

pub fn router(handle: ServiceHandle) -> Router {
    Router::new()
        .route("/session", post(open_session))
        .route("/capture", post(capture))
        .route("/camera", post(camera))
        .route("/control", post(control))
        .route("/state", get(state))
        .route("/events", get(events))
        .route("/audio/chunk", get(audio_chunk))
        .route("/monitor", get(monitor))
        .route("/webhook/mix", post(webhook))
        .layer(DefaultBodyLimit::max(32 * 1024 * 1024))
        .with_state(handle)
}

async fn open_session(State(h): State<ServiceHandle>) -> Result<impl IntoResponse, ApiError> {
    let id = h.ask(Command::Open).await?;
    Ok((StatusCode::CREATED, Json(serde_json::json!({ "session": id }))))
}

async fn capture(State(h): State<ServiceHandle>, mut form: Multipart) -> Result<impl IntoResponse, ApiError> {
    let mut image = None;
    let mut instruments = None;
    while let Some(field) = form.next_field().await.map_err(|e| ApiError::BadRequest(e.to_string()))? {
        match field.name() {
            Some("image") => {
                let bytes = field.bytes().await.map_err(|e| ApiError::BadRequest(e.to_string()))?;
                image = Some(bytes.to_vec());
            }
            Some("instruments") => {
                let text = field.text().await.map_err(|e| ApiError::BadRequest(e.to_string()))?;
                instruments = Some(InstrumentSelection::parse_list(&text)?);
            }
            _ => {}
        }
    }
    let bytes = image.ok_or_else(|| ApiError::BadImage("missing image field".into()))?;
    let frame = CaptureFrame::from_jpeg(bytes, 0).map_err(|e| ApiError::BadImage(e.to_string()))?;
    let (session, capture) = h
        .ask(|reply| Command::Capture {
            frame,
            instruments,
            reply,
        })
        .await?;
    Ok((StatusCode::ACCEPTED, Json(CaptureAccepted { session, capture })))
}

async fn camera(State(h): State<ServiceHandle>, body: axum::body::Bytes) -> Result<StatusCode, ApiError> {
    let frame = CaptureFrame::from_jpeg(body.to_vec(), 0).map_err(|e| ApiError::BadImage(e.to_string()))?;
    h.send(Command::Camera(frame))?;
    Ok(StatusCode::NO_CONTENT)
}

async fn control(State(h): State<ServiceHandle>, Json(control): Json<Control>) -> Result<Response, ApiError> {
    match h.ask(|reply| Command::Control { control, reply }).await? {
        ControlReply::Ack => Ok(Json(serde_json::json!({ "status": "ack" })).into_response()),
        ControlReply::Export(wav) => Ok(([(header::CONTENT_TYPE, "audio/wav")], wav).into_response()),
    }
}

async fn state(State(h): State<ServiceHandle>) -> Result<Json<StateSnapshot>, ApiError> {
    Ok(Json(h.ask(Command::State).await?))
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    from: Option<u64>,
}

async fn events(
    State(h): State<ServiceHandle>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<impl IntoResponse, ApiError> {
    if h.shared.session.read().unwrap().is_none() {
        return Err(ApiError::NoSession);
    }
    let resume = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<u64>().ok())
        .map(|id| id + 1);
    let next = resume.or(q.from).unwrap_or(1);
    let rx = h.shared.seq.subscribe();
    let shared = h.shared.clone();
    let stream = futures_util::stream::unfold((shared, next, rx), |(shared, mut next, mut rx)| async move {
        loop {
            rx.borrow_and_update();
            if let Some(ev) = shared.event_from(next) {
                next = ev.seq + 1;
                let event = Event::default()
                    .id(ev.seq.to_string())
                    .event(ev.payload.kind())
                    .json_data(&ev)
                    .expect("events serialize");
                return Some((Ok::<_, Infallible>(event), (shared, next, rx)));
            }
            if rx.changed().await.is_err() {
                return None;
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

#[derive(Debug, Deserialize)]
struct ChunkQuery {
    start: Option<i64>,
    frames: Option<usize>,
}

/// Renders from the published timeline copy; never touches the engine.
async fn audio_chunk(State(h): State<ServiceHandle>, Query(q): Query<ChunkQuery>) -> Result<Response, ApiError> {
    let (epoch, tl) = h.shared.timeline().ok_or(ApiError::NoSession)?;
    let frames = q.frames.unwrap_or(44_100);
    if frames == 0 || frames > MAX_CHUNK_FRAMES {
        return Err(ApiError::BadRequest(format!("frames must be 1..={MAX_CHUNK_FRAMES}")));
    }
    let start = q
        .start
        .unwrap_or_else(|| to_samples(from_micros(h.shared.now_us().saturating_sub(epoch))));
    let wav = tokio::task::spawn_blocking(move || encode_wav(&tl.render_range(start, frames)))
        .await
        .map_err(|_| ApiError::Stopped)?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], wav).into_response())
}

async fn monitor(State(h): State<ServiceHandle>) -> Json<MonitorReport> {
    Json(h.monitor())
}

async fn webhook(State(h): State<ServiceHandle>, Json(hook): Json<MixWebhook>) -> Result<StatusCode, ApiError> {
    h.send(Command::Done(Completion::MixWebhook {
        task_id: hook.task_id,
        status: hook.status,
    }))?;
    Ok(StatusCode::NO_CONTENT)
}
