//! Scene captioning: frame in, validated [`SceneCaption`] out.

mod parse;
mod schema;

use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, Timed};

pub use parse::{parse_caption_json, MalformedCaption, ParsedCaption};
pub use schema::{CaptureFrame, FrameError, SceneCaption, SectionRole, UnknownRole, BPM_MAX, BPM_MIN};

#[cfg(test)]
pub(crate) use schema::tests::tiny_jpeg;

/// Versioned instruction texts sent alongside the image.
#[derive(Debug, Clone, PartialEq)]
pub struct VisionInstructions {
    pub version: u32,
    pub instruction: String,
    pub repair: String,
}

impl Default for VisionInstructions {
    fn default() -> Self {
        Self {
            version: 1,
            instruction: include_str!("../../assets/vision_instruction.v1.txt").to_string(),
            repair: include_str!("../../assets/vision_repair.v1.txt").to_string(),
        }
    }
}

/// Anything that can look at a frame and answer in text.
pub trait CaptionBackend: Send + Sync {
    fn describe(&self, frame: &CaptureFrame, instruction: &str) -> Result<Timed<String>, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CaptionError {
    #[error(transparent)]
    BackendUnavailable(#[from] BackendError),
    #[error("malformed caption after repair attempt: {0}")]
    MalformedCaption(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptionOutcome {
    pub caption: SceneCaption,
    pub warnings: Vec<String>,
    /// Raw backend text the caption was parsed from.
    pub raw: String,
    /// Total backend time including a repair request.
    pub latency: Duration,
    pub simulated: bool,
    pub attempts: u32,
}

/// Captions a frame, re-asking once with a stricter instruction when the
/// first answer cannot be parsed.
pub fn caption(
    frame: &CaptureFrame,
    backend: &dyn CaptionBackend,
    instructions: &VisionInstructions,
    timeout: Duration,
) -> Result<CaptionOutcome, CaptionError> {
    let call = |text: &str| -> Result<Timed<String>, CaptionError> {
        let reply = backend.describe(frame, text)?;
        if reply.latency > timeout {
            return Err(BackendError::Timeout(timeout).into());
        }
        Ok(reply)
    };
    let first = call(&instructions.instruction)?;
    match parse_caption_json(&first.value) {
        Ok(p) => Ok(CaptionOutcome {
            caption: p.caption,
            warnings: p.warnings,
            raw: first.value,
            latency: first.latency,
            simulated: first.simulated,
            attempts: 1,
        }),
        Err(first_err) => {
            let strict = format!("{}\n\n{}", instructions.instruction, instructions.repair);
            let second = call(&strict)?;
            let p = parse_caption_json(&second.value)
                .map_err(|e| CaptionError::MalformedCaption(format!("{first_err}; then {e}")))?;
            let mut warnings = vec![format!("first answer unreadable ({first_err}), repaired")];
            warnings.extend(p.warnings);
            Ok(CaptionOutcome {
                caption: p.caption,
                warnings,
                raw: second.value,
                latency: first.latency + second.latency,
                simulated: first.simulated && second.simulated,
                attempts: 2,
            })
        }
    }
}

/// On-disk fixture table for [`MockCaptionBackend`]: image SHA-256 to caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionFixtures {
    pub version: u32,
    pub default: FixtureCaption,
    pub captions: HashMap<String, FixtureCaption>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureCaption {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub description: String,
    #[serde(default)]
    pub objects: Vec<String>,
    #[serde(default)]
    pub mood: Vec<String>,
    pub section_role: SectionRole,
    pub genre: String,
    pub bpm: Option<f64>,
}

impl FixtureCaption {
    fn to_json(&self) -> String {
        serde_json::json!({
            "description": self.description,
            "objects": self.objects,
            "mood": self.mood,
            "section_role": self.section_role,
            "genre": self.genre,
            "bpm": self.bpm,
        })
        .to_string()
    }
}

impl CaptionFixtures {
    pub fn builtin() -> Self {
        serde_json::from_str(include_str!("../../fixtures/captions.json"))
            .expect("bundled caption fixtures parse")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Deterministic stand-in keyed on the image digest.
#[derive(Debug, Clone)]
pub struct MockCaptionBackend {
    fixtures: CaptionFixtures,
    latency: Duration,
}

impl MockCaptionBackend {
    pub fn new(fixtures: CaptionFixtures, latency: Duration) -> Self {
        Self { fixtures, latency }
    }

    pub fn builtin(latency: Duration) -> Self {
        Self::new(CaptionFixtures::builtin(), latency)
    }
}

impl CaptionBackend for MockCaptionBackend {
    fn describe(&self, frame: &CaptureFrame, _instruction: &str) -> Result<Timed<String>, BackendError> {
        let entry = self
            .fixtures
            .captions
            .get(frame.sha256())
            .unwrap_or(&self.fixtures.default);
        Ok(Timed::simulated(entry.to_json(), self.latency))
    }
}

/// Serves previously recorded answers per image digest, in order. Used to
/// replay sessions whose captions came from a live service.
#[derive(Debug, Default)]
pub struct RecordedCaptionBackend {
    answers: Mutex<HashMap<String, VecDeque<Result<(String, Duration), BackendError>>>>,
}

impl RecordedCaptionBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, sha256: &str, raw: String, latency: Duration) {
        self.answers
            .lock()
            .unwrap()
            .entry(sha256.to_string())
            .or_default()
            .push_back(Ok((raw, latency)));
    }

    /// Queues a failed answer.
    pub fn push_failure(&self, sha256: &str, error: BackendError) {
        self.answers
            .lock()
            .unwrap()
            .entry(sha256.to_string())
            .or_default()
            .push_back(Err(error));
    }
}

impl CaptionBackend for RecordedCaptionBackend {
    fn describe(&self, frame: &CaptureFrame, _instruction: &str) -> Result<Timed<String>, BackendError> {
        let mut answers = self.answers.lock().unwrap();
        let (raw, latency) = answers
            .get_mut(frame.sha256())
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| BackendError::Unavailable(format!("no recorded caption for {}", frame.sha256())))??;
        Ok(Timed::simulated(raw, latency))
    }
}

/// Chat-completions style vision endpoint taking an inline base64 image.
#[derive(Debug, Clone)]
pub struct LiveCaptionBackend {
    pub endpoint: String,
    pub model: String,
    pub api_key: String,
    pub timeout: Duration,
}

impl CaptionBackend for LiveCaptionBackend {
    fn describe(&self, frame: &CaptureFrame, instruction: &str) -> Result<Timed<String>, BackendError> {
        use base64::Engine as _;
        let image = base64::engine::general_purpose::STANDARD.encode(&frame.image_bytes);
        let body = serde_json::json!({
            "model": self.model,
            "response_format": {"type": "json_object"},
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": instruction},
                    {"type": "image_url", "image_url": {"url": format!("data:image/jpeg;base64,{image}")}}
                ]
            }]
        });
        let started = Instant::now();
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let reply: serde_json::Value = client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| crate::backend::http_error(e, self.timeout))?;
        let text = reply
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .ok_or_else(|| BackendError::Rejected("response has no message content".into()))?;
        Ok(Timed::measured(text.to_string(), started.elapsed()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scripted(Mutex<VecDeque<Result<String, BackendError>>>);

    impl Scripted {
        fn new(items: Vec<Result<&str, BackendError>>) -> Self {
            Self(Mutex::new(items.into_iter().map(|r| r.map(str::to_string)).collect()))
        }
    }

    impl CaptionBackend for Scripted {
        fn describe(&self, _f: &CaptureFrame, _i: &str) -> Result<Timed<String>, BackendError> {
            self.0
                .lock()
                .unwrap()
                .pop_front()
                .expect("script exhausted")
                .map(|s| Timed::simulated(s, Duration::from_millis(100)))
        }
    }

    fn frame() -> CaptureFrame {
        CaptureFrame::from_jpeg(tiny_jpeg(64, 48, 1), 0).unwrap()
    }

    const TIMEOUT: Duration = Duration::from_secs(10);

    #[test]
    fn night_street_fixture() {
        let bytes = std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/images/night_street.jpg")).unwrap();
        let f = CaptureFrame::from_jpeg(bytes, 0).unwrap();
        let backend = MockCaptionBackend::builtin(Duration::from_millis(1200));
        let out = caption(&f, &backend, &VisionInstructions::default(), TIMEOUT).unwrap();
        assert_eq!(out.caption.section_role, SectionRole::Verse);
        assert_eq!(out.caption.genre, "ambient chill");
        assert_eq!(out.caption.bpm, Some(90.0));
        assert_eq!(out.caption.mood, vec!["moody", "lush"]);
        assert_eq!(out.latency, Duration::from_millis(1200));
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn unknown_image_gets_default() {
        let backend = MockCaptionBackend::builtin(Duration::ZERO);
        let out = caption(&frame(), &backend, &VisionInstructions::default(), TIMEOUT).unwrap();
        assert_eq!(out.caption.section_role, SectionRole::Verse);
        assert_eq!(out.caption.genre, "ambient");
        assert_eq!(out.caption.bpm, Some(100.0));
    }

    #[test]
    fn mock_is_deterministic() {
        let backend = MockCaptionBackend::builtin(Duration::ZERO);
        let a = caption(&frame(), &backend, &VisionInstructions::default(), TIMEOUT).unwrap();
        let b = caption(&frame(), &backend, &VisionInstructions::default(), TIMEOUT).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_role_and_wild_bpm() {
        let backend = Scripted::new(vec![Ok(r#"{"description": "alley", "genre": "trip hop", "bpm": 500}"#)]);
        let out = caption(&frame(), &backend, &VisionInstructions::default(), TIMEOUT).unwrap();
        assert_eq!(out.caption.section_role, SectionRole::Verse);
        assert_eq!(out.caption.bpm, Some(240.0));
        assert_eq!(out.warnings.len(), 2);
    }

    #[test]
    fn one_repair_attempt() {
        let backend = Scripted::new(vec![Ok("Sure! Here is a lovely street."), Ok(r#"{"description": "street"}"#)]);
        let out = caption(&frame(), &backend, &VisionInstructions::default(), TIMEOUT).unwrap();
        assert_eq!(out.attempts, 2);
        assert_eq!(out.latency, Duration::from_millis(200));

        let backend = Scripted::new(vec![Ok("no"), Ok("still no")]);
        let err = caption(&frame(), &backend, &VisionInstructions::default(), TIMEOUT).unwrap_err();
        assert!(matches!(err, CaptionError::MalformedCaption(_)));
    }

    #[test]
    fn backend_failures() {
        let backend = Scripted::new(vec![Err(BackendError::Unavailable("down".into()))]);
        let err = caption(&frame(), &backend, &VisionInstructions::default(), TIMEOUT).unwrap_err();
        assert!(matches!(err, CaptionError::BackendUnavailable(_)));

        let slow = MockCaptionBackend::builtin(Duration::from_secs(11));
        let err = caption(&frame(), &slow, &VisionInstructions::default(), TIMEOUT).unwrap_err();
        assert_eq!(err, CaptionError::BackendUnavailable(BackendError::Timeout(TIMEOUT)));
    }

    #[test]
    fn recorded_backend_replays_in_order() {
        let f = frame();
        let rec = RecordedCaptionBackend::new();
        rec.push(f.sha256(), r#"{"description": "one"}"#.into(), Duration::from_millis(5));
        rec.push(f.sha256(), r#"{"description": "two"}"#.into(), Duration::from_millis(6));
        let i = VisionInstructions::default();
        assert_eq!(caption(&f, &rec, &i, TIMEOUT).unwrap().caption.description, "one");
        let second = caption(&f, &rec, &i, TIMEOUT).unwrap();
        assert_eq!(second.caption.description, "two");
        assert_eq!(second.latency, Duration::from_millis(6));
        assert!(caption(&f, &rec, &i, TIMEOUT).is_err());
    }
}
