use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use crate::audio::{encode_wav, power::frames_rms, AudioBuffer, SAMPLE_RATE};
use crate::backend::{BackendError, Timed};

use super::{MasterSettings, MixBackend, MixKind, Pan, RemoteStatus, Stem, TaskHandle};

/// Gain applied to the stem sum of a preview mix.
pub const MIX_HEADROOM_DB: f64 = -3.0;
/// RMS level a master is normalized to.
pub const MASTER_TARGET_DBFS: f64 = -14.0;

fn pan_gains(pan: Pan) -> [f64; 2] {
    match pan {
        Pan::Left => [1.0, 0.5],
        Pan::Center => [1.0, 1.0],
        Pan::Right => [0.5, 1.0],
    }
}

/// Sums stems aligned at sample 0 with fixed headroom and each stem's pan.
pub fn mix_stems(stems: &[Stem]) -> AudioBuffer {
    let len = stems.iter().map(|s| s.audio.len()).max().unwrap_or(0);
    let headroom = 10f64.powf(MIX_HEADROOM_DB / 20.0);
    let mut acc = vec![[0.0f64; 2]; len];
    for stem in stems {
        let g = pan_gains(stem.metadata.pan_preference);
        for (a, f) in acc.iter_mut().zip(stem.audio.frames()) {
            a[0] += g[0] * f64::from(f[0]);
            a[1] += g[1] * f64::from(f[1]);
        }
    }
    let frames = acc
        .iter()
        .map(|a| [(a[0] * headroom) as f32, (a[1] * headroom) as f32])
        .collect();
    AudioBuffer::new(SAMPLE_RATE, frames)
}

/// Applies gain until the RMS sits at `target_dbfs`; clipping after each pass
/// is made up by the next one.
pub fn master_to_target(buf: &AudioBuffer, target_dbfs: f64) -> AudioBuffer {
    let target = 10f64.powf(target_dbfs / 20.0);
    let mut out = buf.clone();
    for _ in 0..4 {
        let rms = frames_rms(out.frames());
        if rms == 0.0 || (20.0 * (rms / target).log10()).abs() < 0.001 {
            break;
        }
        out = out.scaled(target / rms);
    }
    out
}

#[derive(Debug, Clone)]
struct MockTask {
    ready_at_us: u64,
    wav: Vec<u8>,
}

/// In-process mixing service. Jobs finish a fixed time after upload.
#[derive(Debug)]
pub struct MockMixBackend {
    pub preview_latency: Duration,
    pub master_latency: Duration,
    pub upload_latency: Duration,
    /// Announce completion through the webhook instead of waiting for polls.
    pub webhook: bool,
    pub fail_jobs: bool,
    pub fail_uploads: bool,
    tasks: Mutex<HashMap<String, MockTask>>,
    counter: AtomicU64,
}

impl Default for MockMixBackend {
    fn default() -> Self {
        Self {
            preview_latency: Duration::from_millis(5200),
            master_latency: Duration::from_millis(8600),
            upload_latency: Duration::ZERO,
            webhook: false,
            fail_jobs: false,
            fail_uploads: false,
            tasks: Mutex::new(HashMap::new()),
            counter: AtomicU64::new(0),
        }
    }
}

impl MockMixBackend {
    pub fn with_latencies(preview: Duration, master: Duration) -> Self {
        Self {
            preview_latency: preview,
            master_latency: master,
            ..Self::default()
        }
    }

    fn latency(&self, kind: MixKind) -> Duration {
        match kind {
            MixKind::PreviewMix => self.preview_latency,
            MixKind::Master => self.master_latency,
        }
    }
}

impl MixBackend for MockMixBackend {
    fn upload(
        &self,
        kind: MixKind,
        stems: &[Stem],
        master: Option<&MasterSettings>,
        now_us: u64,
    ) -> Result<Timed<TaskHandle>, BackendError> {
        if self.fail_uploads {
            return Err(BackendError::Unavailable("mock upload refused".into()));
        }
        let result = match kind {
            MixKind::PreviewMix => mix_stems(stems),
            MixKind::Master => {
                let target = master.map_or(MASTER_TARGET_DBFS, |m| m.target_dbfs);
                master_to_target(&mix_stems(stems), target)
            }
        };
        let n = self.counter.fetch_add(1, Ordering::SeqCst) + 1;
        let task_id = format!("mock-{}-{n}", kind.as_str());
        let ready_at_us = now_us
            + (self.upload_latency + self.latency(kind)).as_micros() as u64;
        self.tasks.lock().expect("mock task table").insert(
            task_id.clone(),
            MockTask {
                ready_at_us,
                wav: encode_wav(&result),
            },
        );
        Ok(Timed::simulated(
            TaskHandle {
                task_id,
                webhook_after: self.webhook.then(|| self.latency(kind)),
            },
            self.upload_latency,
        ))
    }

    fn status(&self, task_id: &str, now_us: u64) -> Result<Timed<RemoteStatus>, BackendError> {
        let tasks = self.tasks.lock().expect("mock task table");
        let task = tasks
            .get(task_id)
            .ok_or_else(|| BackendError::Rejected(format!("unknown task {task_id}")))?;
        let status = if now_us < task.ready_at_us {
            RemoteStatus::Processing
        } else if self.fail_jobs {
            RemoteStatus::Failed {
                reason: "mock mixing failure".into(),
            }
        } else {
            RemoteStatus::Ready
        };
        Ok(Timed::simulated(status, Duration::ZERO))
    }

    fn fetch(&self, task_id: &str) -> Result<Timed<Vec<u8>>, BackendError> {
        let tasks = self.tasks.lock().expect("mock task table");
        let task = tasks
            .get(task_id)
            .ok_or_else(|| BackendError::Rejected(format!("unknown task {task_id}")))?;
        Ok(Timed::simulated(task.wav.clone(), Duration::ZERO))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mix::{StemDefaults, StemMetadata};
    use std::sync::Arc;

    fn stem(v: f32, pan: Pan) -> Stem {
        let mut metadata: StemMetadata = StemDefaults::default().metadata("s");
        metadata.pan_preference = pan;
        Stem {
            section: Some(0),
            audio: Arc::new(AudioBuffer::new(SAMPLE_RATE, vec![[v, v]; 100])),
            metadata,
        }
    }

    #[test]
    fn mix_headroom_and_pan() {
        let m = mix_stems(&[stem(0.4, Pan::Center), stem(0.2, Pan::Left)]);
        let h = 10f64.powf(-3.0 / 20.0);
        assert!((f64::from(m.frame(0)[0]) - 0.6 * h).abs() < 1e-6);
        assert!((f64::from(m.frame(0)[1]) - 0.5 * h).abs() < 1e-6);
        assert!(mix_stems(&[]).is_empty());
    }

    #[test]
    fn silence_masters_to_silence() {
        let s = AudioBuffer::silence(SAMPLE_RATE, 10);
        assert_eq!(master_to_target(&s, -14.0), s);
    }
}
