use serde::{Deserialize, Serialize};

use super::{CaptureState, Orchestrator, Stage};

/// Histogram bin width, seconds.
pub const BIN_SECONDS: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub count: usize,
    pub min_s: f64,
    pub mean_s: f64,
    pub max_s: f64,
    /// `(bin start in seconds, count)` for non-empty bins.
    pub histogram: Vec<(f64, usize)>,
}

impl StageStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self {
                count: 0,
                min_s: 0.0,
                mean_s: 0.0,
                max_s: 0.0,
                histogram: Vec::new(),
            };
        }
        let mut bins = std::collections::BTreeMap::<i64, usize>::new();
        for &s in samples {
            *bins.entry((s / BIN_SECONDS).floor() as i64).or_default() += 1;
        }
        Self {
            count: samples.len(),
            min_s: samples.iter().copied().fold(f64::INFINITY, f64::min),
            mean_s: samples.iter().sum::<f64>() / samples.len() as f64,
            max_s: samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            histogram: bins.into_iter().map(|(b, n)| (b as f64 * BIN_SECONDS, n)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionLatency {
    pub section: usize,
    pub capture: u64,
    pub caption_s: f64,
    pub generation_s: f64,
    /// Wait for earlier captures before the section could be placed.
    pub schedule_s: f64,
    /// Host compute on the capture's path.
    pub processing_s: f64,
    /// Capture to section in the loop: service time plus host compute.
    pub end_to_end_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub caption: f64,
    pub generation: f64,
    pub mix: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub sections: Vec<SectionLatency>,
    pub caption: StageStats,
    pub generation: StageStats,
    pub schedule: StageStats,
    pub processing: StageStats,
    pub end_to_end: StageStats,
    pub costs: CostSummary,
    pub failed_captures: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReportError {
    #[error("no section has completed yet")]
    NoCompletedSections,
}

fn secs(us: u64) -> f64 {
    us as f64 / 1e6
}

impl LatencyReport {
    pub fn from_session(orch: &Orchestrator) -> Result<Self, ReportError> {
        let mut sections = Vec::new();
        for c in orch.captures() {
            let (Some(section), Some(captioned), Some(generated), Some(scheduled)) =
                (c.section, c.caption_at_us, c.generated_at_us, c.scheduled_at_us)
            else {
                continue;
            };
            let processing_s = c.processing.as_secs_f64();
            sections.push(SectionLatency {
                section,
                capture: c.id,
                caption_s: secs(captioned - c.at_us),
                generation_s: secs(generated - captioned),
                schedule_s: secs(scheduled - generated),
                processing_s,
                end_to_end_s: secs(scheduled - c.at_us) + processing_s,
            });
        }
        if sections.is_empty() {
            return Err(ReportError::NoCompletedSections);
        }
        sections.sort_by_key(|s| s.section);
        let stats = |f: fn(&SectionLatency) -> f64| StageStats::from_samples(&sections.iter().map(f).collect::<Vec<_>>());
        let sum = |stage: Stage| orch.costs().iter().filter(|c| c.stage == stage).map(|c| c.units).sum::<f64>();
        let (caption, generation, mix) = (sum(Stage::Caption), sum(Stage::Generation), sum(Stage::Mix));
        Ok(Self {
            caption: stats(|s| s.caption_s),
            generation: stats(|s| s.generation_s),
            schedule: stats(|s| s.schedule_s),
            processing: stats(|s| s.processing_s),
            end_to_end: stats(|s| s.end_to_end_s),
            costs: CostSummary {
                caption,
                generation,
                mix,
                total: caption + generation + mix,
            },
            failed_captures: orch
                .captures()
                .iter()
                .filter(|c| c.state == CaptureState::Failed)
                .count(),
            sections,
        })
    }
}
