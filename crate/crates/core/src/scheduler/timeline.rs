use std::sync::Arc;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::audio::{AudioBuffer, Frame, SAMPLE_RATE};
use crate::caption::SectionRole;
use crate::crossfade::{
    evaluate_candidate, select_envelope, CrossfadePlan, EnvelopeFamily, PolicyConfig, SpliceCost,
    SpliceMaterial,
};

use super::clock::{
    fit_bars, from_samples, next_bar_at_or_after, schedule_next, secs_f64, to_samples, Placement,
    SchedulerError, Seconds, SessionClock,
};

#[derive(Debug, Clone, PartialEq)]
pub struct TimelineConfig {
    /// Edits never take effect sooner than this after "now".
    pub lookahead: Seconds,
    pub policy: PolicyConfig,
    /// When set, splices into sections flagged ambient use the default
    /// power-law envelope as long as the level change stays within this many dB.
    pub ambient_max_delta_db: Option<f64>,
}

impl Default for TimelineConfig {
    fn default() -> Self {
        Self {
            lookahead: Seconds::new(1, 4),
            policy: PolicyConfig::default(),
            ambient_max_delta_db: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapReason {
    PreviewMix,
    Mastered,
    Manual,
}

impl SwapReason {
    pub fn as_str(self) -> &'static str {
        match self {
            SwapReason::PreviewMix => "preview_mix",
            SwapReason::Mastered => "mastered",
            SwapReason::Manual => "manual",
        }
    }
}

#[derive(Debug, Clone)]
pub struct HotSwapRequest {
    pub replacement: Arc<AudioBuffer>,
    pub earliest_time: Seconds,
    pub reason: SwapReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwapTicket {
    pub id: u64,
    pub reason: SwapReason,
    pub boundary: Seconds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwapOutcome {
    pub ticket: SwapTicket,
    pub result: Result<Seconds, SchedulerError>,
}

/// Generated audio handed to the scheduler.
#[derive(Debug, Clone)]
pub struct SectionAudio {
    pub clip: Arc<AudioBuffer>,
    pub role: SectionRole,
    /// Sparse material eligible for the ambient envelope override.
    pub ambient: bool,
}

#[derive(Debug, Clone)]
pub struct ScheduledSection {
    pub index: usize,
    pub bar_count: u32,
    pub length: Seconds,
    /// Bar-aligned downbeat; sample 0 of `buffer` plays here.
    pub start: Seconds,
    /// Unquantized start from the previous section, where the crossfade begins.
    pub nominal_start: Seconds,
    /// Clip truncated to whole bars.
    pub buffer: Arc<AudioBuffer>,
    pub role: SectionRole,
    /// Envelope used when fading this section in.
    pub crossfade: CrossfadePlan,
    pub splice_cost: Option<SpliceCost>,
}

impl ScheduledSection {
    pub fn end(&self) -> Seconds {
        self.start + self.length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentOrigin {
    Section(usize),
    Swap { ticket: u64, reason: SwapReason },
}

/// A source playing from `start_sample` until the next segment begins.
///
/// The source loops: at sample `p` it contributes
/// `source[(p - anchor_sample) mod len]`. The fade into a segment occupies the
/// window just before its start, so an incoming source is heard from its own
/// tail during the crossfade and reaches sample 0 exactly on the downbeat.
#[derive(Debug, Clone)]
pub struct Segment {
    pub start: Seconds,
    pub start_sample: i64,
    pub anchor_sample: i64,
    pub source: Arc<AudioBuffer>,
    pub origin: SegmentOrigin,
    pub role: SectionRole,
    pub ambient: bool,
    pub fade_in: Option<CrossfadePlan>,
    /// The fade window holds identical audio on both sides and is copied through.
    pub passthrough: bool,
}

impl Segment {
    #[inline]
    fn at(&self, p: i64) -> Frame {
        let len = self.source.len() as i64;
        self.source.frames()[(p - self.anchor_sample).rem_euclid(len) as usize]
    }

    fn span(&self, from: i64, len: usize) -> Vec<Frame> {
        (0..len as i64).map(|i| self.at(from + i)).collect()
    }
}

#[derive(Debug, Clone)]
struct PendingSwap {
    ticket: SwapTicket,
    request: HotSwapRequest,
}

/// The session timeline: sections, the segments actually rendered, and
/// hot-swaps waiting for their boundary.
///
/// All edits land at least one look-ahead margin in the future, so audio
/// already handed to the output never changes.
#[derive(Debug, Clone)]
pub struct Timeline {
    clock: SessionClock,
    config: TimelineConfig,
    sections: Vec<ScheduledSection>,
    segments: Vec<Segment>,
    pending: Vec<PendingSwap>,
    outbox: Vec<SwapOutcome>,
    next_ticket: u64,
}

impl Timeline {
    pub fn new(clock: SessionClock, config: TimelineConfig) -> Self {
        Self {
            clock,
            config,
            sections: Vec::new(),
            segments: Vec::new(),
            pending: Vec::new(),
            outbox: Vec::new(),
            next_ticket: 1,
        }
    }

    pub fn clock(&self) -> &SessionClock {
        &self.clock
    }

    pub fn config(&self) -> &TimelineConfig {
        &self.config
    }

    pub fn sections(&self) -> &[ScheduledSection] {
        &self.sections
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_playing(&self) -> bool {
        !self.segments.is_empty()
    }

    pub fn crossfade_plan(&self) -> CrossfadePlan {
        CrossfadePlan::from_seconds(EnvelopeFamily::EqualPower, secs_f64(self.clock.crossfade()))
            .expect("crossfade is at least 0.3 s")
    }

    /// End of the last section's first pass.
    pub fn end(&self) -> Seconds {
        self.sections.last().map_or_else(Seconds::zero, ScheduledSection::end)
    }

    pub fn end_sample(&self) -> i64 {
        to_samples(self.end())
    }

    pub fn pending_swaps(&self) -> impl Iterator<Item = &SwapTicket> {
        self.pending.iter().map(|p| &p.ticket)
    }

    /// Where section `sections.len()` would go if appended at `now`.
    ///
    /// Starts from the last section; when its crossfade would begin inside the
    /// look-ahead margin the last section is assumed to loop once more.
    pub fn next_placement(&self, now: Seconds) -> Result<Option<Placement>, SchedulerError> {
        let Some(prev) = self.sections.last() else {
            return Ok(None);
        };
        let crossfade = self.clock.crossfade();
        let earliest = now + self.config.lookahead;
        let mut iteration = prev.start;
        loop {
            let p = schedule_next(iteration, prev.length, crossfade, &self.clock)?;
            if p.fade_start(crossfade) >= earliest {
                return Ok(Some(p));
            }
            iteration += prev.length;
        }
    }

    /// Truncates the clip to whole bars and places it after the last section.
    pub fn append_section(
        &mut self,
        audio: SectionAudio,
        now: Seconds,
    ) -> Result<&ScheduledSection, SchedulerError> {
        if !audio.clip.is_engine_rate() {
            return Err(SchedulerError::WrongSampleRate(audio.clip.sample_rate()));
        }
        let clip_len = from_samples(audio.clip.len() as i64);
        let bars = fit_bars(clip_len, &self.clock)?;
        let length = self.clock.t_bar() * i128::from(bars);
        let keep = (to_samples(length) as usize).min(audio.clip.len());
        let buffer = Arc::new(audio.clip.truncated(keep));
        let index = self.sections.len();

        let placement = self.next_placement(now)?.unwrap_or(Placement {
            nominal: Seconds::zero(),
            start: Seconds::zero(),
        });
        let start_sample = to_samples(placement.start);
        self.segments.retain(|s| s.start_sample < start_sample);
        self.segments.push(Segment {
            start: placement.start,
            start_sample,
            anchor_sample: start_sample,
            source: Arc::clone(&buffer),
            origin: SegmentOrigin::Section(index),
            role: audio.role,
            ambient: audio.ambient,
            fade_in: None,
            passthrough: false,
        });
        let last = self.segments.len() - 1;
        let cost = self.replan(last);
        let crossfade = self.segments[last].fade_in.unwrap_or_else(|| self.crossfade_plan());

        self.sections.push(ScheduledSection {
            index,
            bar_count: bars,
            length,
            start: placement.start,
            nominal_start: placement.nominal,
            buffer,
            role: audio.role,
            crossfade,
            splice_cost: cost,
        });
        Ok(self.sections.last().expect("just pushed"))
    }

    /// Chooses the fade into segment `j` from the audio on both sides.
    fn replan(&mut self, j: usize) -> Option<SpliceCost> {
        if j == 0 {
            self.segments[0].fade_in = None;
            self.segments[0].passthrough = false;
            return None;
        }
        let base = self.crossfade_plan();
        let n = base.window_len_samples;
        let guard = self.config.policy.guard;
        let (prev, next) = (&self.segments[j - 1], &self.segments[j]);
        let fade_start = next.start_sample - n as i64;
        let pre = prev.span(fade_start - guard as i64, guard);
        let outgoing = prev.span(fade_start, n);
        let incoming = next.span(fade_start, n);
        let post = next.span(next.start_sample, guard);
        let passthrough = outgoing == incoming;
        let material = SpliceMaterial {
            pre: &pre,
            outgoing: &outgoing,
            incoming: &incoming,
            post: &post,
        };
        let ctx = material.context(next.role, self.config.policy.lambda);
        let forced = match self.config.ambient_max_delta_db {
            Some(limit) if next.ambient => ctx.delta_p_db.map_or(true, |d| d.abs() <= limit),
            _ => false,
        };
        let (family, cost) = if forced {
            let family = EnvelopeFamily::default_power_law();
            (family, evaluate_candidate(family, &material, &ctx, self.config.policy.tau))
        } else {
            select_envelope(&ctx, &material, &self.config.policy)
        };
        let seg = &mut self.segments[j];
        seg.fade_in = Some(base.with_family(family));
        seg.passthrough = passthrough;
        Some(cost)
    }

    /// Queues a source replacement for the first bar boundary at least one
    /// look-ahead margin after `earliest_time` (or after `now`, if later).
    ///
    /// A pending request with the same reason is superseded; its outcome is
    /// reported by the next [`Timeline::commit_due`].
    pub fn request_hot_swap(
        &mut self,
        request: HotSwapRequest,
        now: Seconds,
    ) -> Result<SwapTicket, SchedulerError> {
        if !request.replacement.is_engine_rate() {
            return Err(SchedulerError::WrongSampleRate(request.replacement.sample_rate()));
        }
        if request.replacement.is_empty() {
            return Err(SchedulerError::EmptyReplacement);
        }
        if !self.is_playing() {
            return Err(SchedulerError::NotPlaying);
        }
        let from = request.earliest_time.max(now) + self.config.lookahead;
        let boundary = next_bar_at_or_after(from.max(Seconds::zero()), &self.clock);
        let ticket = SwapTicket {
            id: self.next_ticket,
            reason: request.reason,
            boundary,
        };
        self.next_ticket += 1;
        let (superseded, kept): (Vec<_>, Vec<_>) = std::mem::take(&mut self.pending)
            .into_iter()
            .partition(|p| p.ticket.reason == request.reason);
        self.pending = kept;
        for old in superseded {
            self.outbox.push(SwapOutcome {
                ticket: old.ticket,
                result: Err(SchedulerError::SwapSuperseded(old.ticket.id)),
            });
        }
        self.pending.push(PendingSwap { ticket, request });
        Ok(ticket)
    }

    /// Time at which the earliest pending swap must be committed.
    pub fn next_commit_time(&self) -> Option<Seconds> {
        self.pending
            .iter()
            .map(|p| p.ticket.boundary - self.config.lookahead)
            .min()
    }

    /// Commits every swap whose boundary is within the look-ahead margin of
    /// `now`, and reports superseded requests.
    pub fn commit_due(&mut self, now: Seconds) -> Vec<SwapOutcome> {
        let mut out = std::mem::take(&mut self.outbox);
        let lookahead = self.config.lookahead;
        let (mut due, kept): (Vec<_>, Vec<_>) = std::mem::take(&mut self.pending)
            .into_iter()
            .partition(|p| p.ticket.boundary - lookahead <= now);
        self.pending = kept;
        due.sort_by(|a, b| (a.ticket.boundary, a.ticket.id).cmp(&(b.ticket.boundary, b.ticket.id)));
        for p in due {
            self.apply_swap(&p);
            out.push(SwapOutcome {
                ticket: p.ticket,
                result: Ok(p.ticket.boundary),
            });
        }
        out
    }

    /// The replacement fades in over `[boundary, boundary + T_cf)`, so nothing
    /// before the boundary changes; it plays alone from the end of the fade.
    fn apply_swap(&mut self, p: &PendingSwap) {
        let n = self.crossfade_plan().window_len_samples as i64;
        let b = to_samples(p.ticket.boundary) + n;
        let j = self
            .segments
            .iter()
            .rposition(|s| s.start_sample <= b)
            .unwrap_or(0);
        let covering = &self.segments[j];
        let anchor_sample = match p.ticket.reason {
            SwapReason::Mastered => 0,
            SwapReason::PreviewMix | SwapReason::Manual => covering.anchor_sample,
        };
        let seg = Segment {
            start: from_samples(b),
            start_sample: b,
            anchor_sample,
            source: Arc::clone(&p.request.replacement),
            origin: SegmentOrigin::Swap {
                ticket: p.ticket.id,
                reason: p.ticket.reason,
            },
            role: covering.role,
            ambient: covering.ambient,
            fade_in: None,
            passthrough: false,
        };
        let at = if covering.start_sample == b { j } else { j + 1 };
        if at == j {
            self.segments[j] = seg;
        } else {
            self.segments.insert(at, seg);
        }
        self.replan(at);
        if at + 1 < self.segments.len() {
            self.replan(at + 1);
        }
    }

    /// Renders samples `[start, start + out.len())` of the session.
    pub fn render_into(&self, start: i64, out: &mut [Frame]) {
        let mut j = 0usize;
        for (i, slot) in out.iter_mut().enumerate() {
            let p = start + i as i64;
            while j + 1 < self.segments.len() && self.segments[j + 1].start_sample <= p {
                j += 1;
            }
            let Some(seg) = self.segments.get(j) else {
                *slot = [0.0; 2];
                continue;
            };
            if p < seg.start_sample {
                // before the first downbeat
                *slot = [0.0; 2];
                continue;
            }
            let mut frame = seg.at(p);
            if let Some(next) = self.segments.get(j + 1) {
                if let (Some(plan), false) = (next.fade_in, next.passthrough) {
                    let len = plan.window_len_samples;
                    let offset = p - (next.start_sample - len as i64);
                    if offset >= 0 {
                        let (g_out, g_in) = if offset == 0 {
                            (1.0, 0.0)
                        } else {
                            plan.family.gains_unchecked(offset as usize, len)
                        };
                        let y = next.at(p);
                        for ch in 0..2 {
                            let z = g_out * f64::from(frame[ch]) + g_in * f64::from(y[ch]);
                            frame[ch] = z.clamp(-1.0, 1.0) as f32;
                        }
                    }
                }
            }
            *slot = frame;
        }
    }

    pub fn render_range(&self, start: i64, len: usize) -> AudioBuffer {
        let mut out = vec![[0.0f32; 2]; len];
        self.render_into(start, &mut out);
        AudioBuffer::new(SAMPLE_RATE, out)
    }

    /// Whole session from time 0 to the end of the last section.
    pub fn render(&self) -> AudioBuffer {
        self.render_range(0, self.end_sample().max(0) as usize)
    }

    /// The same sections with every hot-swap removed, as they were first scheduled.
    pub fn sections_only(&self) -> Timeline {
        let mut t = Timeline::new(self.clock, self.config.clone());
        t.sections = self.sections.clone();
        t.segments = self
            .sections
            .iter()
            .map(|s| Segment {
                start: s.start,
                start_sample: to_samples(s.start),
                anchor_sample: to_samples(s.start),
                source: Arc::clone(&s.buffer),
                origin: SegmentOrigin::Section(s.index),
                role: s.role,
                ambient: false,
                fade_in: (s.index > 0).then_some(s.crossfade),
                passthrough: false,
            })
            .collect();
        for j in 1..t.segments.len() {
            let n = t.segments[j].fade_in.map_or(0, |p| p.window_len_samples);
            let from = t.segments[j].start_sample - n as i64;
            t.segments[j].passthrough = t.segments[j - 1].span(from, n) == t.segments[j].span(from, n);
        }
        t
    }
}

/// Pulls fixed-size blocks from whatever timeline snapshot is current.
///
/// The renderer never waits: when no audio is scheduled it writes silence
/// and counts an underrun.
#[derive(Debug, Clone, Default)]
pub struct StreamingRenderer {
    position: i64,
    underruns: u64,
    blocks: u64,
}

impl StreamingRenderer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn position(&self) -> i64 {
        self.position
    }

    pub fn underruns(&self) -> u64 {
        self.underruns
    }

    pub fn blocks(&self) -> u64 {
        self.blocks
    }

    pub fn render_block(&mut self, timeline: &Timeline, out: &mut [Frame]) {
        if timeline.is_playing() {
            timeline.render_into(self.position, out);
        } else {
            out.fill([0.0; 2]);
            self.underruns += 1;
        }
        self.position += out.len() as i64;
        self.blocks += 1;
    }
}
