//! Session timeline: tempo math, section placement, hot-swaps and rendering.

mod clock;
mod timeline;

pub use clock::{
    crossfade_window, fit_bars, from_micros, from_samples, next_bar_at_or_after, quantize_to_bar,
    schedule_next, secs_f64, to_samples, Placement, SchedulerError, Seconds, SessionClock,
};
pub use timeline::{
    HotSwapRequest, ScheduledSection, SectionAudio, Segment, SegmentOrigin, StreamingRenderer,
    SwapOutcome, SwapReason, SwapTicket, Timeline, TimelineConfig,
};
