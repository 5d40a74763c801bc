use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};

use crate::audio::SAMPLE_RATE;
use crate::caption::{BPM_MAX, BPM_MIN};

/// Exact session time in seconds.
pub type Seconds = Ratio<i128>;

/// Minimum crossfade length in seconds.
pub const MIN_CROSSFADE: (i128, i128) = (3, 10);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SchedulerError {
    #[error("tempo {0} BPM outside the accepted {BPM_MIN}..={BPM_MAX} range")]
    TempoOutOfRange(f64),
    #[error("clip of {clip:.3} s is shorter than one bar ({bar:.3} s)")]
    ClipShorterThanBar { clip: f64, bar: f64 },
    #[error("crossfade of {crossfade:.3} s does not fit in a {length:.3} s section")]
    CrossfadeLongerThanSection { crossfade: f64, length: f64 },
    #[error("hot-swap request {0} was superseded before its boundary")]
    SwapSuperseded(u64),
    #[error("replacement audio must be at {SAMPLE_RATE} Hz, got {0} Hz")]
    WrongSampleRate(u32),
    #[error("replacement audio is empty")]
    EmptyReplacement,
    #[error("nothing is playing yet")]
    NotPlaying,
    #[error("section {got} appended out of order, expected {expected}")]
    OutOfOrder { expected: usize, got: usize },
}

pub fn secs_f64(t: Seconds) -> f64 {
    t.to_f64().unwrap_or(f64::NAN)
}

/// Exact seconds from whole microseconds.
pub fn from_micros(us: u64) -> Seconds {
    Ratio::new(i128::from(us), 1_000_000)
}

/// Exact seconds from a sample count at the engine rate.
pub fn from_samples(n: i64) -> Seconds {
    Ratio::new(i128::from(n), i128::from(SAMPLE_RATE))
}

/// Nearest sample index, halves rounded up.
pub fn to_samples(t: Seconds) -> i64 {
    let scaled = t * Ratio::from_integer(i128::from(SAMPLE_RATE));
    (scaled + Ratio::new(1, 2)).floor().to_integer() as i64
}

/// Tempo is stored in thousandths of a BPM so that every derived duration is
/// an exact fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SessionClock {
    milli_bpm: i128,
}

impl SessionClock {
    pub fn new(bpm: f64) -> Result<Self, SchedulerError> {
        if !bpm.is_finite() || !(BPM_MIN..=BPM_MAX).contains(&bpm) {
            return Err(SchedulerError::TempoOutOfRange(bpm));
        }
        Ok(Self {
            milli_bpm: (bpm * 1000.0).round() as i128,
        })
    }

    pub fn bpm(&self) -> f64 {
        self.milli_bpm as f64 / 1000.0
    }

    pub fn t_beat(&self) -> Seconds {
        Ratio::new(60_000, self.milli_bpm)
    }

    pub fn t_bar(&self) -> Seconds {
        self.t_beat() * 4
    }

    pub fn crossfade(&self) -> Seconds {
        let tempo_scaled = Ratio::new(120_000, self.milli_bpm);
        tempo_scaled.max(Ratio::new(MIN_CROSSFADE.0, MIN_CROSSFADE.1))
    }

    pub fn bar_samples(&self) -> i64 {
        to_samples(self.t_bar())
    }

    /// Whether `t` is a whole number of bars.
    pub fn is_bar_aligned(&self, t: Seconds) -> bool {
        (t / self.t_bar()).is_integer()
    }
}

/// Tempo-adaptive crossfade length in seconds, `max(120/b, 0.3)`.
pub fn crossfade_window(bpm: f64) -> Result<f64, SchedulerError> {
    SessionClock::new(bpm)?;
    Ok((120.0 / bpm).max(0.3))
}

/// Whole bars that fit in a clip.
pub fn fit_bars(clip: Seconds, clock: &SessionClock) -> Result<u32, SchedulerError> {
    let bars = (clip / clock.t_bar()).floor().to_integer();
    if bars < 1 {
        return Err(SchedulerError::ClipShorterThanBar {
            clip: secs_f64(clip),
            bar: secs_f64(clock.t_bar()),
        });
    }
    Ok(bars as u32)
}

/// Nearest bar boundary; a time exactly between two boundaries goes to the later one.
pub fn quantize_to_bar(t: Seconds, clock: &SessionClock) -> Seconds {
    let bars = (t / clock.t_bar() + Ratio::new(1, 2)).floor();
    bars * clock.t_bar()
}

/// First bar boundary at or after `t`.
pub fn next_bar_at_or_after(t: Seconds, clock: &SessionClock) -> Seconds {
    (t / clock.t_bar()).ceil() * clock.t_bar()
}

/// Where the section after `prev` goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    /// Unquantized start, `t_k + L_k - T_cf`; the crossfade would begin here.
    pub nominal: Seconds,
    /// Bar-aligned downbeat of the incoming section.
    pub start: Seconds,
}

impl Placement {
    /// Where the crossfade into the section begins.
    pub fn fade_start(&self, crossfade: Seconds) -> Seconds {
        self.start - crossfade
    }
}

/// Places the next section after one starting at `prev_start` and lasting `prev_length`.
pub fn schedule_next(
    prev_start: Seconds,
    prev_length: Seconds,
    crossfade: Seconds,
    clock: &SessionClock,
) -> Result<Placement, SchedulerError> {
    if crossfade >= prev_length || crossfade < Seconds::zero() {
        return Err(SchedulerError::CrossfadeLongerThanSection {
            crossfade: secs_f64(crossfade),
            length: secs_f64(prev_length),
        });
    }
    let nominal = prev_start + prev_length - crossfade;
    Ok(Placement {
        nominal,
        start: quantize_to_bar(nominal, clock),
    })
}
