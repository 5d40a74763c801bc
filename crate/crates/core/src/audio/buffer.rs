use std::sync::Arc;

use super::SAMPLE_RATE;

/// One stereo sample pair, `[left, right]`.
pub type Frame = [f32; 2];

/// An immutable-by-convention stereo buffer.
///
/// Channel count is fixed at two by construction, so the "all channels have
/// equal length" invariant cannot be broken.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    sample_rate: u32,
    frames: Vec<Frame>,
}

impl AudioBuffer {
    /// Builds a buffer, clamping every sample into `[-1, 1]` and mapping
    /// non-finite values to silence.
    pub fn new(sample_rate: u32, mut frames: Vec<Frame>) -> Self {
        for frame in &mut frames {
            for s in frame.iter_mut() {
                *s = sanitize(*s);
            }
        }
        Self { sample_rate, frames }
    }

    pub fn silence(sample_rate: u32, len: usize) -> Self {
        Self {
            sample_rate,
            frames: vec![[0.0; 2]; len],
        }
    }

    /// Stereo buffer at the engine rate with both channels equal to `mono`.
    pub fn from_mono(sample_rate: u32, mono: &[f32]) -> Self {
        Self::new(sample_rate, mono.iter().map(|&s| [s, s]).collect())
    }

    pub fn from_channels(sample_rate: u32, left: &[f32], right: &[f32]) -> Self {
        assert_eq!(left.len(), right.len(), "channel length mismatch");
        Self::new(
            sample_rate,
            left.iter().zip(right).map(|(&l, &r)| [l, r]).collect(),
        )
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Sample count per channel.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, index: usize) -> Frame {
        self.frames[index]
    }

    pub fn channel(&self, ch: usize) -> impl Iterator<Item = f32> + '_ {
        self.frames.iter().map(move |f| f[ch])
    }

    pub fn duration_seconds(&self) -> f64 {
        self.frames.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn is_engine_rate(&self) -> bool {
        self.sample_rate == SAMPLE_RATE
    }

    /// Copy of the first `len` frames (or the whole buffer when shorter).
    pub fn truncated(&self, len: usize) -> Self {
        Self {
            sample_rate: self.sample_rate,
            frames: self.frames[..len.min(self.frames.len())].to_vec(),
        }
    }

    /// Multiplies every sample by `gain` and clamps the result.
    pub fn scaled(&self, gain: f64) -> Self {
        Self::new(
            self.sample_rate,
            self.frames
                .iter()
                .map(|f| [(f64::from(f[0]) * gain) as f32, (f64::from(f[1]) * gain) as f32])
                .collect(),
        )
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn into_shared(self) -> Arc<Self> {
        Arc::new(self)
    }

    /// Peak absolute sample value over both channels.
    pub fn peak(&self) -> f32 {
        self.frames
            .iter()
            .flat_map(|f| f.iter())
            .fold(0.0f32, |m, s| m.max(s.abs()))
    }
}

#[inline]
pub(crate) fn sanitize(s: f32) -> f32 {
    if s.is_finite() {
        s.clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_clamps_and_drops_non_finite() {
        let b = AudioBuffer::new(SAMPLE_RATE, vec![[2.0, -3.0], [f32::NAN, f32::INFINITY]]);
        assert_eq!(b.frames(), &[[1.0, -1.0], [0.0, 0.0]]);
    }

    #[test]
    fn mono_is_duplicated() {
        let b = AudioBuffer::from_mono(SAMPLE_RATE, &[0.25, -0.5]);
        assert_eq!(b.frames(), &[[0.25, 0.25], [-0.5, -0.5]]);
    }
}
