use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::audio::SAMPLE_RATE;

/// Default exponent of the power-law family.
pub const DEFAULT_ALPHA: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum EnvelopeFamily {
    EqualPower,
    PowerLaw { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvelopeError {
    #[error("power-law exponent must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("index {n} outside crossfade window of length {len}")]
    IndexOutOfWindow { n: usize, len: usize },
    #[error("crossfade window must be at least one sample")]
    EmptyWindow,
}

impl EnvelopeFamily {
    pub fn power_law(alpha: f64) -> Result<Self, EnvelopeError> {
        if alpha.is_finite() && alpha > 0.0 {
            Ok(EnvelopeFamily::PowerLaw { alpha })
        } else {
            Err(EnvelopeError::InvalidAlpha(alpha))
        }
    }

    pub fn default_power_law() -> Self {
        EnvelopeFamily::PowerLaw {
            alpha: DEFAULT_ALPHA,
        }
    }

    /// Gains without bounds checking; callers guarantee `n <= len`, `len >= 1`.
    #[inline]
    pub(crate) fn gains_unchecked(&self, n: usize, len: usize) -> (f64, f64) {
        let u = n as f64 / len as f64;
        match *self {
            EnvelopeFamily::EqualPower => {
                let theta = FRAC_PI_2 * u;
                (theta.cos(), theta.sin())
            }
            EnvelopeFamily::PowerLaw { alpha } => ((1.0 - u).powf(alpha), u.powf(alpha)),
        }
    }
}

impl std::fmt::Display for EnvelopeFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EnvelopeFamily::EqualPower => write!(f, "equal_power"),
            EnvelopeFamily::PowerLaw { alpha } => write!(f, "power_law({alpha})"),
        }
    }
}

/// `(g_out, g_in)` at sample `n` of an `len`-sample window, `0 <= n <= len`.
pub fn envelope_gains(
    family: EnvelopeFamily,
    n: usize,
    len: usize,
) -> Result<(f64, f64), EnvelopeError> {
    if len == 0 {
        return Err(EnvelopeError::EmptyWindow);
    }
    if n > len {
        return Err(EnvelopeError::IndexOutOfWindow { n, len });
    }
    if let EnvelopeFamily::PowerLaw { alpha } = family {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(EnvelopeError::InvalidAlpha(alpha));
        }
    }
    // exact boundaries: cos(π/2) is 6.1e-17 in floating point
    if n == 0 {
        return Ok((1.0, 0.0));
    }
    if n == len {
        return Ok((0.0, 1.0));
    }
    Ok(family.gains_unchecked(n, len))
}

/// Envelope family plus window length for one splice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossfadePlan {
    pub family: EnvelopeFamily,
    pub window_len_samples: usize,
    pub window_len_seconds: f64,
}

impl CrossfadePlan {
    /// Window of `round(seconds · 44100)` samples (at least one).
    pub fn from_seconds(family: EnvelopeFamily, seconds: f64) -> Result<Self, EnvelopeError> {
        let samples = (seconds * f64::from(SAMPLE_RATE)).round();
        if !(samples >= 1.0) {
            return Err(EnvelopeError::EmptyWindow);
        }
        Ok(Self {
            family,
            window_len_samples: samples as usize,
            window_len_seconds: seconds,
        })
    }

    pub fn with_family(self, family: EnvelopeFamily) -> Self {
        Self { family, ..self }
    }

    pub fn gains(&self, n: usize) -> Result<(f64, f64), EnvelopeError> {
        envelope_gains(self.family, n, self.window_len_samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_power_boundaries_and_midpoint() {
        for len in [1, 2, 64, 441, 1000] {
            assert_eq!(envelope_gains(EnvelopeFamily::EqualPower, 0, len).unwrap(), (1.0, 0.0));
            assert_eq!(envelope_gains(EnvelopeFamily::EqualPower, len, len).unwrap(), (0.0, 1.0));
        }
        let (o, i) = envelope_gains(EnvelopeFamily::EqualPower, 500, 1000).unwrap();
        assert!((o - 0.707_106_781_186_547_6).abs() < 1e-12);
        assert!((i - 0.707_106_781_186_547_6).abs() < 1e-12);
    }

    #[test]
    fn power_law_midpoint() {
        let (o, i) = envelope_gains(EnvelopeFamily::default_power_law(), 500, 1000).unwrap();
        // 0.5^2.5
        assert!((o - 0.176_776_695_296_636_9).abs() < 1e-12);
        assert!((i - 0.176_776_695_296_636_9).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert_eq!(
            envelope_gains(EnvelopeFamily::EqualPower, 11, 10),
            Err(EnvelopeError::IndexOutOfWindow { n: 11, len: 10 })
        );
        assert_eq!(envelope_gains(EnvelopeFamily::EqualPower, 0, 0), Err(EnvelopeError::EmptyWindow));
        assert!(EnvelopeFamily::power_law(0.0).is_err());
        assert!(EnvelopeFamily::power_law(-1.0).is_err());
        assert!(EnvelopeFamily::power_law(f64::NAN).is_err());
        assert!(envelope_gains(EnvelopeFamily::PowerLaw { alpha: -2.0 }, 1, 4).is_err());
    }

    #[test]
    fn plan_window_rounding() {
        let p = CrossfadePlan::from_seconds(EnvelopeFamily::EqualPower, 1.0).unwrap();
        assert_eq!(p.window_len_samples, 44100);
        let p = CrossfadePlan::from_seconds(EnvelopeFamily::EqualPower, 4.0 / 3.0).unwrap();
        assert_eq!(p.window_len_samples, 58800);
        assert!(CrossfadePlan::from_seconds(EnvelopeFamily::EqualPower, 0.0).is_err());
        assert!(CrossfadePlan::from_seconds(EnvelopeFamily::EqualPower, f64::NAN).is_err());
    }

    fn family() -> impl Strategy<Value = EnvelopeFamily> {
        prop_oneof![
            Just(EnvelopeFamily::EqualPower),
            (0.1f64..6.0).prop_map(|alpha| EnvelopeFamily::PowerLaw { alpha }),
        ]
    }

    proptest! {
        #[test]
        fn equal_power_identity(len in 1usize..100_000, frac in 0.0f64..=1.0) {
            let n = ((len as f64) * frac) as usize;
            let (o, i) = envelope_gains(EnvelopeFamily::EqualPower, n, len).unwrap();
            prop_assert!((o * o + i * i - 1.0).abs() < 1e-9);
        }

        #[test]
        fn monotone_gains(fam in family(), len in 1usize..2000) {
            let mut prev = envelope_gains(fam, 0, len).unwrap();
            for n in 1..=len {
                let g = envelope_gains(fam, n, len).unwrap();
                prop_assert!(g.0 <= prev.0 + 1e-15);
                prop_assert!(g.1 >= prev.1 - 1e-15);
                prev = g;
            }
        }

        #[test]
        fn exact_boundaries(fam in family(), len in 1usize..5000) {
            prop_assert_eq!(envelope_gains(fam, 0, len).unwrap(), (1.0, 0.0));
            prop_assert_eq!(envelope_gains(fam, len, len).unwrap(), (0.0, 1.0));
        }
    }
}
