use crate::audio::{AudioBuffer, Frame, SAMPLE_RATE};

use super::envelope::CrossfadePlan;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("crossfade window of {window} samples exceeds {which} buffer of {available} samples")]
pub struct SpliceError {
    pub window: usize,
    pub which: &'static str,
    pub available: usize,
}

/// Mixes `outgoing` and `incoming` (both exactly one window long) into `out`.
///
/// `out[n] = g_out(n)·outgoing[n] + g_in(n)·incoming[n]`, clamped to `[-1, 1]`.
pub fn mix_window(plan: &CrossfadePlan, outgoing: &[Frame], incoming: &[Frame], out: &mut [Frame]) {
    let len = plan.window_len_samples;
    debug_assert!(outgoing.len() == len && incoming.len() == len && out.len() == len);
    for n in 0..len {
        let (g_out, g_in) = if n == 0 {
            (1.0, 0.0)
        } else {
            plan.family.gains_unchecked(n, len)
        };
        let x = outgoing[n];
        let y = incoming[n];
        for ch in 0..2 {
            let z = g_out * f64::from(x[ch]) + g_in * f64::from(y[ch]);
            out[n][ch] = z.clamp(-1.0, 1.0) as f32;
        }
    }
}

/// Overlap region of a splice: the last `N` samples of `outgoing` faded out
/// against the first `N` samples of `incoming`.
pub fn splice(
    outgoing: &AudioBuffer,
    incoming: &AudioBuffer,
    plan: &CrossfadePlan,
) -> Result<AudioBuffer, SpliceError> {
    let len = plan.window_len_samples;
    if outgoing.len() < len {
        return Err(SpliceError {
            window: len,
            which: "outgoing",
            available: outgoing.len(),
        });
    }
    if incoming.len() < len {
        return Err(SpliceError {
            window: len,
            which: "incoming",
            available: incoming.len(),
        });
    }
    let tail = &outgoing.frames()[outgoing.len() - len..];
    let head = &incoming.frames()[..len];
    let mut out = vec![[0.0f32; 2]; len];
    mix_window(plan, tail, head, &mut out);
    Ok(AudioBuffer::new(SAMPLE_RATE, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::rms_power;
    use crate::crossfade::EnvelopeFamily;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plan(family: EnvelopeFamily, n: usize) -> CrossfadePlan {
        CrossfadePlan {
            family,
            window_len_samples: n,
            window_len_seconds: n as f64 / 44100.0,
        }
    }

    #[test]
    fn silence_in_silence_out() {
        let s = AudioBuffer::silence(SAMPLE_RATE, 500);
        let z = splice(&s, &s, &plan(EnvelopeFamily::EqualPower, 400)).unwrap();
        assert_eq!(z.len(), 400);
        assert!(z.frames().iter().all(|f| *f == [0.0, 0.0]));
    }

    #[test]
    fn constant_half_equal_power_shape() {
        let n = 1000;
        let c = AudioBuffer::new(SAMPLE_RATE, vec![[0.5, 0.5]; n]);
        let z = splice(&c, &c, &plan(EnvelopeFamily::EqualPower, n)).unwrap();
        let mut peak = (0, 0.0f32);
        for (i, f) in z.frames().iter().enumerate() {
            let theta = std::f64::consts::PI * i as f64 / (2.0 * n as f64);
            let expect = 0.5 * (theta.cos() + theta.sin());
            assert!((f64::from(f[0]) - expect).abs() < 1e-6);
            if f[0] > peak.1 {
                peak = (i, f[0]);
            }
        }
        assert_eq!(peak.0, n / 2);
        assert!((f64::from(peak.1) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
    }

    #[test]
    fn equal_power_keeps_noise_rms() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 44100;
        let mut noise = || {
            AudioBuffer::new(
                SAMPLE_RATE,
                (0..n).map(|_| [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)]).collect(),
            )
        };
        let a = noise();
        let b = noise();
        let z = splice(&a, &b, &plan(EnvelopeFamily::EqualPower, n)).unwrap();
        let input = rms_power(&a, 0, n).unwrap().rms_db.as_f64();
        let overlap = rms_power(&z, 0, n).unwrap().rms_db.as_f64();
        assert!((overlap - input).abs() <= 1.0, "{overlap} vs {input}");
    }

    #[test]
    fn mixing_clamps() {
        let c = AudioBuffer::new(SAMPLE_RATE, vec![[1.0, -1.0]; 100]);
        let z = splice(&c, &c, &plan(EnvelopeFamily::EqualPower, 100)).unwrap();
        assert!(z.frames().iter().all(|f| f[0] <= 1.0 && f[1] >= -1.0));
        assert_eq!(z.frame(50), [1.0, -1.0]);
    }

    #[test]
    fn window_longer_than_inputs() {
        let short = AudioBuffer::silence(SAMPLE_RATE, 10);
        let long = AudioBuffer::silence(SAMPLE_RATE, 100);
        let p = plan(EnvelopeFamily::EqualPower, 50);
        assert_eq!(splice(&short, &long, &p).unwrap_err().which, "outgoing");
        assert_eq!(splice(&long, &short, &p).unwrap_err().which, "incoming");
    }
}
