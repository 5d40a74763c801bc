use serde::{Deserialize, Serialize};

use crate::audio::{Frame, PowerMeasure};
use crate::audio::Decibels;
use crate::caption::SectionRole;

use super::envelope::EnvelopeFamily;

/// Tunables of the envelope selection objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    /// Power-law exponents tried alongside the equal-power pair.
    pub alpha_grid: Vec<f64>,
    /// Weight of the transient penalty.
    pub lambda: f64,
    /// Per-sample jump tolerated before the transient penalty applies.
    pub tau: f64,
    /// Samples on each side of the overlap included in the transient penalty.
    pub guard: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            alpha_grid: vec![1.5, 2.0, 2.5, 3.0],
            lambda: 1.0,
            tau: 0.05,
            guard: 256,
        }
    }
}

/// Audio around one splice: `outgoing` and `incoming` cover the overlap window
/// sample for sample; `pre` is outgoing audio just before the window and
/// `post` incoming audio just after it.
#[derive(Debug, Clone, Copy)]
pub struct SpliceMaterial<'a> {
    pub pre: &'a [Frame],
    pub outgoing: &'a [Frame],
    pub incoming: &'a [Frame],
    pub post: &'a [Frame],
}

impl<'a> SpliceMaterial<'a> {
    pub fn window_len(&self) -> usize {
        self.outgoing.len()
    }

    /// Context for this splice: power target from the outgoing window and
    /// the level difference of incoming over outgoing.
    pub fn context(&self, role: SectionRole, lambda: f64) -> SpliceContext {
        let out_rms = crate::audio::power::frames_rms(self.outgoing);
        let in_rms = crate::audio::power::frames_rms(self.incoming);
        let delta_p_db = match (Decibels::from_linear(in_rms), Decibels::from_linear(out_rms)) {
            (Decibels::Level(a), Decibels::Level(b)) => Some(a - b),
            _ => None,
        };
        SpliceContext {
            delta_p_db,
            section_role: role,
            p_target: PowerMeasure {
                window_start: 0,
                window_len: self.outgoing.len(),
                rms: out_rms,
                rms_db: Decibels::from_linear(out_rms),
            },
            lambda,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpliceContext {
    /// Incoming minus outgoing level over the window; `None` when either side is silent.
    pub delta_p_db: Option<f64>,
    pub section_role: SectionRole,
    pub p_target: PowerMeasure,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpliceCost {
    pub loudness_mismatch: f64,
    pub transient_cost: f64,
    pub total: f64,
}

/// Thresholded squared first-difference energy of a mono sequence.
pub fn transient_cost(z: &[f64], tau: f64) -> f64 {
    z.windows(2)
        .map(|w| {
            let excess = (w[1] - w[0]).abs() - tau;
            if excess > 0.0 {
                excess * excess
            } else {
                0.0
            }
        })
        .sum()
}

/// Sum over the window of `(|z[n]|² − target)²`, where `|z[n]|²` is the
/// instantaneous power averaged over both channels.
pub fn loudness_mismatch(z: &[[f64; 2]], target: f64) -> f64 {
    z.iter()
        .map(|f| {
            let d = 0.5 * (f[0] * f[0] + f[1] * f[1]) - target;
            d * d
        })
        .sum()
}

#[inline]
fn mono(f: Frame) -> f64 {
    0.5 * (f64::from(f[0]) + f64::from(f[1]))
}

/// Cost of one candidate envelope on the given material.
pub fn evaluate_candidate(
    family: EnvelopeFamily,
    material: &SpliceMaterial<'_>,
    ctx: &SpliceContext,
    tau: f64,
) -> SpliceCost {
    let len = material.window_len();
    let z: Vec<[f64; 2]> = (0..len)
        .map(|n| {
            let (g_out, g_in) = if n == 0 {
                (1.0, 0.0)
            } else {
                family.gains_unchecked(n, len)
            };
            let x = material.outgoing[n];
            let y = material.incoming[n];
            [
                (g_out * f64::from(x[0]) + g_in * f64::from(y[0])).clamp(-1.0, 1.0),
                (g_out * f64::from(x[1]) + g_in * f64::from(y[1])).clamp(-1.0, 1.0),
            ]
        })
        .collect();
    let loudness = loudness_mismatch(&z, ctx.p_target.mean_square());

    let region: Vec<f64> = material
        .pre
        .iter()
        .map(|&f| mono(f))
        .chain(z.iter().map(|f| 0.5 * (f[0] + f[1])))
        .chain(material.post.iter().map(|&f| mono(f)))
        .collect();
    let transient = transient_cost(&region, tau);
    SpliceCost {
        loudness_mismatch: loudness,
        transient_cost: transient,
        total: loudness + ctx.lambda * transient,
    }
}

/// Picks the envelope with the lowest total cost. Candidates are the
/// equal-power pair followed by the power-law grid in ascending order; ties
/// keep the earlier candidate.
pub fn select_envelope(
    ctx: &SpliceContext,
    material: &SpliceMaterial<'_>,
    config: &PolicyConfig,
) -> (EnvelopeFamily, SpliceCost) {
    let mut alphas: Vec<f64> = config
        .alpha_grid
        .iter()
        .copied()
        .filter(|a| a.is_finite() && *a > 0.0)
        .collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();

    let mut best = (
        EnvelopeFamily::EqualPower,
        evaluate_candidate(EnvelopeFamily::EqualPower, material, ctx, config.tau),
    );
    for alpha in alphas {
        let fam = EnvelopeFamily::PowerLaw { alpha };
        let cost = evaluate_candidate(fam, material, ctx, config.tau);
        if cost.total < best.1.total {
            best = (fam, cost);
        }
    }
    best
}
