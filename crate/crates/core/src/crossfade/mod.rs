//! Crossfade envelopes, splice mixing and the envelope selection policy.
//!
//! Two envelope families are supported. The equal-power pair
//! `cos(πn/2N)` / `sin(πn/2N)` keeps `g_out² + g_in² = 1` for every `n`; the
//! power-law pair `(1 − n/N)^α` / `(n/N)^α` gives a softer, dipping overlap
//! suited to sparse material.
//!
//! [`select_envelope`] picks a family and parameter per splice by minimizing
//! the squared deviation of the overlap's instantaneous power from a target
//! power, plus a weighted penalty on sample-to-sample jumps around the splice.

mod envelope;
mod policy;
mod splice;

pub use envelope::{envelope_gains, CrossfadePlan, EnvelopeError, EnvelopeFamily};
pub use policy::{
    evaluate_candidate, loudness_mismatch, select_envelope, transient_cost, PolicyConfig,
    SpliceContext, SpliceCost, SpliceMaterial,
};
pub use splice::{mix_window, splice, SpliceError};
