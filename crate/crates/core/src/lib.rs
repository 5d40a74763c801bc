//! Image-steered loop composition.
//!
//! A captured frame is captioned into a [`caption::SceneCaption`], turned into
//! a one-sentence music prompt, rendered by a text-to-music backend into a
//! fixed-length clip, trimmed to whole bars and spliced into a continuous,
//! bar-aligned loop with tempo-adaptive crossfades. Preview mixes and masters
//! run as background jobs and are hot-swapped into the loop at bar
//! boundaries.

pub mod audio;
pub mod backend;
pub mod caption;
pub mod crossfade;
pub mod prompt;
pub mod scheduler;
pub mod generation;
pub mod mix;
pub mod config;
pub mod device;
pub mod session;
pub mod service;
