//! Duration-routed temporal action localization for narrated videos.
//!
//! Short actions are localized by their subtitle timing; long actions by
//! scoring fixed-length video spans against the action text and merging
//! the best spans into a proposal. The crate also carries the data
//! preparation steps and the evaluation and agreement metrics.

pub mod dataprep;
pub mod eval;
pub mod features;
pub mod interval;
pub mod localize;
pub mod manifest;
pub mod scorers;
pub mod transcript;

pub use interval::{classify_duration, iou, DurationClass, TimeInterval};
