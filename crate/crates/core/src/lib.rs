//! Turn a full soccer match recording into a highlights reel.
//!
//! The pipeline makes three passes: sample frames from the video at a fixed
//! interval, detect highlight events (foul, corner kick, goal, penalty kick)
//! in each frame and record them in a per-second metadata file, then merge
//! padded event windows into a cut list and render it with an external media
//! tool. An evaluation harness scores the result against annotated events.

pub mod annotation;
pub mod config;
pub mod detector;
pub mod eval;
pub mod event;
pub mod frames;
pub mod geometry;
pub mod pipeline;
pub mod planner;
pub mod render;
pub mod timeline;

pub use config::PipelineConfig;
pub use event::EventClass;
pub use geometry::{BoundingBox, Detection, ImageDims};
pub use pipeline::PipelineError;
