//! Backend-agnostic frame detection.
//!
//! A [`Detector`] turns one frame into raw detections. The gateway applies
//! the profile's overlap suppression, orders the result, and runs frames
//! across a pool of workers, each holding its own backend instance.

pub mod fixture;
pub mod profile;
pub mod sidecar;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::FrameRef;
use crate::geometry::{confidence_order, nms, Detection};

pub use fixture::{FixtureBackend, FixtureError, FixtureTable};
pub use profile::{builtin_profiles, find_profile, BackendProfile, InputSizing};
pub use sidecar::{SidecarAddress, SidecarClient};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    /// The backend could not be reached; the request may be retried.
    #[error("transport error: {0}")]
    Transport(String),
    /// The backend answered with something that breaks the protocol.
    #[error("protocol error: {0}")]
    Protocol(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

pub trait Detector: Send {
    fn detect(&mut self, frame: &FrameRef) -> Result<Vec<Detection>, BackendError>;

    /// Re-establish the connection after a transport failure.
    fn reconnect(&mut self) -> Result<(), BackendError> {
        Ok(())
    }
}

impl<D: Detector + ?Sized> Detector for Box<D> {
    fn detect(&mut self, frame: &FrameRef) -> Result<Vec<Detection>, BackendError> {
        (**self).detect(frame)
    }

    fn reconnect(&mut self) -> Result<(), BackendError> {
        (**self).reconnect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDetections {
    pub frame: FrameRef,
    pub detections: Vec<Detection>,
}

pub fn detect_frame<D: Detector + ?Sized>(
    backend: &mut D,
    frame: &FrameRef,
    overlap_threshold: f64,
) -> Result<FrameDetections, BackendError> {
    let raw = backend.detect(frame)?;
    Ok(FrameDetections {
        frame: frame.clone(),
        detections: nms(&raw, overlap_threshold),
    })
}

/// Keep detections strictly above `threshold`.
pub fn filter_confident(dets: &FrameDetections, threshold: f64) -> FrameDetections {
    FrameDetections {
        frame: dets.frame.clone(),
        detections: dets.detections.iter().copied().filter(|d| d.confidence > threshold).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedFrame {
    pub frame: FrameRef,
    pub error: BackendError,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectRun {
    /// Successful frames in timestamp order.
    pub frames: Vec<FrameDetections>,
    pub skipped: Vec<SkippedFrame>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolOptions {
    pub workers: usize,
    pub overlap_threshold: f64,
    /// Extra attempts after a transport failure, each preceded by a reconnect.
    pub retries: usize,
}

impl Default for PoolOptions {
    fn default() -> Self {
        PoolOptions { workers: 1, overlap_threshold: 0.7, retries: 1 }
    }
}

fn detect_with_retry<D: Detector + ?Sized>(
    backend: &mut D,
    frame: &FrameRef,
    opts: &PoolOptions,
) -> Result<FrameDetections, BackendError> {
    let mut attempt = 0;
    loop {
        match detect_frame(backend, frame, opts.overlap_threshold) {
            Err(e) if e.is_retryable() && attempt < opts.retries => {
                attempt += 1;
                log::warn!("{frame}: {e}; reconnecting (attempt {attempt})");
                if let Err(e) = backend.reconnect() {
                    log::warn!("{frame}: reconnect failed: {e}");
                }
            }
            other => return other,
        }
    }
}

/// Run every frame through a pool of backends built by `make_backend`.
///
/// A frame whose backend fails (after retries) is recorded in
/// [`DetectRun::skipped`] and the run continues. Failing to build a backend
/// for a worker aborts the whole run.
pub fn detect_frames<D, F>(make_backend: F, frames: &[FrameRef], opts: &PoolOptions) -> Result<DetectRun, BackendError>
where
    D: Detector,
    F: Fn() -> Result<D, BackendError> + Sync,
{
    let workers = opts.workers.clamp(1, frames.len().max(1));
    let mut backends = Vec::with_capacity(workers);
    for _ in 0..workers {
        backends.push(make_backend()?);
    }

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Result<FrameDetections, BackendError>)>> = Mutex::new(Vec::with_capacity(frames.len()));
    std::thread::scope(|scope| {
        for mut backend in backends {
            let next = &next;
            let results = &results;
            scope.spawn(move || loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                let Some(frame) = frames.get(idx) else { break };
                let outcome = detect_with_retry(&mut backend, frame, opts);
                results.lock().expect("results lock").push((idx, outcome));
            });
        }
    });

    let mut results = results.into_inner().expect("results lock");
    results.sort_by_key(|(idx, _)| *idx);
    let mut run = DetectRun::default();
    for (idx, outcome) in results {
        match outcome {
            Ok(fd) => run.frames.push(fd),
            Err(error) => {
                log::warn!("skipping {}: {error}", frames[idx]);
                run.skipped.push(SkippedFrame { frame: frames[idx].clone(), error });
            }
        }
    }
    run.frames.sort_by_key(|fd| fd.frame.timestamp_s);
    debug_assert!(run.frames.iter().all(|fd| fd.detections.windows(2).all(|w| confidence_order(&w[0], &w[1]).is_le())));
    Ok(run)
}
