//! Drives an [`Engine`] over a whole frame-grouped stream.

use std::time::{Duration, Instant};

use crate::collision::{CollisionAlert, Engine, StepError};
use crate::config::{ConfigError, EngineConfig};
use crate::ingest::{interpolate_gaps, group_by_frame, FrameGroup};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Step(#[from] StepError),
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub alerts: Vec<CollisionAlert>,
    pub frames_processed: usize,
    pub objects_seen: usize,
    pub wall_time: Duration,
}

/// Fills short gaps (up to `config.max_gap`), then steps the engine frame by frame.
pub fn run_stream(config: &EngineConfig, frames: &[FrameGroup]) -> Result<RunOutcome, RunError> {
    let started = Instant::now();
    let flat: Vec<_> = frames.iter().flat_map(|g| g.states.iter().cloned()).collect();
    let filled = group_by_frame(interpolate_gaps(&flat, config.max_gap));
    let mut engine = Engine::new(config.clone())?;
    let mut alerts = Vec::new();
    for group in &filled {
        alerts.extend(engine.step(group.frame, &group.states)?);
    }
    Ok(RunOutcome {
        alerts,
        frames_processed: filled.len(),
        objects_seen: engine.objects_seen(),
        wall_time: started.elapsed(),
    })
}
