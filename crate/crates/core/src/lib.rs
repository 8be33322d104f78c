//! Streaming collision forecasting over per-frame object tracks.
//!
//! Observations are grouped by frame and fed to a [`collision::Engine`]. Each
//! object keeps a short history window; on cadence frames every moving object
//! is extrapolated a fixed number of frames ahead and the predictions are
//! checked for time-aligned box overlaps. Past predictions are kept in a
//! ledger so their residuals against later observations can drive an optional
//! anomaly gate.
//!
//! The [`simulator`] produces annotated synthetic scenes and [`evaluation`]
//! scores alert streams against their ground truth.

pub mod cli;
pub mod collision;
pub mod config;
pub mod deviation;
pub mod evaluation;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod predictor;
pub mod simulator;

pub use collision::{boxes_overlap, pair_intersection, CanonicalPair, CollisionAlert, Engine, StepError};
pub use config::{ConfigError, EngineConfig, Gating, RunConfig};
pub use model::{BBox, ClassLabel, Frame, Mobility, ObjectId, ObjectState, PredictedTrajectory, TrackWindow};
pub use predictor::{make_predictor, Predictor, PredictorKind, PredictorSpec};
