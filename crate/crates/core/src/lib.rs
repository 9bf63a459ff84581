//! Multi-vehicle interaction primitives from tracked detections.
//!
//! Bounding boxes in pixels go through a fixed chain of stages:
//!
//! 1. [`ingest`]: parse, filter and map detections onto the ground plane.
//! 2. [`tracker`]: link detections into tracks with velocities.
//! 3. [`field`]: Gaussian-process relative velocity field around each ego
//!    vehicle on an 11 x 11 grid.
//! 4. [`autoenc`]: compress each 242-value field to 24 latents.
//! 5. [`segmenter`]: weak-limit HDP-HSMM over the latents plus ego speed and
//!    acceleration; each state is a primitive.
//!
//! [`pipeline`] runs the stages from a TOML config and writes one artifact
//! per stage; `tp` is its command-line front end. [`synth`] generates
//! scenes and labeled series with known ground truth and [`eval`] scores
//! results against them.
//!
//! Runnable examples (`cargo run --release --example <name>`):
//! `rectify_detections`, `track_scene`, `velocity_field`,
//! `train_autoencoder`, `segment_synthetic`, `full_pipeline`.

pub mod autoenc;
pub mod error;
pub mod eval;
pub mod field;
pub mod ingest;
pub mod pipeline;
pub mod segmenter;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
