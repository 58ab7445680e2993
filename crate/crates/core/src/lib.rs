//! Deep trajectory toolkit.
//!
//! The pipeline runs dense variational optical flow over each temporal
//! segment of a video, advects a particle grid through the flow to obtain
//! trajectories, projects the trajectories onto per-segment canvases of flow
//! magnitude and classifies the stacked canvases with a small convolutional
//! network.

pub mod advect;
pub mod canvas;
pub mod cnn;
pub mod dataset;
mod error;
pub mod eval;
pub mod flow;
pub mod image;

pub use error::{Error, Result};
