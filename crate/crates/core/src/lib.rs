//! Graph learning on event-camera streams.
//!
//! The crate is organised bottom-up:
//!
//! - [`events`]: the 5-byte address-event codec, CSV I/O, densest-window
//!   selection, a threshold-crossing DVS simulator and a synthetic dataset
//!   generator.
//! - [`graphbuild`]: spatio-temporal radius graphs over `(x, y, t̂)`, edge
//!   pseudo-coordinates, byte-level memory accounting and a binary graph cache.
//! - [`ndiff`]: dense kernels with hand-written backward passes, losses, Adam
//!   and a finite-difference gradient checker.
//! - [`gconv`]: GCN, GraphSAGE, EdgeConv, PointNet and SplineConv operators,
//!   voxel max pooling and fixed-grid readout.
//! - [`models`]: the seven-layer classifier and the residual PointNet detector.
//! - [`engine`]: splitting, training, accuracy / mAP@0.5 and throughput.
//! - [`cli`]: the `evgraph` command line, a thin adapter over the modules above.

pub mod cli;
pub mod engine;
pub mod error;
pub mod events;
pub mod gconv;
pub mod graphbuild;
pub mod models;
pub mod ndiff;

pub use error::{Error, Result};
