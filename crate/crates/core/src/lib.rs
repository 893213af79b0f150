//! # conjucode
//!
//! Simulation and decoding of position and velocity from two coding channels
//! embedded in the same spike trains:
//!
//! * **firing rates**, the exponentially integrated spike count of each cell
//!   (read out by *sigma* decoders), and
//! * **co-firing rates**, pooled *chi rates* of ordered cell pairs that
//!   measure time-averaged between-cell spike intervals (read out by
//!   *sigma-chi* decoders).
//!
//! The crate is organised bottom-up:
//!
//! * [`trajectory`] generates or ingests behaviour on a shared 1 kHz clock;
//! * [`encoders`] turns behaviour into binary spike rasters for head-direction
//!   cells, circular-track grid cells and theta ring oscillators;
//! * [`rates`] integrates rasters into firing rates, chi rates and banded
//!   co-firing rates with a streaming kernel;
//! * [`decoder`] fits and applies linear read-outs with lag sweeps;
//! * [`experiments`] holds the metrics and the scenario harness (E1..E7);
//! * [`cli`] backs the `conjucode` binary.
//!
//! Runnable walkthroughs live in `crates/core/examples/`.

pub mod cli;
pub mod decoder;
pub mod encoders;
pub mod error;
pub mod experiments;
pub mod io;
pub mod rates;
pub mod rng;
pub mod trajectory;

pub use error::{Error, Result};
pub use trajectory::{SampleClock, Trajectory, TrajectoryKind};
