//! Decision core for embodied object-goal navigation.
//!
//! An agent streams noisy object observations into a spatial memory bank,
//! maintains an occupancy grid with frontier extraction, and at every arrival
//! point scores all remembered objects and open frontiers with one unified
//! scorer. The highest score decides between grounding an object (ending the
//! search) and exploring a frontier.
//!
//! Scenes are procedurally generated, so every goal has known ground truth
//! and the usual navigation metrics (SR, SPL, s-SR, t-SR) can be computed
//! exactly.

pub mod agent;
pub mod collect;
pub mod config;
pub mod decide;
pub mod error;
pub mod eval;
pub mod geom;
pub mod io;
pub mod mapping;
pub mod memory;
pub mod par;
pub mod percept;
pub mod pipeline;
pub mod plan;
pub mod rng;
pub mod scene;
pub mod sim;

pub use error::{Error, Result};
