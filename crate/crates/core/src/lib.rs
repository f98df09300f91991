//! Model- and scene-specific camera sensor parameter selection.
//!
//! The crate simulates a camera with a discrete (ISO, shutter, aperture) grid,
//! trains a small target classifier, scores captures with the classifier's
//! confidence (or an OOD-style alternative), and picks the sensor setting whose
//! capture scores highest. Candidate-selection algorithms trade capture time for
//! accuracy; baselines and oracles bound the result. Score matrices produced
//! elsewhere can be replayed through the same policies.

pub mod bench;
pub mod error;
pub mod exec;
pub mod param_space;
pub mod perception;
pub mod replay;
pub mod scene_sim;
pub mod seed;
pub mod selection;

pub use error::{LensError, Result};
