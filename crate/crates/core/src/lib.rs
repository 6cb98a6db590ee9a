//! Di-SkilL: curriculum reinforcement learning of diverse skills.
//!
//! A mixture-of-experts policy over motion-primitive parameters, where each
//! expert carries its own energy-based context distribution that shapes its
//! training curriculum. Experts are updated with trust-region-projected
//! policy gradients, curricula with a clipped surrogate plus closed-form
//! entropy and variational terms. The crate ships desk-scale planar
//! environments, a deterministic trainer, and multi-seed evaluation tools
//! (IQM learning curves, activity maps, curriculum heat maps, diversity
//! reports).

pub mod envs;
pub mod error;
pub mod nn;
pub mod policy;
pub mod primitives;
pub mod report;
pub mod stats;
pub mod trainer;
pub mod updates;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
