//! Desk-scale episodic environments.
//!
//! An environment exposes two things: context sampling (resetting without
//! execution) and episode evaluation of motion-primitive parameters.
//! Evaluation is a pure function of `(context, theta)`.

mod gate;
mod reacher;

pub use gate::{GateConfig, GateEnv};
pub use reacher::{forward_kinematics as reacher_forward_kinematics, ReacherConfig, ReacherEnv};

use ndarray::{Array1, ArrayView1};
use rand::Rng;

use crate::error::{Error, Result};
use crate::primitives::BasisConfig;

/// Axis-aligned bounding box of the context distribution's support.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSpace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ContextSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidConfig("context bounds must be non-empty and equal length".into()));
        }
        for (lo, hi) in lower.iter().zip(&upper) {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::InvalidConfig("context bounds must be finite with lower < upper".into()));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

/// Outcome of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub episodic_return: f64,
    pub success: bool,
    /// Distance of the end effector (or point mass) to the goal at the end.
    pub final_distance: f64,
    /// Accumulated per-step action cost.
    pub torque_cost: f64,
    /// Squared terminal speed (before weighting).
    pub terminal_speed_sq: f64,
    pub collision: bool,
    /// End-effector positions over the episode.
    pub tip_trace: Vec<[f64; 2]>,
    /// Final joint configuration; empty for point-mass environments.
    pub final_joints: Vec<f64>,
}

/// An episodic environment evaluating MP parameter vectors.
pub trait Environment: Send + Sync {
    fn name(&self) -> &'static str;
    fn context_space(&self) -> &ContextSpace;
    /// Validity predicate on top of the bounding box; encodes holes and
    /// discontinuities in the context distribution's support.
    fn is_valid(&self, context: ArrayView1<f64>) -> bool;
    fn basis(&self) -> &BasisConfig;
    /// Length of the parameter vector the policy must produce.
    fn param_dim(&self) -> usize {
        self.basis().param_dim()
    }
    fn context_dim(&self) -> usize {
        self.context_space().dim()
    }
    fn success_threshold(&self) -> f64;
    /// Runs one episode; pure and deterministic in `(context, theta)`.
    fn evaluate(&self, context: ArrayView1<f64>, theta: ArrayView1<f64>) -> Result<EpisodeResult>;
}

/// Draws `n` valid contexts i.i.d. from the environment's distribution by
/// rejection sampling inside the bounding box.
///
/// Fails if the acceptance rate drops below `1e-3`, which indicates a
/// mis-specified validity predicate.
pub fn sample_contexts<R: Rng + ?Sized>(
    env: &dyn Environment,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Array1<f64>>> {
    if n == 0 {
        return Err(Error::InvalidConfig("need at least one context".into()));
    }
    let space = env.context_space();
    let dim = space.dim();
    let mut out = Vec::with_capacity(n);
    let mut candidate = Array1::zeros(dim);
    for _ in 0..n {
        let mut attempts = 0usize;
        loop {
            for d in 0..dim {
                candidate[d] = rng.random_range(space.lower[d]..space.upper[d]);
            }
            if env.is_valid(candidate.view()) {
                out.push(candidate.clone());
                break;
            }
            attempts += 1;
            if attempts >= 1000 {
                return Err(Error::InvalidConfig(format!(
                    "context rejection acceptance rate below 1e-3 in env '{}'",
                    env.name()
                )));
            }
        }
    }
    Ok(out)
}
