//! Point-mass gate environment.
//!
//! A 2D point mass is driven by an MP acceleration profile and must pass
//! through one of two openings in a wall before stopping at a goal behind
//! it. The context is `(goal_x, gate1_x, gate2_x)`; gate centers never fall
//! inside the middle band, which puts a hard hole into the context support.
//! Two gates make the optimal behavior space bimodal.

use ndarray::ArrayView1;

use super::{ContextSpace, Environment, EpisodeResult};
use crate::error::{Error, Result};
use crate::primitives::{basis_matrix, BasisConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct GateConfig {
    pub horizon: usize,
    pub dt: f64,
    /// y coordinate of the wall.
    pub wall_y: f64,
    /// Half-width of each gate opening.
    pub gate_half_width: f64,
    /// y coordinate of the goal line.
    pub goal_y: f64,
    pub max_accel: f64,
    pub action_weight: f64,
    pub goal_weight: f64,
    pub collision_penalty: f64,
    pub success_threshold: f64,
    pub n_basis: usize,
    pub bandwidth: f64,
    /// Gate centers must satisfy `gate1_x <= -gate_band` and
    /// `gate2_x >= gate_band`.
    pub gate_band: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            horizon: 100,
            dt: 0.05,
            wall_y: 0.5,
            gate_half_width: 0.1,
            goal_y: 0.9,
            max_accel: 10.0,
            action_weight: 1.0,
            goal_weight: 200.0,
            collision_penalty: 5.0,
            success_threshold: 0.05,
            n_basis: 5,
            bandwidth: 1.0,
            gate_band: 0.2,
        }
    }
}

pub struct GateEnv {
    cfg: GateConfig,
    space: ContextSpace,
    basis: BasisConfig,
}

impl GateEnv {
    pub fn new(cfg: GateConfig) -> Result<Self> {
        if cfg.horizon < 2 || !(cfg.dt > 0.0) {
            return Err(Error::InvalidConfig("gate env horizon/dt invalid".into()));
        }
        if !(cfg.gate_band > 0.0) || !(cfg.gate_half_width > 0.0) {
            return Err(Error::InvalidConfig("gate geometry must be positive".into()));
        }
        if !(cfg.goal_y > cfg.wall_y) || !(cfg.wall_y > 0.0) {
            return Err(Error::InvalidConfig("gate env needs 0 < wall_y < goal_y".into()));
        }
        // Context: (goal_x, gate1_x, gate2_x), all within [-0.8, 0.8].
        let space = ContextSpace::new(vec![-0.8; 3], vec![0.8; 3])?;
        let basis = BasisConfig::new(cfg.n_basis, cfg.horizon, cfg.dt, cfg.bandwidth, 2)?;
        Ok(Self { cfg, space, basis })
    }

    pub fn config(&self) -> &GateConfig {
        &self.cfg
    }

    fn in_gate(&self, x: f64, gate1_x: f64, gate2_x: f64) -> bool {
        (x - gate1_x).abs() <= self.cfg.gate_half_width
            || (x - gate2_x).abs() <= self.cfg.gate_half_width
    }
}

impl Environment for GateEnv {
    fn name(&self) -> &'static str {
        "gate"
    }

    fn context_space(&self) -> &ContextSpace {
        &self.space
    }

    fn is_valid(&self, c: ArrayView1<f64>) -> bool {
        c[1] <= -self.cfg.gate_band && c[2] >= self.cfg.gate_band
    }

    fn basis(&self) -> &BasisConfig {
        &self.basis
    }

    fn success_threshold(&self) -> f64 {
        self.cfg.success_threshold
    }

    fn evaluate(&self, context: ArrayView1<f64>, theta: ArrayView1<f64>) -> Result<EpisodeResult> {
        if context.len() != 3 {
            return Err(Error::ShapeMismatch("gate context is (goal_x, gate1_x, gate2_x)".into()));
        }
        if theta.len() != self.param_dim() {
            return Err(Error::ShapeMismatch(format!(
                "gate env expects {} MP weights, got {}",
                self.param_dim(),
                theta.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("MP weights".into()));
        }
        let cfg = &self.cfg;
        let (goal_x, gate1_x, gate2_x) = (context[0], context[1], context[2]);
        let goal = [goal_x, cfg.goal_y];
        let phi = basis_matrix(&self.basis)?;
        let nb = cfg.n_basis;

        let mut pos = [0.0f64, 0.0];
        let mut vel = [0.0f64, 0.0];
        let mut torque_cost = 0.0;
        let mut collision = false;
        let mut trace = Vec::with_capacity(cfg.horizon);
        trace.push(pos);
        for t in 0..cfg.horizon {
            let mut accel = [0.0f64, 0.0];
            for axis in 0..2 {
                let mut a = 0.0;
                for k in 0..nb {
                    a += phi[(t, k)] * theta[axis * nb + k];
                }
                accel[axis] = a.clamp(-cfg.max_accel, cfg.max_accel);
            }
            torque_cost += cfg.action_weight * (accel[0] * accel[0] + accel[1] * accel[1]);
            vel[0] += accel[0] * cfg.dt;
            vel[1] += accel[1] * cfg.dt;
            let next = [pos[0] + vel[0] * cfg.dt, pos[1] + vel[1] * cfg.dt];

            // Wall crossing test on the segment pos -> next.
            let dy = next[1] - pos[1];
            if dy != 0.0 {
                let s = (cfg.wall_y - pos[1]) / dy;
                if (0.0..=1.0).contains(&s) {
                    let x_cross = pos[0] + s * (next[0] - pos[0]);
                    if !self.in_gate(x_cross, gate1_x, gate2_x) {
                        collision = true;
                        pos = [x_cross, cfg.wall_y];
                        trace.push(pos);
                        break;
                    }
                }
            }
            pos = next;
            trace.push(pos);
        }

        let final_distance = ((pos[0] - goal[0]).powi(2) + (pos[1] - goal[1]).powi(2)).sqrt();
        let mut episodic_return = -torque_cost - cfg.goal_weight * final_distance;
        if collision {
            episodic_return -= cfg.collision_penalty;
        }
        let terminal_speed_sq = vel[0] * vel[0] + vel[1] * vel[1];
        Ok(EpisodeResult {
            episodic_return,
            success: !collision && final_distance < cfg.success_threshold,
            final_distance,
            torque_cost,
            terminal_speed_sq,
            collision,
            tip_trace: trace,
            final_joints: Vec::new(),
        })
    }
}
