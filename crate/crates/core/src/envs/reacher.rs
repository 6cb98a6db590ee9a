//! Planar n-link reacher with a sparse terminal reward.
//!
//! Joints are decoupled unit-inertia double integrators tracked by a PD
//! controller; the reward is a per-step squared-torque cost plus a terminal
//! goal-distance and velocity penalty. Contexts are goal positions drawn
//! uniformly from the reachable disk.

use ndarray::{Array1, ArrayView1};

use super::{ContextSpace, Environment, EpisodeResult};
use crate::error::{Error, Result};
use crate::primitives::{generate_trajectory, BasisConfig, MpParams};

/// Physical and reward constants of the reacher.
#[derive(Debug, Clone, PartialEq)]
pub struct ReacherConfig {
    pub n_links: usize,
    /// Length of each link in meters.
    pub link_length: f64,
    pub kp: f64,
    pub kd: f64,
    /// Torque (acceleration) clip.
    pub max_torque: f64,
    pub horizon: usize,
    pub dt: f64,
    pub torque_weight: f64,
    pub goal_weight: f64,
    pub velocity_weight: f64,
    pub success_threshold: f64,
    pub n_basis: usize,
    pub bandwidth: f64,
}

impl ReacherConfig {
    /// Five links of 0.2 m, 200 steps of 10 ms: the full-scale layout.
    pub fn five_link() -> Self {
        Self {
            n_links: 5,
            link_length: 0.2,
            kp: 100.0,
            kd: 20.0,
            max_torque: 10.0,
            horizon: 200,
            dt: 0.01,
            torque_weight: 1.0,
            goal_weight: 200.0,
            velocity_weight: 10.0,
            success_threshold: 0.05,
            n_basis: 5,
            bandwidth: 1.0,
        }
    }

    /// Two links of 0.5 m on a slower clock; the desk-scale layout used by
    /// the diversity experiments.
    pub fn desk_two_link() -> Self {
        Self {
            n_links: 2,
            link_length: 0.5,
            horizon: 100,
            dt: 0.05,
            ..Self::five_link()
        }
    }

    pub fn reach_radius(&self) -> f64 {
        self.n_links as f64 * self.link_length
    }
}

pub struct ReacherEnv {
    cfg: ReacherConfig,
    space: ContextSpace,
    basis: BasisConfig,
}

impl ReacherEnv {
    pub fn new(cfg: ReacherConfig) -> Result<Self> {
        if cfg.n_links == 0 || !(cfg.link_length > 0.0) {
            return Err(Error::InvalidConfig("reacher needs positive link count and length".into()));
        }
        if !(cfg.kp > 0.0) || !(cfg.kd > 0.0) || !(cfg.max_torque > 0.0) || !(cfg.dt > 0.0) {
            return Err(Error::InvalidConfig("reacher gains, torque clip and dt must be positive".into()));
        }
        if cfg.horizon < 2 {
            return Err(Error::InvalidConfig("reacher horizon must be at least 2".into()));
        }
        let r = cfg.reach_radius();
        let space = ContextSpace::new(vec![-r, -r], vec![r, r])?;
        let basis = BasisConfig::new(cfg.n_basis, cfg.horizon, cfg.dt, cfg.bandwidth, cfg.n_links)?;
        Ok(Self { cfg, space, basis })
    }

    pub fn config(&self) -> &ReacherConfig {
        &self.cfg
    }

    /// Tip position of a planar chain with cumulative joint angles.
    pub fn forward_kinematics(&self, q: ArrayView1<f64>) -> [f64; 2] {
        forward_kinematics(self.cfg.n_links, self.cfg.link_length, q)
    }

    /// Initial pose: stretched out along +x.
    pub fn initial_joints(&self) -> Array1<f64> {
        Array1::zeros(self.cfg.n_links)
    }
}

pub fn forward_kinematics(n_links: usize, link_length: f64, q: ArrayView1<f64>) -> [f64; 2] {
    debug_assert_eq!(q.len(), n_links);
    let mut angle = 0.0;
    let (mut x, mut y) = (0.0, 0.0);
    for i in 0..n_links {
        angle += q[i];
        x += link_length * angle.cos();
        y += link_length * angle.sin();
    }
    [x, y]
}

impl Environment for ReacherEnv {
    fn name(&self) -> &'static str {
        "reacher"
    }

    fn context_space(&self) -> &ContextSpace {
        &self.space
    }

    fn is_valid(&self, c: ArrayView1<f64>) -> bool {
        let r = self.cfg.reach_radius();
        c[0] * c[0] + c[1] * c[1] <= r * r
    }

    fn basis(&self) -> &BasisConfig {
        &self.basis
    }

    fn success_threshold(&self) -> f64 {
        self.cfg.success_threshold
    }

    fn evaluate(&self, context: ArrayView1<f64>, theta: ArrayView1<f64>) -> Result<EpisodeResult> {
        if context.len() != 2 {
            return Err(Error::ShapeMismatch("reacher context is (goal_x, goal_y)".into()));
        }
        let params = MpParams::new(theta.to_owned());
        let q0 = self.initial_joints();
        let traj = generate_trajectory(&params, &self.basis, q0.view())?;
        let cfg = &self.cfg;
        let n = cfg.n_links;

        let mut q = q0;
        let mut v = Array1::<f64>::zeros(n);
        let mut torque_cost = 0.0;
        let mut tip_trace = Vec::with_capacity(traj.steps());
        for t in 0..traj.steps() {
            let mut step_cost = 0.0;
            for j in 0..n {
                let a = (cfg.kp * (traj.positions[(t, j)] - q[j])
                    + cfg.kd * (traj.velocities[(t, j)] - v[j]))
                    .clamp(-cfg.max_torque, cfg.max_torque);
                step_cost += a * a;
                // Semi-implicit Euler keeps the PD loop stable.
                v[j] += a * cfg.dt;
                q[j] += v[j] * cfg.dt;
            }
            torque_cost += cfg.torque_weight * step_cost;
            tip_trace.push(self.forward_kinematics(q.view()));
        }

        let tip = *tip_trace.last().expect("horizon >= 2");
        let final_distance =
            ((tip[0] - context[0]).powi(2) + (tip[1] - context[1]).powi(2)).sqrt();
        let terminal_speed_sq: f64 = v.iter().map(|vi| vi * vi).sum();
        let episodic_return = -torque_cost
            - cfg.goal_weight * final_distance
            - cfg.velocity_weight * terminal_speed_sq;

        Ok(EpisodeResult {
            episodic_return,
            success: final_distance < cfg.success_threshold,
            final_distance,
            torque_cost,
            terminal_speed_sq,
            collision: false,
            tip_trace,
            final_joints: q.to_vec(),
        })
    }
}
