//! Motion primitives: normalized radial-basis trajectories.
//!
//! A low-dimensional weight vector defines one smooth desired trajectory per
//! joint via `q_raw = Phi w`, where the rows of `Phi` are normalized
//! Gaussian bumps over phase. A constant per-joint shift then pins the
//! trajectory to the starting position, so `q_des[0] = q0` exactly for any
//! weights.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

/// Basis layout shared by one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisConfig {
    /// Radial basis functions per joint.
    pub n_basis: usize,
    /// Trajectory length in steps.
    pub horizon_steps: usize,
    /// Seconds per step.
    pub dt: f64,
    /// RBF width relative to the center spacing.
    pub bandwidth: f64,
    pub n_joints: usize,
}

impl BasisConfig {
    pub fn new(n_basis: usize, horizon_steps: usize, dt: f64, bandwidth: f64, n_joints: usize) -> Result<Self> {
        let cfg = Self { n_basis, horizon_steps, dt, bandwidth, n_joints };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_basis == 0 {
            return Err(Error::InvalidConfig("n_basis must be at least 1".into()));
        }
        if self.horizon_steps < 2 {
            return Err(Error::InvalidConfig("horizon must be at least 2 steps".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidConfig("dt must be positive".into()));
        }
        if !(self.bandwidth > 0.0) {
            return Err(Error::InvalidConfig("bandwidth must be positive".into()));
        }
        if self.n_joints == 0 {
            return Err(Error::InvalidConfig("n_joints must be at least 1".into()));
        }
        Ok(())
    }

    /// Total weight-vector length.
    pub fn param_dim(&self) -> usize {
        self.n_basis * self.n_joints
    }
}

/// Weights for one episode, `n_joints * n_basis` long, joint-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MpParams {
    pub weights: Array1<f64>,
    /// Stretches the executed trajectory in time; `None` keeps the nominal
    /// horizon. Only environments that learn durations set this.
    pub duration_scale: Option<f64>,
}

impl MpParams {
    pub fn new(weights: Array1<f64>) -> Self {
        Self { weights, duration_scale: None }
    }

    pub fn with_duration(weights: Array1<f64>, duration_scale: f64) -> Self {
        Self { weights, duration_scale: Some(duration_scale) }
    }

    pub fn validate(&self, cfg: &BasisConfig) -> Result<()> {
        if self.weights.len() != cfg.param_dim() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} MP weights, got {}",
                cfg.param_dim(),
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("MP weights".into()));
        }
        if let Some(s) = self.duration_scale {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::InvalidConfig("duration_scale must be positive and finite".into()));
            }
        }
        Ok(())
    }
}

/// A desired trajectory: positions and forward-difference velocities,
/// both `steps x n_joints`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub positions: Array2<f64>,
    pub velocities: Array2<f64>,
    pub dt: f64,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.positions.nrows()
    }

    pub fn n_joints(&self) -> usize {
        self.positions.ncols()
    }

    /// CSV rows `t, q_1..q_n, dq_1..dq_n`.
    pub fn to_csv(&self) -> String {
        let n = self.n_joints();
        let mut out = String::from("t");
        for j in 1..=n {
            let _ = write!(out, ",q_{j}");
        }
        for j in 1..=n {
            let _ = write!(out, ",dq_{j}");
        }
        out.push('\n');
        for i in 0..self.steps() {
            let _ = write!(out, "{}", i as f64 * self.dt);
            for j in 0..n {
                let _ = write!(out, ",{}", self.positions[(i, j)]);
            }
            for j in 0..n {
                let _ = write!(out, ",{}", self.velocities[(i, j)]);
            }
            out.push('\n');
        }
        out
    }
}

/// Builds the `steps x n_basis` matrix of normalized Gaussian basis values.
///
/// Centers are equally spaced over phase `[0, 1]` (a single center sits at
/// 0.5), the width is `bandwidth` times the center spacing, and every row is
/// normalized to sum to one.
pub fn basis_matrix(cfg: &BasisConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    Ok(basis_matrix_for_steps(cfg, cfg.horizon_steps))
}

fn basis_matrix_for_steps(cfg: &BasisConfig, steps: usize) -> Array2<f64> {
    let n = cfg.n_basis;
    let centers: Vec<f64> = if n == 1 {
        vec![0.5]
    } else {
        (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
    };
    let spacing = if n == 1 { 1.0 } else { 1.0 / (n - 1) as f64 };
    let sigma = cfg.bandwidth * spacing;
    let inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);

    let mut phi = Array2::zeros((steps, n));
    for i in 0..steps {
        let t = i as f64 / (steps - 1) as f64;
        let mut row_sum = 0.0;
        for (k, &c) in centers.iter().enumerate() {
            let d = t - c;
            let v = (-d * d * inv_two_sigma_sq).exp();
            phi[(i, k)] = v;
            row_sum += v;
        }
        for k in 0..n {
            phi[(i, k)] /= row_sum;
        }
    }
    phi
}

/// Generates the desired trajectory for `theta` starting at `q0`.
///
/// Per joint the raw curve `Phi w` is shifted by a constant so the first
/// sample equals `q0`. Velocities are forward differences divided by `dt`
/// with `dq[0] = 0`. A `duration_scale` resamples the positions over a
/// stretched step count by linear interpolation before differencing.
pub fn generate_trajectory(
    theta: &MpParams,
    cfg: &BasisConfig,
    q0: ArrayView1<f64>,
) -> Result<Trajectory> {
    theta.validate(cfg)?;
    if q0.len() != cfg.n_joints {
        return Err(Error::ShapeMismatch(format!(
            "q0 has {} joints, config expects {}",
            q0.len(),
            cfg.n_joints
        )));
    }
    if q0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial joint positions".into()));
    }

    let steps = match theta.duration_scale {
        Some(s) => ((cfg.horizon_steps as f64 * s).round() as usize).max(2),
        None => cfg.horizon_steps,
    };

    let phi = basis_matrix_for_steps(cfg, cfg.horizon_steps);
    let mut positions = Array2::zeros((cfg.horizon_steps, cfg.n_joints));
    for j in 0..cfg.n_joints {
        let w = theta.weights.slice(ndarray::s![j * cfg.n_basis..(j + 1) * cfg.n_basis]);
        let raw = phi.dot(&w);
        let offset = q0[j] - raw[0];
        for i in 0..cfg.horizon_steps {
            positions[(i, j)] = raw[i] + offset;
        }
    }

    let positions = if steps == cfg.horizon_steps { positions } else { resample(&positions, steps) };

    let mut velocities = Array2::zeros((steps, cfg.n_joints));
    for i in 1..steps {
        for j in 0..cfg.n_joints {
            velocities[(i, j)] = (positions[(i, j)] - positions[(i - 1, j)]) / cfg.dt;
        }
    }
    Ok(Trajectory { positions, velocities, dt: cfg.dt })
}

/// Linear interpolation of each joint column onto a new step count over the
/// same phase interval; endpoints are preserved exactly.
fn resample(positions: &Array2<f64>, new_steps: usize) -> Array2<f64> {
    let (old_steps, n_joints) = (positions.nrows(), positions.ncols());
    let mut out = Array2::zeros((new_steps, n_joints));
    for i in 0..new_steps {
        let phase = i as f64 / (new_steps - 1) as f64;
        let pos = phase * (old_steps - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(old_steps - 1);
        let frac = pos - lo as f64;
        for j in 0..n_joints {
            out[(i, j)] = positions[(lo, j)] * (1.0 - frac) + positions[(hi, j)] * frac;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::arr1;

    fn cfg(n_basis: usize, steps: usize) -> BasisConfig {
        BasisConfig::new(n_basis, steps, 0.02, 1.0, 1).unwrap()
    }

    #[test]
    fn rows_sum_to_one() {
        let phi = basis_matrix(&cfg(7, 40)).unwrap();
        for i in 0..40 {
            let s: f64 = phi.row(i).sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_basis_degenerates_to_ones() {
        let phi = basis_matrix(&cfg(1, 10)).unwrap();
        for i in 0..10 {
            assert_abs_diff_eq!(phi[(i, 0)], 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn time_reversal_equals_basis_reversal() {
        let phi = basis_matrix(&cfg(5, 31)).unwrap();
        let (t, n) = (31, 5);
        for i in 0..t {
            for k in 0..n {
                assert_abs_diff_eq!(phi[(i, k)], phi[(t - 1 - i, n - 1 - k)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn zero_weights_stay_at_start() {
        let c = BasisConfig::new(5, 30, 0.02, 1.0, 2).unwrap();
        let theta = MpParams::new(Array1::zeros(10));
        let traj = generate_trajectory(&theta, &c, arr1(&[0.3, -0.7]).view()).unwrap();
        for i in 0..30 {
            assert_abs_diff_eq!(traj.positions[(i, 0)], 0.3, epsilon = 1e-14);
            assert_abs_diff_eq!(traj.positions[(i, 1)], -0.7, epsilon = 1e-14);
            assert_abs_diff_eq!(traj.velocities[(i, 0)], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn equal_weights_stay_at_start() {
        // Row normalization turns a constant weight vector into a constant
        // curve, which the boundary shift then pins to q0.
        let c = cfg(6, 25);
        let theta = MpParams::new(Array1::from_elem(6, 1.37));
        let traj = generate_trajectory(&theta, &c, arr1(&[0.1]).view()).unwrap();
        for i in 0..25 {
            assert_abs_diff_eq!(traj.positions[(i, 0)], 0.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn duration_scale_resamples_and_keeps_endpoint() {
        let c = cfg(4, 50);
        let w = arr1(&[0.0, 0.4, 0.9, 1.6]);
        let base = generate_trajectory(&MpParams::new(w.clone()), &c, arr1(&[0.0]).view()).unwrap();
        let stretched =
            generate_trajectory(&MpParams::with_duration(w, 2.0), &c, arr1(&[0.0]).view()).unwrap();
        assert_eq!(stretched.steps(), 100);
        assert_abs_diff_eq!(
            stretched.positions[(99, 0)],
            base.positions[(49, 0)],
            epsilon = 1e-12
        );
        // A linear ramp resamples onto itself.
        let old = &base.positions;
        for i in 0..100 {
            let phase = i as f64 / 99.0;
            let pos = phase * 49.0;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(49);
            let frac = pos - lo as f64;
            let want = old[(lo, 0)] * (1.0 - frac) + old[(hi, 0)] * frac;
            assert_abs_diff_eq!(stretched.positions[(i, 0)], want, epsilon = 1e-12);
        }
    }

    #[test]
    fn velocity_consistency_bounds_position_change() {
        let c = cfg(5, 40);
        let theta = MpParams::new(arr1(&[0.5, -1.0, 2.0, 0.3, -0.2]));
        let traj = generate_trajectory(&theta, &c, arr1(&[0.0]).view()).unwrap();
        let max_dv = traj.velocities.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 1..40 {
            let dp = (traj.positions[(i, 0)] - traj.positions[(i - 1, 0)]).abs();
            assert!(dp <= c.dt * max_dv + 1e-12);
        }
    }

    #[test]
    fn rejects_wrong_length() {
        let c = cfg(5, 40);
        let theta = MpParams::new(Array1::zeros(4));
        assert!(generate_trajectory(&theta, &c, arr1(&[0.0]).view()).is_err());
    }
}
