//! Post-hoc analysis surfaces: expert-activity maps, curriculum heat maps,
//! and diversity reports, with CSV as the source of truth and standalone
//! SVG overlays for quick looks.

mod diversity;
mod svg;

pub use diversity::{diversity_report, ContextDiversity, DiversityReport};
pub use svg::{curve_svg, heatmap_svg};

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::envs::{sample_contexts, Environment};
use crate::error::Result;
use crate::policy::MixturePolicy;

/// Per-context count of experts whose gating probability clears the
/// threshold.
#[derive(Debug, Clone)]
pub struct ActivityMap {
    pub contexts: Vec<Array1<f64>>,
    pub counts: Vec<usize>,
    pub threshold: f64,
}

/// A deterministic evaluation grid of `n` valid contexts.
///
/// Two-dimensional context spaces get a sunflower layout (uniform-density
/// disk coverage) filtered by the validity predicate; other spaces fall
/// back to seeded rejection sampling, fixed seed, so repeated calls agree.
pub fn context_grid(env: &dyn Environment, n: usize) -> Result<Vec<Array1<f64>>> {
    let space = env.context_space();
    if space.dim() == 2 {
        let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
        let mut out = Vec::with_capacity(n);
        // Oversample the sunflower until n valid points are collected.
        let mut i = 0usize;
        let mut budget = 0usize;
        while out.len() < n && budget < n * 1000 {
            let frac = (i as f64 + 0.5) / n as f64;
            let r = frac.sqrt().min(1.0);
            let angle = i as f64 * golden;
            let cx = 0.5 * (space.lower[0] + space.upper[0])
                + 0.5 * (space.upper[0] - space.lower[0]) * r * angle.cos();
            let cy = 0.5 * (space.lower[1] + space.upper[1])
                + 0.5 * (space.upper[1] - space.lower[1]) * r * angle.sin();
            let c = ndarray::arr1(&[cx, cy]);
            if env.is_valid(c.view()) {
                out.push(c);
            }
            i += 1;
            budget += 1;
        }
        if out.len() == n {
            return Ok(out);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e3779b97f4a7c15);
    sample_contexts(env, n, &mut rng)
}

/// Counts, per grid context, how many experts are active (gating at or
/// above `threshold`).
pub fn activity_map(
    policy: &MixturePolicy,
    grid: &[Array1<f64>],
    threshold: f64,
) -> Result<ActivityMap> {
    let mut counts = Vec::with_capacity(grid.len());
    for c in grid {
        let gating = policy.gating(c.view())?;
        counts.push(gating.iter().filter(|&&g| g >= threshold).count());
    }
    Ok(ActivityMap { contexts: grid.to_vec(), counts, threshold })
}

/// Per-expert curriculum probability surfaces over the grid: the softmax of
/// each energy net across the grid contexts. Each surface sums to one.
pub fn curriculum_heatmap(policy: &MixturePolicy, grid: &[Array1<f64>]) -> Result<Vec<Vec<f64>>> {
    let mut surfaces = Vec::with_capacity(policy.n_experts());
    for o in 0..policy.n_experts() {
        surfaces.push(policy.curriculum(o, grid)?.probs);
    }
    Ok(surfaces)
}

/// CSV rows `x,y,p` (or `c_0..c_d,p`) for one expert's surface.
pub fn heatmap_csv(grid: &[Array1<f64>], probs: &[f64]) -> String {
    let dim = grid.first().map_or(0, |c| c.len());
    let mut s = String::new();
    for d in 0..dim {
        s.push_str(&format!("c_{d},"));
    }
    s.push_str("p\n");
    for (c, p) in grid.iter().zip(probs) {
        for v in c.iter() {
            s.push_str(&format!("{v},"));
        }
        s.push_str(&format!("{p}\n"));
    }
    s
}

/// CSV rows `c_0..c_d,count` for an activity map.
pub fn activity_csv(map: &ActivityMap) -> String {
    let dim = map.contexts.first().map_or(0, |c| c.len());
    let mut s = String::new();
    for d in 0..dim {
        s.push_str(&format!("c_{d},"));
    }
    s.push_str("active_experts\n");
    for (c, n) in map.contexts.iter().zip(&map.counts) {
        for v in c.iter() {
            s.push_str(&format!("{v},"));
        }
        s.push_str(&format!("{n}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{ReacherConfig, ReacherEnv};
    use crate::testutil::random_vector;
    use rand::Rng;

    fn desk_env() -> ReacherEnv {
        ReacherEnv::new(ReacherConfig::desk_two_link()).unwrap()
    }

    fn toy_policy(k: usize, seed: u64) -> MixturePolicy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut policy = MixturePolicy::new(2, 10, k, &[8], &[8], 1.0, &mut rng).unwrap();
        for o in 0..k {
            let net = policy.energy_net_mut(o);
            let mut flat = Vec::new();
            net.write_flat(&mut flat);
            for v in &mut flat {
                *v += rng.random_range(-0.5..0.5);
            }
            net.read_flat(&flat).unwrap();
        }
        let batch: Vec<Array1<f64>> = (0..64).map(|_| random_vector(2, 0.9, &mut rng)).collect();
        policy.refresh_normalizers(&batch).unwrap();
        policy
    }

    #[test]
    fn grid_is_deterministic_and_valid() {
        let env = desk_env();
        let a = context_grid(&env, 200).unwrap();
        let b = context_grid(&env, 200).unwrap();
        assert_eq!(a.len(), 200);
        assert_eq!(a, b);
        for c in &a {
            assert!(env.is_valid(c.view()));
        }
    }

    #[test]
    fn single_expert_is_active_everywhere() {
        let env = desk_env();
        let policy = toy_policy(1, 8);
        let grid = context_grid(&env, 50).unwrap();
        let map = activity_map(&policy, &grid, 0.2).unwrap();
        assert!(map.counts.iter().all(|&c| c == 1));
    }

    #[test]
    fn below_uniform_threshold_someone_is_always_active() {
        // Gating sums to one, so with threshold <= 1/K at least one expert
        // clears it at every context.
        let env = desk_env();
        let k = 4;
        let policy = toy_policy(k, 9);
        let grid = context_grid(&env, 100).unwrap();
        let map = activity_map(&policy, &grid, 1.0 / k as f64).unwrap();
        assert!(map.counts.iter().all(|&c| c >= 1));
        assert!(map.counts.iter().all(|&c| c <= k));
    }

    #[test]
    fn activity_counts_are_reproducible() {
        let env = desk_env();
        let policy = toy_policy(3, 10);
        let grid = context_grid(&env, 60).unwrap();
        let a = activity_map(&policy, &grid, 0.2).unwrap();
        let b = activity_map(&policy, &grid, 0.2).unwrap();
        assert_eq!(a.counts, b.counts);
    }

    #[test]
    fn heatmap_surfaces_are_distributions() {
        let env = desk_env();
        let policy = toy_policy(4, 11);
        let grid = context_grid(&env, 80).unwrap();
        let surfaces = curriculum_heatmap(&policy, &grid).unwrap();
        for surface in &surfaces {
            let sum: f64 = surface.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(surface.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn fresh_energy_nets_are_near_uniform() {
        // The output layer starts at gain 0.01, so energies are tiny and the
        // softmax close to flat.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let policy = MixturePolicy::new(2, 10, 2, &[8], &[8], 1.0, &mut rng).unwrap();
        let env = desk_env();
        let grid = context_grid(&env, 64).unwrap();
        let surfaces = curriculum_heatmap(&policy, &grid).unwrap();
        let uniform = 1.0 / 64.0;
        for surface in &surfaces {
            for &p in surface {
                assert!((p - uniform).abs() < 0.1 * uniform, "p = {p}");
            }
        }
    }

    #[test]
    fn grid_refinement_preserves_total_mass() {
        // Doubling the grid roughly halves per-cell probability; the mass
        // over a fixed half-plane stays put within a couple of percent.
        let env = desk_env();
        let policy = toy_policy(2, 13);
        let coarse = context_grid(&env, 400).unwrap();
        let fine = context_grid(&env, 800).unwrap();
        let s_coarse = curriculum_heatmap(&policy, &coarse).unwrap();
        let s_fine = curriculum_heatmap(&policy, &fine).unwrap();
        for o in 0..2 {
            let mass = |grid: &[Array1<f64>], probs: &[f64]| -> f64 {
                grid.iter().zip(probs).filter(|(c, _)| c[0] > 0.0).map(|(_, &p)| p).sum()
            };
            let a = mass(&coarse, &s_coarse[o]);
            let b = mass(&fine, &s_fine[o]);
            assert!((a - b).abs() < 0.02, "half-plane mass {a} vs {b}");
        }
    }
}
