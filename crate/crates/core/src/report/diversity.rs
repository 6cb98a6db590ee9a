//! Diversity reports: how many distinct successful behaviors the policy
//! produces for the same context.
//!
//! Reacher-style environments report final joint configurations, and modes
//! are their sign patterns (the elbow-up/elbow-down generalization). Other
//! environments are clustered by k-means on the successful endpoints, with
//! k picked by silhouette score.

use ndarray::Array1;
use rand_chacha::ChaCha8Rng;

use crate::envs::Environment;
use crate::error::Result;
use crate::policy::MixturePolicy;
use crate::trainer::{infer_on_contexts, InferenceRecord};

#[derive(Debug, Clone)]
pub struct ContextDiversity {
    pub context: Array1<f64>,
    pub n_samples: usize,
    pub n_success: usize,
    /// Distinct successful modes found for this context.
    pub n_modes: usize,
}

#[derive(Debug, Clone)]
pub struct DiversityReport {
    pub per_context: Vec<ContextDiversity>,
    /// Episodes executed per expert across the whole report.
    pub expert_episodes: Vec<usize>,
    pub expert_successes: Vec<usize>,
    /// Every sampled episode, for trajectory dumps.
    pub samples: Vec<InferenceRecord>,
}

impl DiversityReport {
    pub fn per_expert_success_rate(&self) -> Vec<f64> {
        self.expert_episodes
            .iter()
            .zip(&self.expert_successes)
            .map(|(&n, &s)| if n == 0 { 0.0 } else { s as f64 / n as f64 })
            .collect()
    }

    /// CSV rows `c_0..c_d,samples,successes,modes`.
    pub fn to_csv(&self) -> String {
        let dim = self.per_context.first().map_or(0, |c| c.context.len());
        let mut s = String::new();
        for d in 0..dim {
            s.push_str(&format!("c_{d},"));
        }
        s.push_str("samples,successes,modes\n");
        for row in &self.per_context {
            for v in row.context.iter() {
                s.push_str(&format!("{v},"));
            }
            s.push_str(&format!("{},{},{}\n", row.n_samples, row.n_success, row.n_modes));
        }
        s
    }
}

/// Draws `samples_per_context` stochastic episodes per context and counts
/// distinct successful modes. Reproducible given the rng.
pub fn diversity_report(
    policy: &MixturePolicy,
    env: &dyn Environment,
    contexts: &[Array1<f64>],
    samples_per_context: usize,
    rng: &mut ChaCha8Rng,
) -> Result<DiversityReport> {
    let k = policy.n_experts();
    let mut expert_episodes = vec![0usize; k];
    let mut expert_successes = vec![0usize; k];
    let mut per_context = Vec::with_capacity(contexts.len());
    let mut samples = Vec::new();

    for context in contexts {
        let repeated = vec![context.clone(); samples_per_context];
        let records = infer_on_contexts(policy, env, &repeated, false, rng)?;
        let successes: Vec<&InferenceRecord> =
            records.iter().filter(|r| r.result.success).collect();
        let n_modes = count_modes(&successes);
        for r in &records {
            expert_episodes[r.expert] += 1;
            if r.result.success {
                expert_successes[r.expert] += 1;
            }
        }
        per_context.push(ContextDiversity {
            context: context.clone(),
            n_samples: records.len(),
            n_success: successes.len(),
            n_modes,
        });
        samples.extend(records);
    }
    Ok(DiversityReport { per_context, expert_episodes, expert_successes, samples })
}

fn count_modes(successes: &[&InferenceRecord]) -> usize {
    if successes.is_empty() {
        return 0;
    }
    if !successes[0].result.final_joints.is_empty() {
        // Joint-sign patterns, with a deadband around zero.
        let mut patterns: Vec<Vec<i8>> = Vec::new();
        for r in successes {
            let pat: Vec<i8> = r
                .result
                .final_joints
                .iter()
                .map(|&q| {
                    if q > 1e-6 {
                        1
                    } else if q < -1e-6 {
                        -1
                    } else {
                        0
                    }
                })
                .collect();
            if !patterns.contains(&pat) {
                patterns.push(pat);
            }
        }
        return patterns.len();
    }
    // Point-mass environments: cluster endpoints.
    let points: Vec<[f64; 2]> = successes
        .iter()
        .filter_map(|r| r.result.tip_trace.last().copied())
        .collect();
    kmeans_mode_count(&points)
}

/// Silhouette-selected k-means on 2D endpoints, k up to 4. Returns 1 when
/// no split scores at least 0.65 (a compact single cluster splits below
/// that even when stretched; genuinely separated modes score far higher).
fn kmeans_mode_count(points: &[[f64; 2]]) -> usize {
    if points.len() < 2 {
        return points.len();
    }
    let max_k = 4.min(points.len());
    let mut best_k = 1;
    let mut best_score = 0.65;
    for k in 2..=max_k {
        let labels = kmeans(points, k);
        if let Some(score) = silhouette(points, &labels, k) {
            if score > best_score {
                best_score = score;
                best_k = k;
            }
        }
    }
    best_k
}

fn kmeans(points: &[[f64; 2]], k: usize) -> Vec<usize> {
    // Deterministic farthest-point initialization.
    let mut centers = vec![points[0]];
    while centers.len() < k {
        let far = points
            .iter()
            .max_by(|a, b| {
                let da = centers.iter().map(|c| dist2(a, c)).fold(f64::INFINITY, f64::min);
                let db = centers.iter().map(|c| dist2(b, c)).fold(f64::INFINITY, f64::min);
                da.total_cmp(&db)
            })
            .unwrap();
        centers.push(*far);
    }
    let mut labels = vec![0usize; points.len()];
    for _ in 0..50 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let nearest = (0..k).min_by(|&a, &b| dist2(p, &centers[a]).total_cmp(&dist2(p, &centers[b]))).unwrap();
            if labels[i] != nearest {
                labels[i] = nearest;
                changed = true;
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&[f64; 2]> =
                points.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
            if !members.is_empty() {
                let n = members.len() as f64;
                *center = [
                    members.iter().map(|p| p[0]).sum::<f64>() / n,
                    members.iter().map(|p| p[1]).sum::<f64>() / n,
                ];
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

fn silhouette(points: &[[f64; 2]], labels: &[usize], k: usize) -> Option<f64> {
    let counts: Vec<usize> = (0..k).map(|c| labels.iter().filter(|&&l| l == c).count()).collect();
    if counts.iter().any(|&c| c == 0) {
        return None;
    }
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let own = labels[i];
        let mut internal = 0.0;
        let mut external = f64::INFINITY;
        for c in 0..k {
            let mean_d: f64 = points
                .iter()
                .zip(labels)
                .filter(|&(_, &l)| l == c)
                .map(|(q, _)| dist2(p, q).sqrt())
                .sum::<f64>()
                / counts[c] as f64;
            if c == own {
                internal = if counts[c] > 1 {
                    mean_d * counts[c] as f64 / (counts[c] - 1) as f64
                } else {
                    0.0
                };
            } else {
                external = external.min(mean_d);
            }
        }
        let denom = internal.max(external);
        total += if denom > 0.0 { (external - internal) / denom } else { 0.0 };
    }
    Some(total / points.len() as f64)
}

fn dist2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}
