//! One iteration's learning math.
//!
//! Rollout records carry everything the updates need: the executed
//! `(o, c, theta, R)` tuple plus the snapshot quantities (old log-density
//! and responsibilities). Experts ascend an importance-weighted surrogate
//! under a per-context KL trust region enforced by projection; each
//! curriculum ascends a clipped surrogate whose entropy and variational
//! terms are available in closed form.

mod drivers;
mod losses;

pub use drivers::{fit_critic, update_context_ebm, update_expert, KlReport};
pub use losses::{critic_mse, ebm_surrogate, expert_surrogate};

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::nn::DenseNet;
use crate::policy::{PolicySnapshot, LOG_FLOOR};

/// One episode's training data.
#[derive(Debug, Clone)]
pub struct RolloutRecord {
    /// Expert that produced the episode.
    pub expert: usize,
    pub context: Array1<f64>,
    pub theta: Array1<f64>,
    pub episodic_return: f64,
    /// `ln pi_old(theta|c,o)` under the snapshot.
    pub log_prob_old: f64,
    /// `q~(o'|c,theta)` under the snapshot; sums to one.
    pub responsibilities_old: Vec<f64>,
    /// Index of `context` in the iteration's environment batch.
    pub batch_index: usize,
    pub success: bool,
    pub final_distance: f64,
}

/// Hyperparameters of one Di-SkilL iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateConfig {
    /// Entropy temperature on the experts.
    pub alpha: f64,
    /// Entropy temperature on the curricula.
    pub beta: f64,
    /// Per-context KL bound on the expert mean part.
    pub mean_bound: f64,
    /// KL bound on the covariance part.
    pub cov_bound: f64,
    pub ppo_clip: f64,
    pub epochs: usize,
    pub critic_epochs: usize,
    pub energy_epochs: usize,
    pub lr_policy: f64,
    pub lr_critic: f64,
    pub lr_energy: f64,
    pub samples_per_expert: usize,
    pub normalize_advantages: bool,
    /// When false the variational gating term `ln q~(o|c)` is treated as
    /// zero everywhere, which disables curriculum specialization.
    pub curriculum_variational: bool,
}

impl Default for UpdateConfig {
    /// The published five-link-reacher settings.
    fn default() -> Self {
        Self {
            alpha: 0.01,
            beta: 8.0,
            mean_bound: 0.05,
            cov_bound: 0.001,
            ppo_clip: 0.2,
            epochs: 100,
            critic_epochs: 100,
            energy_epochs: 100,
            lr_policy: 3e-4,
            lr_critic: 3e-4,
            lr_energy: 1e-4,
            samples_per_expert: 25,
            normalize_advantages: true,
            curriculum_variational: true,
        }
    }
}

impl UpdateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::InvalidConfig("alpha and beta must be non-negative".into()));
        }
        if !(self.mean_bound > 0.0) || !(self.cov_bound > 0.0) {
            return Err(Error::InvalidConfig("trust-region bounds must be positive".into()));
        }
        if !(self.ppo_clip > 0.0 && self.ppo_clip < 1.0) {
            return Err(Error::InvalidConfig("ppo_clip must lie in (0, 1)".into()));
        }
        if self.samples_per_expert == 0 {
            return Err(Error::InvalidConfig("samples_per_expert must be positive".into()));
        }
        if !(self.lr_policy > 0.0) || !(self.lr_critic > 0.0) || !(self.lr_energy > 0.0) {
            return Err(Error::InvalidConfig("learning rates must be positive".into()));
        }
        Ok(())
    }
}

/// Floored logarithm used wherever a log-probability is scaled by a
/// temperature: `max(ln p, -30)`, with vanished probabilities mapped to the
/// floor directly.
pub fn floored_log(p: f64) -> f64 {
    if p > 0.0 {
        p.ln().max(LOG_FLOOR)
    } else {
        LOG_FLOOR
    }
}

/// `R + alpha * ln q~(o|c,theta)` for the record's own expert.
pub fn augmented_return(rec: &RolloutRecord, alpha: f64) -> f64 {
    rec.episodic_return + alpha * floored_log(rec.responsibilities_old[rec.expert])
}

/// Advantages for the expert surrogate: augmented return minus the critic
/// baseline, optionally standardized per expert (sigma floor `1e-8`).
pub fn expert_advantages(
    records: &[RolloutRecord],
    critic: &DenseNet,
    alpha: f64,
    normalize: bool,
) -> Result<Vec<f64>> {
    let mut advantages = Vec::with_capacity(records.len());
    for rec in records {
        let baseline = critic.forward(rec.context.view())?[0];
        advantages.push(augmented_return(rec, alpha) - baseline);
    }
    if normalize && !advantages.is_empty() {
        let n = advantages.len() as f64;
        let mean = advantages.iter().sum::<f64>() / n;
        let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        let sd = var.sqrt().max(1e-8);
        for a in &mut advantages {
            *a = (*a - mean) / sd;
        }
    }
    Ok(advantages)
}

/// Per-context curriculum payoff estimates
/// `L_c(o, c_i) = mean(R + alpha ln q~(o|c_i,theta)) + alpha H[pi(theta|.,o)]`,
/// keyed by environment-batch index; repeated executions of one context are
/// averaged.
pub fn context_payoffs(
    records: &[RolloutRecord],
    alpha: f64,
    expert_entropy: f64,
) -> Vec<(usize, f64)> {
    let mut acc: Vec<(usize, f64, usize)> = Vec::new();
    for rec in records {
        let aug = augmented_return(rec, alpha);
        match acc.iter_mut().find(|(idx, _, _)| *idx == rec.batch_index) {
            Some((_, sum, count)) => {
                *sum += aug;
                *count += 1;
            }
            None => acc.push((rec.batch_index, aug, 1)),
        }
    }
    acc.into_iter()
        .map(|(idx, sum, count)| (idx, sum / count as f64 + alpha * expert_entropy))
        .collect()
}

/// Curriculum payoff plus the closed-form variational term, minus the
/// context-critic baseline:
/// `L_c(o,c) + (beta - alpha) ln q~(o|c) - V_c(c)`.
///
/// The `-beta ln pi(c|o)` entropy term enters the EBM loss analytically and
/// is deliberately absent here. The residuals keep their raw scale: the
/// curriculum's concentration pressure comes precisely from large payoff
/// differences, and standardizing them away lets the entropy bonus pin
/// every curriculum at uniform.
pub fn context_advantages(
    payoffs: &[(usize, f64)],
    snapshot: &PolicySnapshot,
    o: usize,
    env_batch: &[Array1<f64>],
    critic: &DenseNet,
    cfg: &UpdateConfig,
) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::with_capacity(payoffs.len());
    for &(idx, l_c) in payoffs {
        let target = context_target(l_c, snapshot, o, &env_batch[idx], cfg)?;
        let baseline = critic.forward(env_batch[idx].view())?[0];
        out.push((idx, target - baseline));
    }
    Ok(out)
}

/// Regression target of the context critic: `L_c + (beta - alpha) ln q~(o|c)`.
pub fn context_target(
    l_c: f64,
    snapshot: &PolicySnapshot,
    o: usize,
    context: &Array1<f64>,
    cfg: &UpdateConfig,
) -> Result<f64> {
    let variational = if cfg.curriculum_variational {
        let gating = snapshot.gating_variational(context.view())?;
        floored_log(gating[o])
    } else {
        0.0
    };
    Ok(l_c + (cfg.beta - cfg.alpha) * variational)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{AdamState, CholFactor};
    use crate::policy::{Expert, MixturePolicy};
    use crate::testutil::{central_diff, random_vector, rel_err};
    use approx::assert_abs_diff_eq;
    use ndarray::arr1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn record(ret: f64, resp: Vec<f64>, o: usize) -> RolloutRecord {
        RolloutRecord {
            expert: o,
            context: arr1(&[0.0, 0.0]),
            theta: arr1(&[0.0]),
            episodic_return: ret,
            log_prob_old: 0.0,
            responsibilities_old: resp,
            batch_index: 0,
            success: false,
            final_distance: 1.0,
        }
    }

    #[test]
    fn augmented_return_reduces_to_r_for_single_expert() {
        let rec = record(-3.5, vec![1.0], 0);
        assert_eq!(augmented_return(&rec, 0.7), -3.5);
    }

    #[test]
    fn augmented_return_with_zero_alpha_is_r() {
        let rec = record(-3.5, vec![0.3, 0.7], 1);
        assert_eq!(augmented_return(&rec, 0.0), -3.5);
    }

    #[test]
    fn augmented_return_arithmetic() {
        let rec = record(-2.0, vec![0.5, 0.5], 0);
        assert_abs_diff_eq!(augmented_return(&rec, 0.01), -2.0 + 0.01 * 0.5f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn vanished_responsibility_hits_the_log_floor() {
        let rec = record(-1.0, vec![0.0, 1.0], 0);
        assert_abs_diff_eq!(augmented_return(&rec, 1.0), -1.0 - 30.0, epsilon = 1e-12);
    }

    fn small_expert(seed: u64, dim: usize) -> Expert {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Expert {
            mean_net: crate::nn::DenseNet::new(&[2, 8, dim], &mut rng).unwrap(),
            chol: CholFactor::isotropic(dim, 1.0).unwrap(),
        }
    }

    fn surrogate_inputs(
        seed: u64,
        dim: usize,
        m: usize,
    ) -> (Vec<ndarray::Array1<f64>>, Vec<ndarray::Array1<f64>>, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let contexts: Vec<_> = (0..m).map(|_| random_vector(2, 1.0, &mut rng)).collect();
        let thetas: Vec<_> = (0..m).map(|_| random_vector(dim, 1.0, &mut rng)).collect();
        let advantages: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        (contexts, thetas, advantages, vec![])
    }

    #[test]
    fn expert_surrogate_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        for trial in 0..10 {
            let expert = small_expert(61 + trial, 3);
            let (contexts, thetas, advantages, _) = surrogate_inputs(70 + trial, 3, 6);
            // Old log-probs from a slightly perturbed reference point keep
            // ratios near but not at one.
            let log_prob_old: Vec<f64> = contexts
                .iter()
                .zip(&thetas)
                .map(|(c, t)| {
                    expert.log_prob(c.view(), t.view()).unwrap() + rng.random_range(-0.05..0.05)
                })
                .collect();
            let alpha = 0.05;
            let (_, net_grads, chol_grads) = expert_surrogate(
                &expert.mean_net,
                &expert.chol,
                &contexts,
                &thetas,
                &advantages,
                &log_prob_old,
                alpha,
            )
            .unwrap();
            let mut analytic = Vec::new();
            expert.mean_net.grads_flat(&net_grads, &mut analytic);
            analytic.extend(chol_grads);

            let mut flat = Vec::new();
            expert.mean_net.write_flat(&mut flat);
            expert.chol.write_flat(&mut flat);
            let n_net = expert.mean_net.n_params();
            let numeric = central_diff(
                |p| {
                    let mut net = expert.mean_net.clone();
                    net.read_flat(&p[..n_net]).unwrap();
                    let mut chol = expert.chol.clone();
                    chol.read_flat(&p[n_net..]).unwrap();
                    expert_surrogate(&net, &chol, &contexts, &thetas, &advantages, &log_prob_old, alpha)
                        .unwrap()
                        .0
                },
                &flat,
                1e-5,
            );
            assert!(
                rel_err(&analytic, &numeric) < 1e-4,
                "trial {trial}: rel err {}",
                rel_err(&analytic, &numeric)
            );
        }
    }

    #[test]
    fn ebm_surrogate_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(80);
        for trial in 0..10 {
            let mut net_rng = ChaCha8Rng::seed_from_u64(90 + trial);
            let net = crate::nn::DenseNet::new(&[2, 8, 1], &mut net_rng).unwrap();
            let batch: Vec<_> = (0..12).map(|_| random_vector(2, 1.0, &mut rng)).collect();
            // Old probs: a perturbed softmax, so some ratios stray from one.
            let energies: Vec<f64> =
                batch.iter().map(|_| rng.random_range(-0.3..0.3)).collect();
            let probs_old = crate::policy::mixture_curriculum_from_energies(&energies).probs;
            let executed: Vec<(usize, f64)> =
                (0..5).map(|i| (i * 2, rng.random_range(-1.0..1.0))).collect();
            let beta = 0.7;
            let clip = 0.2;

            let (_, grads) = ebm_surrogate(&net, &batch, &probs_old, &executed, beta, clip).unwrap();
            let mut analytic = Vec::new();
            net.grads_flat(&grads, &mut analytic);

            let mut flat = Vec::new();
            net.write_flat(&mut flat);
            let numeric = central_diff(
                |p| {
                    let mut probe = net.clone();
                    probe.read_flat(p).unwrap();
                    ebm_surrogate(&probe, &batch, &probs_old, &executed, beta, clip).unwrap().0
                },
                &flat,
                1e-5,
            );
            assert!(
                rel_err(&analytic, &numeric) < 1e-4,
                "trial {trial}: rel err {}",
                rel_err(&analytic, &numeric)
            );
        }
    }

    #[test]
    fn critic_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        for trial in 0..10 {
            let mut net_rng = ChaCha8Rng::seed_from_u64(110 + trial);
            let net = crate::nn::DenseNet::new(&[2, 8, 1], &mut net_rng).unwrap();
            let contexts: Vec<_> = (0..8).map(|_| random_vector(2, 1.0, &mut rng)).collect();
            let targets: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (_, grads) = critic_mse(&net, &contexts, &targets).unwrap();
            let mut analytic = Vec::new();
            net.grads_flat(&grads, &mut analytic);
            let mut flat = Vec::new();
            net.write_flat(&mut flat);
            let numeric = central_diff(
                |p| {
                    let mut probe = net.clone();
                    probe.read_flat(p).unwrap();
                    critic_mse(&probe, &contexts, &targets).unwrap().0
                },
                &flat,
                1e-5,
            );
            assert!(rel_err(&analytic, &numeric) < 1e-4);
        }
    }

    #[test]
    fn constant_targets_fit_to_near_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(120);
        let mut net = crate::nn::DenseNet::new(&[2, 8, 1], &mut rng).unwrap();
        let contexts: Vec<_> = (0..10).map(|_| random_vector(2, 1.0, &mut rng)).collect();
        let targets = vec![0.37; 10];
        let mut opt = AdamState::new(0.05, net.n_params());
        let trace = fit_critic(&mut net, &mut opt, &contexts, &targets, 400).unwrap();
        assert!(trace.last().unwrap() < &1e-6, "final loss {}", trace.last().unwrap());
    }

    #[test]
    fn zero_epochs_leave_the_critic_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(121);
        let mut net = crate::nn::DenseNet::new(&[2, 4, 1], &mut rng).unwrap();
        let before = {
            let mut f = Vec::new();
            net.write_flat(&mut f);
            f
        };
        let mut opt = AdamState::new(0.05, net.n_params());
        let trace =
            fit_critic(&mut net, &mut opt, &[arr1(&[0.0, 0.0])], &[1.0], 0).unwrap();
        assert!(trace.is_empty());
        let mut after = Vec::new();
        net.write_flat(&mut after);
        assert_eq!(before, after);
    }

    #[test]
    fn linear_targets_reach_small_residual_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(122);
        // Affine net (no hidden layer) fitting an affine target exactly.
        let mut net = crate::nn::DenseNet::with_gains(&[2, 1], 1.0, 1.0, &mut rng).unwrap();
        let contexts: Vec<_> = (0..30).map(|_| random_vector(2, 1.0, &mut rng)).collect();
        let targets: Vec<f64> = contexts.iter().map(|c| 1.5 * c[0] - 0.8 * c[1] + 0.3).collect();
        let n = targets.len() as f64;
        let mean = targets.iter().sum::<f64>() / n;
        let var = targets.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
        let mut opt = AdamState::new(0.05, net.n_params());
        let trace = fit_critic(&mut net, &mut opt, &contexts, &targets, 2000).unwrap();
        assert!(
            *trace.last().unwrap() < 1e-3 * var,
            "final {} vs variance {var}",
            trace.last().unwrap()
        );
    }

    #[test]
    fn advantages_vanish_for_an_exact_critic_on_equal_returns() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let mut net = crate::nn::DenseNet::new(&[2, 4, 1], &mut rng).unwrap();
        // Zero all layers, bias the output to the constant return.
        let mut flat = vec![0.0; net.n_params()];
        net.read_flat(&flat).unwrap();
        let n = net.n_params();
        flat[n - 1] = -2.0;
        net.read_flat(&flat).unwrap();
        let records: Vec<RolloutRecord> = (0..5).map(|_| record(-2.0, vec![1.0], 0)).collect();
        let adv = expert_advantages(&records, &net, 0.0, false).unwrap();
        for a in adv {
            assert_abs_diff_eq!(a, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn normalized_advantages_have_zero_mean_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(124);
        let net = crate::nn::DenseNet::new(&[2, 4, 1], &mut rng).unwrap();
        let records: Vec<RolloutRecord> = (0..12)
            .map(|i| {
                let mut r = record(-(i as f64) - 0.5, vec![1.0], 0);
                r.context = random_vector(2, 1.0, &mut rng);
                r
            })
            .collect();
        let adv = expert_advantages(&records, &net, 0.0, true).unwrap();
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(var, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn unnormalized_advantages_are_recomputable() {
        let mut rng = ChaCha8Rng::seed_from_u64(125);
        let net = crate::nn::DenseNet::new(&[2, 4, 1], &mut rng).unwrap();
        let mut r = record(-1.7, vec![0.25, 0.75], 1);
        r.context = arr1(&[0.3, -0.2]);
        let adv = expert_advantages(&[r.clone()], &net, 0.02, false).unwrap();
        let expected = augmented_return(&r, 0.02) - net.forward(r.context.view()).unwrap()[0];
        assert_abs_diff_eq!(adv[0], expected, epsilon = 1e-12);
    }

    #[test]
    fn context_payoffs_average_duplicates() {
        let mut a = record(-1.0, vec![1.0], 0);
        a.batch_index = 3;
        let mut b = record(-3.0, vec![1.0], 0);
        b.batch_index = 3;
        let entropy = 1.2;
        let alpha = 0.5;
        let payoffs = context_payoffs(&[a, b], alpha, entropy);
        assert_eq!(payoffs.len(), 1);
        assert_eq!(payoffs[0].0, 3);
        assert_abs_diff_eq!(payoffs[0].1, -2.0 + alpha * entropy, epsilon = 1e-12);
    }

    #[test]
    fn payoff_reduces_to_return_when_alpha_is_zero() {
        let payoffs = context_payoffs(&[record(-4.2, vec![0.5, 0.5], 0)], 0.0, 3.0);
        assert_abs_diff_eq!(payoffs[0].1, -4.2, epsilon = 1e-12);
    }

    #[test]
    fn payoff_single_expert_with_alpha_adds_entropy() {
        let alpha = 0.3;
        let entropy = 2.5;
        let payoffs = context_payoffs(&[record(-1.0, vec![1.0], 0)], alpha, entropy);
        assert_abs_diff_eq!(payoffs[0].1, -1.0 + alpha * entropy, epsilon = 1e-12);
    }

    #[test]
    fn zero_advantage_and_zero_alpha_leave_the_expert_unchanged() {
        let mut expert = small_expert(130, 2);
        let snapshot = Expert { mean_net: expert.mean_net.clone(), chol: expert.chol.clone() };
        let (contexts, thetas, _, _) = surrogate_inputs(131, 2, 5);
        let log_prob_old: Vec<f64> = contexts
            .iter()
            .zip(&thetas)
            .map(|(c, t)| expert.log_prob(c.view(), t.view()).unwrap())
            .collect();
        let cfg = UpdateConfig { alpha: 0.0, epochs: 5, ..UpdateConfig::default() };
        let mut before = Vec::new();
        expert.mean_net.write_flat(&mut before);
        expert.chol.write_flat(&mut before);
        let n = before.len();
        let mut opt = AdamState::new(cfg.lr_policy, n);
        let report = update_expert(
            &mut expert,
            &snapshot,
            &contexts,
            &thetas,
            &vec![0.0; 5],
            &log_prob_old,
            &cfg,
            &mut opt,
        )
        .unwrap();
        let mut after = Vec::new();
        expert.mean_net.write_flat(&mut after);
        expert.chol.write_flat(&mut after);
        assert_eq!(before, after);
        assert_eq!(report.max_total, 0.0);
    }

    #[test]
    fn trust_region_bounds_hold_after_updates() {
        let mut rng = ChaCha8Rng::seed_from_u64(140);
        for trial in 0..10 {
            let mut expert = small_expert(141 + trial, 2);
            let snapshot = Expert { mean_net: expert.mean_net.clone(), chol: expert.chol.clone() };
            let (contexts, thetas, advantages, _) = surrogate_inputs(150 + trial, 2, 8);
            let log_prob_old: Vec<f64> = contexts
                .iter()
                .zip(&thetas)
                .map(|(c, t)| expert.log_prob(c.view(), t.view()).unwrap())
                .collect();
            let advantages: Vec<f64> = advantages.iter().map(|a| a * 10.0).collect();
            let cfg = UpdateConfig {
                alpha: 0.01,
                epochs: 30,
                lr_policy: 0.01,
                mean_bound: 0.05,
                cov_bound: 0.001,
                ..UpdateConfig::default()
            };
            let mut opt = AdamState::new(cfg.lr_policy, expert.mean_net.n_params() + expert.chol.n_params());
            let report = update_expert(
                &mut expert,
                &snapshot,
                &contexts,
                &thetas,
                &advantages,
                &log_prob_old,
                &cfg,
                &mut opt,
            )
            .unwrap();
            assert!(report.max_mean_part <= 0.05 * 1.001, "mean part {}", report.max_mean_part);
            assert!(report.max_cov_part <= 0.001 * 1.001, "cov part {}", report.max_cov_part);
            let _ = rng.random::<f64>();
        }
    }

    #[test]
    fn entropy_ascent_is_monotone_until_the_projection_binds() {
        // One-dimensional expert, zero advantages, large alpha: only the
        // entropy term drives the covariance up until the bound stops it.
        let mut expert = small_expert(160, 1);
        let snapshot = Expert { mean_net: expert.mean_net.clone(), chol: expert.chol.clone() };
        let contexts = vec![arr1(&[0.1, 0.2]), arr1(&[-0.3, 0.4])];
        let thetas = vec![arr1(&[0.0]), arr1(&[0.1])];
        let log_prob_old: Vec<f64> = contexts
            .iter()
            .zip(&thetas)
            .map(|(c, t)| expert.log_prob(c.view(), t.view()).unwrap())
            .collect();
        let cfg = UpdateConfig {
            alpha: 10.0,
            epochs: 1,
            lr_policy: 0.02,
            cov_bound: 0.05,
            ..UpdateConfig::default()
        };
        let mut opt = AdamState::new(cfg.lr_policy, expert.mean_net.n_params() + expert.chol.n_params());
        let mut entropies = vec![expert.entropy()];
        for _ in 0..40 {
            update_expert(
                &mut expert,
                &snapshot,
                &contexts,
                &thetas,
                &[0.0, 0.0],
                &log_prob_old,
                &cfg,
                &mut opt,
            )
            .unwrap();
            entropies.push(expert.entropy());
        }
        for w in entropies.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "entropy dropped: {} -> {}", w[0], w[1]);
        }
        // The covariance bound eventually binds (KL vs the original snapshot
        // is capped, so entropy stalls at the projected value).
        let final_kl = cov_kl(&expert, &snapshot);
        assert!(final_kl <= 0.05 * 1.001 + 1e-9);
    }

    fn cov_kl(new: &Expert, old: &Expert) -> f64 {
        let l_new = new.chol.matrix();
        let l_old = old.chol.matrix();
        crate::nn::kl_parts(
            &arr1(&[0.0]).view(),
            &l_new,
            new.chol.sum_log_diag(),
            &arr1(&[0.0]).view(),
            &l_old,
            old.chol.sum_log_diag(),
        )
        .cov_part
    }

    fn batch_probs(net: &crate::nn::DenseNet, batch: &[ndarray::Array1<f64>]) -> Vec<f64> {
        let energies: Vec<f64> = batch
            .iter()
            .map(|c| net.forward(c.view()).unwrap()[0].clamp(-30.0, 30.0))
            .collect();
        crate::policy::mixture_curriculum_from_energies(&energies).probs
    }

    #[test]
    fn large_beta_drives_the_curriculum_toward_uniform() {
        // Start from a deliberately concentrated energy landscape.
        let mut rng = ChaCha8Rng::seed_from_u64(170);
        let mut net = crate::nn::DenseNet::with_gains(&[2, 8, 1], 2.0, 8.0, &mut rng).unwrap();
        let batch: Vec<_> = (0..16).map(|_| random_vector(2, 1.0, &mut rng)).collect();
        let start = crate::policy::mixture_curriculum_from_energies(
            &batch.iter().map(|c| net.forward(c.view()).unwrap()[0]).collect::<Vec<_>>(),
        )
        .entropy();
        let target = (16.0f64).ln();
        assert!(start < 0.98 * target, "start entropy {start} already uniform");

        let cfg = UpdateConfig {
            beta: 50.0,
            energy_epochs: 1,
            lr_energy: 0.01,
            ..UpdateConfig::default()
        };
        let mut opt = AdamState::new(cfg.lr_energy, net.n_params());
        let mut entropy = 0.0;
        for _ in 0..200 {
            let probs_old = batch_probs(&net, &batch);
            entropy =
                update_context_ebm(&mut net, &batch, &probs_old, &[], &cfg, &mut opt).unwrap();
        }
        assert!(entropy >= 0.99 * target, "entropy {entropy} vs ln 16 = {target}");
    }

    #[test]
    fn zero_payoffs_and_zero_beta_leave_the_energies_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(171);
        let mut net = crate::nn::DenseNet::new(&[2, 8, 1], &mut rng).unwrap();
        let batch: Vec<_> = (0..10).map(|_| random_vector(2, 1.0, &mut rng)).collect();
        let probs_old = batch_probs(&net, &batch);
        let executed: Vec<(usize, f64)> = vec![(0, 0.0), (3, 0.0), (7, 0.0)];
        let cfg = UpdateConfig { beta: 0.0, energy_epochs: 5, ..UpdateConfig::default() };
        let mut before = Vec::new();
        net.write_flat(&mut before);
        let mut opt = AdamState::new(cfg.lr_energy, net.n_params());
        update_context_ebm(&mut net, &batch, &probs_old, &executed, &cfg, &mut opt).unwrap();
        let mut after = Vec::new();
        net.write_flat(&mut after);
        assert_eq!(before, after);
    }

    #[test]
    fn unit_ratios_make_clipped_and_unclipped_gradients_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(172);
        let net = crate::nn::DenseNet::new(&[2, 6, 1], &mut rng).unwrap();
        let batch: Vec<_> = (0..8).map(|_| random_vector(2, 1.0, &mut rng)).collect();
        let probs_old = batch_probs(&net, &batch);
        let executed: Vec<(usize, f64)> =
            (0..4).map(|i| (i, rng.random_range(-1.0..1.0))).collect();
        // With identical parameters every ratio is exactly one, so a huge
        // clip (inactive) and the standard clip produce the same gradient.
        let (_, tight) = ebm_surrogate(&net, &batch, &probs_old, &executed, 0.0, 0.2).unwrap();
        let (_, loose) = ebm_surrogate(&net, &batch, &probs_old, &executed, 0.0, 0.999).unwrap();
        let mut a = Vec::new();
        net.grads_flat(&tight, &mut a);
        let mut b = Vec::new();
        net.grads_flat(&loose, &mut b);
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn categorical_entropy_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(173);
        let net = crate::nn::DenseNet::new(&[2, 6, 1], &mut rng).unwrap();
        let batch: Vec<_> = (0..20).map(|_| random_vector(2, 1.0, &mut rng)).collect();
        let probs_old = batch_probs(&net, &batch);
        // With no executed samples the objective is exactly beta * H.
        let beta = 1.0;
        let (obj, _) = ebm_surrogate(&net, &batch, &probs_old, &[], beta, 0.2).unwrap();
        let direct: f64 = -probs_old.iter().map(|&p| p * p.ln()).sum::<f64>();
        assert_abs_diff_eq!(obj, beta * direct, epsilon = 1e-12);
    }

    #[test]
    fn constant_payoff_shift_with_absorbing_baseline_is_invariant() {
        // Shifting all payoffs by a constant and moving the same constant
        // into the baseline leaves the advantages, hence the single-step
        // update, unchanged.
        let mut rng = ChaCha8Rng::seed_from_u64(174);
        let batch: Vec<_> = (0..12).map(|_| random_vector(2, 1.0, &mut rng)).collect();
        let payoffs: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let baseline: Vec<f64> = (0..6).map(|_| rng.random_range(-0.5..0.5)).collect();
        let shift = 7.3;
        let cfg = UpdateConfig { beta: 0.3, energy_epochs: 1, lr_energy: 0.01, ..UpdateConfig::default() };

        let run = |payoffs: &[f64], baseline: &[f64]| {
            let mut net_rng = ChaCha8Rng::seed_from_u64(175);
            let mut net = crate::nn::DenseNet::new(&[2, 6, 1], &mut net_rng).unwrap();
            let probs_old = batch_probs(&net, &batch);
            let executed: Vec<(usize, f64)> =
                (0..6).map(|i| (i * 2, payoffs[i] - baseline[i])).collect();
            let mut opt = AdamState::new(cfg.lr_energy, net.n_params());
            update_context_ebm(&mut net, &batch, &probs_old, &executed, &cfg, &mut opt).unwrap();
            batch_probs(&net, &batch)
        };

        let probs_a = run(&payoffs, &baseline);
        let shifted_payoffs: Vec<f64> = payoffs.iter().map(|p| p + shift).collect();
        let shifted_baseline: Vec<f64> = baseline.iter().map(|b| b + shift).collect();
        let probs_b = run(&shifted_payoffs, &shifted_baseline);

        let argmax_a = probs_a.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let argmax_b = probs_b.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(argmax_a, argmax_b);
        for (a, b) in probs_a.iter().zip(&probs_b) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn context_advantage_assembles_from_parts() {
        let mut rng = ChaCha8Rng::seed_from_u64(176);
        let mut policy = MixturePolicy::new(2, 2, 3, &[6], &[6], 1.0, &mut rng).unwrap();
        let batch: Vec<_> = (0..10).map(|_| random_vector(2, 1.0, &mut rng)).collect();
        policy.refresh_normalizers(&batch).unwrap();
        let snapshot = policy.snapshot();
        let critic = crate::nn::DenseNet::new(&[2, 6, 1], &mut rng).unwrap();
        let cfg = UpdateConfig { normalize_advantages: false, ..UpdateConfig::default() };
        let payoffs = vec![(2usize, -1.4), (5usize, 0.3)];
        let advs = context_advantages(&payoffs, &snapshot, 1, &batch, &critic, &cfg).unwrap();
        for (k, &(idx, adv)) in advs.iter().enumerate() {
            let gating = snapshot.gating_variational(batch[idx].view()).unwrap();
            let expected = payoffs[k].1 + (cfg.beta - cfg.alpha) * floored_log(gating[1])
                - critic.forward(batch[idx].view()).unwrap()[0];
            assert_abs_diff_eq!(adv, expected, epsilon = 1e-12);
        }

        // Ablated variational term: the gating contribution vanishes.
        let ablated = UpdateConfig { curriculum_variational: false, ..cfg.clone() };
        let advs = context_advantages(&payoffs, &snapshot, 1, &batch, &critic, &ablated).unwrap();
        for (k, &(idx, adv)) in advs.iter().enumerate() {
            let expected = payoffs[k].1 - critic.forward(batch[idx].view()).unwrap()[0];
            assert_abs_diff_eq!(adv, expected, epsilon = 1e-12);
        }

    }
}
