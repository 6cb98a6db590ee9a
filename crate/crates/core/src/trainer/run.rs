//! The training loop, resumption, and inference.
//!
//! One iteration: (1) sample a fresh context batch by resetting the
//! environment, (2) recompute the normalizer estimates and freeze the
//! policy snapshot, (3) per expert, resample training contexts from its
//! curriculum, sample parameters, execute episodes and record snapshot
//! quantities, (4) update critics, experts, and curricula, (5) append one
//! log row. Everything is deterministic given the seed: rollouts and
//! updates run in parallel across experts, each on its own named random
//! stream.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use ndarray::Array1;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::checkpoint::{Checkpoint, ExpertSlot};
use super::config::TrainConfig;
use super::log::{csv_header, IterationLog, LogTable};
use super::rng::RngStreams;
use crate::envs::{sample_contexts, Environment, EpisodeResult};
use crate::error::{Error, Result};
use crate::nn::{AdamState, DenseNet};
use crate::policy::{CurriculumDist, MixturePolicy, PolicySnapshot};
use crate::updates::{
    augmented_return, context_advantages, context_payoffs, context_target, expert_advantages,
    fit_critic, update_context_ebm, update_expert, RolloutRecord,
};

pub struct Trainer {
    config: TrainConfig,
    env: Box<dyn Environment>,
    policy: MixturePolicy,
    slots: Vec<ExpertSlot>,
    rng: RngStreams,
    iteration: usize,
}

struct ExpertOutcome {
    mean_return: f64,
    successes: usize,
    max_kl: f64,
    curriculum_entropy: f64,
    policy_entropy: f64,
}

impl Trainer {
    /// Fresh trainer: networks initialized from the seed's `init` stream.
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let env = config.env.build()?;
        let mut rng = RngStreams::new(config.run.seed);
        let policy = MixturePolicy::new(
            env.context_dim(),
            env.param_dim(),
            config.model.n_experts,
            &config.model.expert_hidden,
            &config.model.energy_hidden,
            config.model.init_std,
            rng.stream("init"),
        )?;
        let mut critic_dims = vec![env.context_dim()];
        critic_dims.extend_from_slice(&config.model.critic_hidden);
        critic_dims.push(1);
        let mut slots = Vec::with_capacity(config.model.n_experts);
        for _ in 0..config.model.n_experts {
            let critic_return = DenseNet::new(&critic_dims, rng.stream("init"))?;
            let critic_context = DenseNet::new(&critic_dims, rng.stream("init"))?;
            let expert_params = {
                let ex = policy.expert(0)?;
                ex.mean_net.n_params() + ex.chol.n_params()
            };
            slots.push(ExpertSlot {
                opt_expert: AdamState::new(config.update.lr_policy, expert_params),
                opt_critic_return: AdamState::new(config.update.lr_critic, critic_return.n_params()),
                opt_critic_context: AdamState::new(config.update.lr_critic, critic_context.n_params()),
                opt_energy: AdamState::new(config.update.lr_energy, policy.energy_net(0).n_params()),
                critic_return,
                critic_context,
            });
        }
        Ok(Self { config, env, policy, slots, rng, iteration: 0 })
    }

    pub fn from_checkpoint(path: &Path) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        let env = ck.config.env.build()?;
        Ok(Self {
            config: ck.config,
            env,
            policy: ck.policy,
            slots: ck.slots,
            rng: ck.rng,
            iteration: ck.iteration,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn policy(&self) -> &MixturePolicy {
        &self.policy
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn set_max_iterations(&mut self, iterations: usize) {
        self.config.run.iterations = iterations;
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        Checkpoint {
            config: self.config.clone(),
            iteration: self.iteration,
            policy: self.policy.clone(),
            slots: self.slots.clone(),
            rng: self.rng.clone(),
        }
        .save(path)
    }

    /// One full Di-SkilL iteration; returns the log row.
    pub fn run_iteration(&mut self) -> Result<IterationLog> {
        let k = self.config.model.n_experts;
        let t_s = self.config.update.samples_per_expert;
        let update_cfg = self.config.update.clone();

        // (1) Fresh environment batch.
        let batch =
            sample_contexts(self.env.as_ref(), self.config.run.env_batch_size, self.rng.stream("env"))?;
        // (2) Normalizer estimates, then freeze the snapshot.
        let dists = self.policy.refresh_normalizers(&batch)?;
        let snapshot = self.policy.snapshot();

        // (3) Rollouts, parallel across experts on their own streams.
        let mut rollout_rngs: Vec<(ChaCha8Rng, ChaCha8Rng)> = (0..k)
            .map(|o| {
                (self.rng.take(&format!("curriculum.{o}")), self.rng.take(&format!("theta.{o}")))
            })
            .collect();
        let env = self.env.as_ref();
        let records_per_expert: Vec<Result<Vec<RolloutRecord>>> = rollout_rngs
            .par_iter_mut()
            .enumerate()
            .map(|(o, (rng_curriculum, rng_theta))| {
                collect_rollouts(env, &snapshot, &dists[o], &batch, o, t_s, rng_curriculum, rng_theta)
            })
            .collect();
        for (o, (a, b)) in rollout_rngs.into_iter().enumerate() {
            self.rng.restore(&format!("curriculum.{o}"), a);
            self.rng.restore(&format!("theta.{o}"), b);
        }
        let records_per_expert: Vec<Vec<RolloutRecord>> =
            records_per_expert.into_iter().collect::<Result<_>>()?;

        // (4) Updates, parallel across experts.
        let (experts, energies) = self.policy.components_mut();
        let outcomes: Vec<Result<ExpertOutcome>> = experts
            .par_iter_mut()
            .zip(energies.par_iter_mut())
            .zip(self.slots.par_iter_mut())
            .zip(records_per_expert.par_iter())
            .zip(dists.par_iter())
            .enumerate()
            .map(|(o, ((((expert, energy), slot), records), dist))| {
                update_one_expert(o, expert, energy, slot, records, dist, &snapshot, &batch, &update_cfg)
            })
            .collect();
        let outcomes: Vec<ExpertOutcome> = outcomes.into_iter().collect::<Result<_>>()?;

        self.iteration += 1;
        let n_episodes: usize = records_per_expert.iter().map(Vec::len).sum();
        let total_return: f64 = records_per_expert
            .iter()
            .flatten()
            .map(|r| r.episodic_return)
            .sum();
        let successes: usize = outcomes.iter().map(|s| s.successes).sum();
        Ok(IterationLog {
            iteration: self.iteration,
            episodes: self.iteration * k * t_s,
            mean_return: total_return / n_episodes as f64,
            success_rate: successes as f64 / n_episodes as f64,
            max_kl: outcomes.iter().fold(0.0, |m, s| m.max(s.max_kl)),
            expert_return: outcomes.iter().map(|s| s.mean_return).collect(),
            curriculum_entropy: outcomes.iter().map(|s| s.curriculum_entropy).collect(),
            policy_entropy: outcomes.iter().map(|s| s.policy_entropy).collect(),
        })
    }

    /// Runs to `run.iterations`, appending log rows and checkpointing on
    /// cadence. On an aborted update the current state is checkpointed
    /// before the error propagates.
    pub fn train(&mut self) -> Result<()> {
        let log_path = self.config.run.log_path.clone();
        let checkpoint_path = self.config.run.checkpoint_path.clone();
        let cadence = self.config.run.checkpoint_every;
        let mut log_file = open_log(&log_path, self.iteration, self.config.model.n_experts)?;

        while self.iteration < self.config.run.iterations {
            let started = Instant::now();
            let row = match self.run_iteration() {
                Ok(row) => row,
                Err(e) => {
                    let _ = self.save_checkpoint(&checkpoint_path);
                    return Err(Error::UpdateAborted(format!(
                        "iteration {} failed ({e}); state checkpointed to {}",
                        self.iteration + 1,
                        checkpoint_path.display()
                    )));
                }
            };
            writeln!(log_file, "{}", row.to_csv_row())?;
            log_file.flush()?;
            eprintln!(
                "iter {:>4}/{} return {:>10.3} success {:>5.1}% max_kl {:.4} [{:.2?}]",
                row.iteration,
                self.config.run.iterations,
                row.mean_return,
                row.success_rate * 100.0,
                row.max_kl,
                started.elapsed()
            );
            if cadence > 0 && self.iteration % cadence == 0 {
                self.save_checkpoint(&checkpoint_path)?;
            }
        }
        self.save_checkpoint(&checkpoint_path)?;
        Ok(())
    }
}

/// Opens the log for a fresh run (iteration 0: truncate, write header) or a
/// resumed one (keep rows up to the checkpoint iteration, append after).
fn open_log(path: &Path, iteration: usize, n_experts: usize) -> Result<std::fs::File> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let header = csv_header(n_experts);
    if iteration == 0 {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "{header}")?;
        return Ok(f);
    }
    // Resumption: validate the header and drop rows past the checkpoint.
    let table = LogTable::read(path)?;
    if table.columns.join(",") != header {
        return Err(Error::Checkpoint("existing log header does not match this run".into()));
    }
    let iter_idx = table.column_index("iteration")?;
    let mut text = String::new();
    text.push_str(&header);
    text.push('\n');
    let existing = std::fs::read_to_string(path)?;
    for line in existing.lines().skip(1) {
        if line.is_empty() {
            continue;
        }
        let first: f64 = line
            .split(',')
            .nth(iter_idx)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse("unreadable iteration column in log".into()))?;
        if (first as usize) <= iteration {
            text.push_str(line);
            text.push('\n');
        }
    }
    std::fs::write(path, text)?;
    Ok(std::fs::OpenOptions::new().append(true).open(path)?)
}

#[allow(clippy::too_many_arguments)]
fn collect_rollouts(
    env: &dyn Environment,
    snapshot: &PolicySnapshot,
    dist: &CurriculumDist,
    batch: &[Array1<f64>],
    o: usize,
    t_s: usize,
    rng_curriculum: &mut ChaCha8Rng,
    rng_theta: &mut ChaCha8Rng,
) -> Result<Vec<RolloutRecord>> {
    let idxs = MixturePolicy::sample_training_contexts(&dist.probs, t_s, rng_curriculum);
    let expert = snapshot.expert(o)?;
    let mut records = Vec::with_capacity(t_s);
    for idx in idxs {
        let context = &batch[idx];
        let theta = expert.sample(context.view(), rng_theta)?;
        let result = env.evaluate(context.view(), theta.view())?;
        let log_prob_old = expert.log_prob(context.view(), theta.view())?;
        let responsibilities_old = snapshot.responsibilities(context.view(), theta.view())?;
        records.push(RolloutRecord {
            expert: o,
            context: context.clone(),
            theta,
            episodic_return: result.episodic_return,
            log_prob_old,
            responsibilities_old,
            batch_index: idx,
            success: result.success,
            final_distance: result.final_distance,
        });
    }
    Ok(records)
}

#[allow(clippy::too_many_arguments)]
fn update_one_expert(
    o: usize,
    expert: &mut crate::policy::Expert,
    energy: &mut DenseNet,
    slot: &mut ExpertSlot,
    records: &[RolloutRecord],
    dist: &CurriculumDist,
    snapshot: &PolicySnapshot,
    batch: &[Array1<f64>],
    cfg: &crate::updates::UpdateConfig,
) -> Result<ExpertOutcome> {
    let contexts: Vec<Array1<f64>> = records.iter().map(|r| r.context.clone()).collect();
    let thetas: Vec<Array1<f64>> = records.iter().map(|r| r.theta.clone()).collect();
    let log_prob_old: Vec<f64> = records.iter().map(|r| r.log_prob_old).collect();
    let augmented: Vec<f64> = records.iter().map(|r| augmented_return(r, cfg.alpha)).collect();

    // Return critic, then advantages, then the trust-region expert step.
    fit_critic(&mut slot.critic_return, &mut slot.opt_critic_return, &contexts, &augmented, cfg.critic_epochs)?;
    let advantages = expert_advantages(records, &slot.critic_return, cfg.alpha, cfg.normalize_advantages)?;
    let report = update_expert(
        expert,
        snapshot.expert(o)?,
        &contexts,
        &thetas,
        &advantages,
        &log_prob_old,
        cfg,
        &mut slot.opt_expert,
    )?;

    // Curriculum payoffs are estimates under the snapshot policy.
    let snapshot_entropy = snapshot.expert(o)?.entropy();
    let payoffs = context_payoffs(records, cfg.alpha, snapshot_entropy);
    let target_contexts: Vec<Array1<f64>> = payoffs.iter().map(|&(i, _)| batch[i].clone()).collect();
    let mut targets = Vec::with_capacity(payoffs.len());
    for &(i, l_c) in &payoffs {
        targets.push(context_target(l_c, snapshot, o, &batch[i], cfg)?);
    }
    fit_critic(&mut slot.critic_context, &mut slot.opt_critic_context, &target_contexts, &targets, cfg.critic_epochs)?;
    let ctx_advantages =
        context_advantages(&payoffs, snapshot, o, batch, &slot.critic_context, cfg)?;
    let curriculum_entropy =
        update_context_ebm(energy, batch, &dist.probs, &ctx_advantages, cfg, &mut slot.opt_energy)?;

    let n = records.len() as f64;
    Ok(ExpertOutcome {
        mean_return: records.iter().map(|r| r.episodic_return).sum::<f64>() / n,
        successes: records.iter().filter(|r| r.success).count(),
        max_kl: report.max_total,
        curriculum_entropy,
        policy_entropy: expert.entropy(),
    })
}

/// Outcome paths of a completed run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log_path: std::path::PathBuf,
    pub checkpoint_path: std::path::PathBuf,
    pub iterations: usize,
}

/// Trains from scratch per the config.
pub fn train(config: TrainConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config)?;
    trainer.train()?;
    Ok(TrainOutcome {
        log_path: trainer.config.run.log_path.clone(),
        checkpoint_path: trainer.config.run.checkpoint_path.clone(),
        iterations: trainer.iteration,
    })
}

/// Continues a checkpointed run; `extend_to` raises the iteration budget.
/// Resuming at or past the budget is a clean no-op.
pub fn resume(checkpoint: &Path, extend_to: Option<usize>) -> Result<TrainOutcome> {
    let mut trainer = Trainer::from_checkpoint(checkpoint)?;
    if let Some(n) = extend_to {
        trainer.set_max_iterations(n);
    }
    if trainer.iteration >= trainer.config.run.iterations {
        eprintln!(
            "checkpoint is already at iteration {} of {}; nothing to do",
            trainer.iteration, trainer.config.run.iterations
        );
    } else {
        trainer.train()?;
    }
    Ok(TrainOutcome {
        log_path: trainer.config.run.log_path.clone(),
        checkpoint_path: trainer.config.run.checkpoint_path.clone(),
        iterations: trainer.iteration,
    })
}

/// One inference result.
#[derive(Debug, Clone)]
pub struct InferenceRecord {
    pub context: Array1<f64>,
    pub expert: usize,
    pub theta: Array1<f64>,
    pub result: EpisodeResult,
}

/// Loads a checkpoint and evaluates the policy on contexts drawn from the
/// environment distribution (deterministic given `seed`).
pub fn infer(
    checkpoint: &Path,
    n_contexts: usize,
    deterministic: bool,
    seed: u64,
) -> Result<Vec<InferenceRecord>> {
    let ck = Checkpoint::load(checkpoint)?;
    let env = ck.config.env.build()?;
    let mut rng = RngStreams::new(seed);
    let contexts = sample_contexts(env.as_ref(), n_contexts, rng.stream("infer"))?;
    infer_on_contexts(&ck.policy, env.as_ref(), &contexts, deterministic, rng.stream("infer"))
}

/// Evaluates the policy on caller-provided contexts.
pub fn infer_on_contexts(
    policy: &MixturePolicy,
    env: &dyn Environment,
    contexts: &[Array1<f64>],
    deterministic: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<InferenceRecord>> {
    let mut out = Vec::with_capacity(contexts.len());
    for context in contexts {
        let (expert, theta) = policy.act(context.view(), rng, deterministic)?;
        let result = env.evaluate(context.view(), theta.view())?;
        out.push(InferenceRecord { context: context.clone(), expert, theta, result });
    }
    Ok(out)
}
