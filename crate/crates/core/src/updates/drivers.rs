//! Update drivers: per-expert trust-region ascent, the curriculum (EBM)
//! update, and critic regression.

use ndarray::{Array1, Array2};

use super::losses::{critic_mse, ebm_surrogate, expert_surrogate};
use super::UpdateConfig;
use crate::error::{Error, Result};
use crate::nn::{gaussian, AdamState, CholFactor, DenseNet};
use crate::policy::Expert;

/// Worst per-context KL against the snapshot after the final projection.
#[derive(Debug, Clone, Copy, Default)]
pub struct KlReport {
    pub max_mean_part: f64,
    pub max_cov_part: f64,
    pub max_total: f64,
    /// Last surrogate value seen during the update.
    pub surrogate: f64,
}

fn flatten_expert(expert: &Expert) -> Vec<f64> {
    let mut flat = Vec::with_capacity(expert.mean_net.n_params() + expert.chol.n_params());
    expert.mean_net.write_flat(&mut flat);
    expert.chol.write_flat(&mut flat);
    flat
}

fn unflatten_expert(expert: &mut Expert, flat: &[f64]) -> Result<()> {
    let used = expert.mean_net.read_flat(flat)?;
    expert.chol.read_flat(&flat[used..])?;
    Ok(())
}

fn mean_kl_parts(
    expert: &Expert,
    old_means: &[Array1<f64>],
    l_old: &Array2<f64>,
    contexts: &[Array1<f64>],
) -> Result<Vec<f64>> {
    let mut parts = Vec::with_capacity(contexts.len());
    for (c, mu_old) in contexts.iter().zip(old_means) {
        let mu_new = expert.mean(c.view())?;
        let diff = &mu_new - mu_old;
        let z = gaussian::solve_lower(l_old, &diff.view());
        parts.push(0.5 * z.iter().map(|zi| zi * zi).sum::<f64>());
    }
    Ok(parts)
}

fn cov_part(l_new: &Array2<f64>, sldn: f64, l_old: &Array2<f64>, sldo: f64) -> f64 {
    let d = l_new.nrows();
    let mut trace = 0.0;
    for j in 0..d {
        let col = l_new.column(j).to_owned();
        let y = gaussian::solve_lower(l_old, &col.view());
        trace += y.iter().map(|yi| yi * yi).sum::<f64>();
    }
    0.5 * (trace - d as f64 + 2.0 * sldo - 2.0 * sldn)
}

fn sum_log_diag_of(l: &Array2<f64>) -> f64 {
    (0..l.nrows()).map(|i| l[(i, i)].ln()).sum()
}

/// Trust-region expert update.
///
/// Runs `cfg.epochs` Adam ascent steps on the surrogate-plus-entropy
/// objective. After every epoch, the per-context KL against the snapshot is
/// projected back inside the bounds: the mean-net parameter delta is scaled
/// by `sqrt(eps_mean / max_part)` until every sampled context satisfies the
/// mean bound, and the Cholesky factor is interpolated toward the snapshot,
/// bisecting until the covariance part fits.
#[allow(clippy::too_many_arguments)]
pub fn update_expert(
    expert: &mut Expert,
    snapshot_expert: &Expert,
    contexts: &[Array1<f64>],
    thetas: &[Array1<f64>],
    advantages: &[f64],
    log_prob_old: &[f64],
    cfg: &UpdateConfig,
    opt: &mut AdamState,
) -> Result<KlReport> {
    let slack = 1.0 + 1e-3;
    let l_old = snapshot_expert.chol.matrix();
    let sldo = snapshot_expert.chol.sum_log_diag();
    let mut old_means = Vec::with_capacity(contexts.len());
    for c in contexts {
        old_means.push(snapshot_expert.mean(c.view())?);
    }
    let mean_net_old_flat = {
        let mut f = Vec::with_capacity(snapshot_expert.mean_net.n_params());
        snapshot_expert.mean_net.write_flat(&mut f);
        f
    };

    let mut surrogate = f64::NAN;
    for _ in 0..cfg.epochs {
        let (obj, net_grads, chol_grads) = expert_surrogate(
            &expert.mean_net,
            &expert.chol,
            contexts,
            thetas,
            advantages,
            log_prob_old,
            cfg.alpha,
        )?;
        surrogate = obj;

        // Ascent: feed Adam the negated gradient.
        let mut flat = flatten_expert(expert);
        let mut grads = Vec::with_capacity(flat.len());
        expert.mean_net.grads_flat(&net_grads, &mut grads);
        grads.extend_from_slice(&chol_grads);
        for g in &mut grads {
            *g = -*g;
        }
        opt.step(&mut flat, &grads)?;
        unflatten_expert(expert, &flat)?;

        project_mean(expert, &mean_net_old_flat, &old_means, &l_old, contexts, cfg.mean_bound, slack)?;
        project_cov(&mut expert.chol, &l_old, sldo, cfg.cov_bound, slack)?;
    }

    let mean_parts = mean_kl_parts(expert, &old_means, &l_old, contexts)?;
    let max_mean_part = mean_parts.iter().fold(0.0f64, |m, &p| m.max(p));
    let l_new = expert.chol.matrix();
    let max_cov_part = cov_part(&l_new, expert.chol.sum_log_diag(), &l_old, sldo);
    Ok(KlReport {
        max_mean_part,
        max_cov_part,
        max_total: max_mean_part + max_cov_part,
        surrogate,
    })
}

/// Scales the mean-net parameter delta toward the snapshot until every
/// sampled context satisfies the mean-part bound. Parameter interpolation
/// only approximately scales the outputs of a nonlinear net, so the scale is
/// reapplied until the bound holds; the scale goes to zero in the limit and
/// the KL with it.
fn project_mean(
    expert: &mut Expert,
    mean_net_old_flat: &[f64],
    old_means: &[Array1<f64>],
    l_old: &Array2<f64>,
    contexts: &[Array1<f64>],
    bound: f64,
    slack: f64,
) -> Result<()> {
    for _ in 0..100 {
        let parts = mean_kl_parts(expert, old_means, l_old, contexts)?;
        let max_part = parts.iter().fold(0.0f64, |m, &p| m.max(p));
        if !max_part.is_finite() {
            return Err(Error::UpdateAborted("non-finite KL during mean projection".into()));
        }
        if max_part <= bound * slack {
            return Ok(());
        }
        let s = (bound / max_part).sqrt().min(0.999);
        let mut flat = Vec::with_capacity(expert.mean_net.n_params());
        expert.mean_net.write_flat(&mut flat);
        for (p, &p_old) in flat.iter_mut().zip(mean_net_old_flat) {
            *p = p_old + s * (*p - p_old);
        }
        expert.mean_net.read_flat(&flat)?;
    }
    Err(Error::UpdateAborted("mean projection did not converge".into()))
}

/// Interpolates the Cholesky factor toward the snapshot, bisecting the blend
/// until the covariance part fits under the bound.
fn project_cov(
    chol: &mut CholFactor,
    l_old: &Array2<f64>,
    sldo: f64,
    bound: f64,
    slack: f64,
) -> Result<()> {
    let l_new = chol.matrix();
    let part = cov_part(&l_new, sum_log_diag_of(&l_new), l_old, sldo);
    if part <= bound * slack {
        return Ok(());
    }
    let blend = |s: f64| -> Array2<f64> {
        let mut l = l_old.clone();
        l.zip_mut_with(&l_new, |lo, &ln| *lo += s * (ln - *lo));
        l
    };
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let l_mid = blend(mid);
        let p = cov_part(&l_mid, sum_log_diag_of(&l_mid), l_old, sldo);
        if p <= bound {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    *chol = CholFactor::from_matrix(&blend(lo))?;
    Ok(())
}

/// EBM (curriculum) update for one expert: Adam ascent on the clipped
/// surrogate plus `beta` times the categorical entropy over the batch.
/// Returns the final curriculum entropy.
pub fn update_context_ebm(
    energy_net: &mut DenseNet,
    env_batch: &[Array1<f64>],
    probs_old: &[f64],
    executed: &[(usize, f64)],
    cfg: &UpdateConfig,
    opt: &mut AdamState,
) -> Result<f64> {
    for _ in 0..cfg.energy_epochs {
        let (_obj, grads) =
            ebm_surrogate(energy_net, env_batch, probs_old, executed, cfg.beta, cfg.ppo_clip)?;
        let mut flat = Vec::with_capacity(energy_net.n_params());
        energy_net.write_flat(&mut flat);
        let mut g = Vec::with_capacity(flat.len());
        energy_net.grads_flat(&grads, &mut g);
        for gi in &mut g {
            *gi = -*gi;
        }
        opt.step(&mut flat, &g)?;
        energy_net.read_flat(&flat)?;
    }
    // Report the resulting curriculum entropy.
    let mut energies = Vec::with_capacity(env_batch.len());
    for c in env_batch {
        let e = energy_net.forward(c.view())?[0];
        energies.push(e.clamp(-crate::policy::ENERGY_CLAMP, crate::policy::ENERGY_CLAMP));
    }
    let dist = crate::policy::mixture_curriculum_from_energies(&energies);
    Ok(dist.entropy())
}

/// MSE regression of a scalar critic onto targets; returns the per-epoch
/// loss trace (empty when `epochs` is zero, leaving the net untouched).
pub fn fit_critic(
    net: &mut DenseNet,
    opt: &mut AdamState,
    contexts: &[Array1<f64>],
    targets: &[f64],
    epochs: usize,
) -> Result<Vec<f64>> {
    let mut trace = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let (loss, grads) = critic_mse(net, contexts, targets)?;
        trace.push(loss);
        let mut flat = Vec::with_capacity(net.n_params());
        net.write_flat(&mut flat);
        let mut g = Vec::with_capacity(flat.len());
        net.grads_flat(&grads, &mut g);
        opt.step(&mut flat, &g)?;
        net.read_flat(&flat)?;
    }
    Ok(trace)
}
