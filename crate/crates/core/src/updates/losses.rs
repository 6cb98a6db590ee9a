//! Gradient-bearing objectives.
//!
//! Each function returns the objective value together with exact analytic
//! gradients; the gradient suite pins them against central finite
//! differences.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::nn::{gaussian, CholFactor, DenseNet, NetGrads};
use crate::policy::ENERGY_CLAMP;

/// Importance-weighted expert surrogate with an entropy bonus:
/// `mean_i exp(ln pi_new(theta_i|c_i) - ln pi_old(theta_i|c_i)) * A_i + alpha * H`.
///
/// Returns `(objective, mean-net grads, chol raw-parameter grads)`.
pub fn expert_surrogate(
    mean_net: &DenseNet,
    chol: &CholFactor,
    contexts: &[Array1<f64>],
    thetas: &[Array1<f64>],
    advantages: &[f64],
    log_prob_old: &[f64],
    alpha: f64,
) -> Result<(f64, NetGrads, Vec<f64>)> {
    let m = contexts.len();
    if m == 0 || thetas.len() != m || advantages.len() != m || log_prob_old.len() != m {
        return Err(Error::ShapeMismatch("expert surrogate inputs disagree in length".into()));
    }
    let l = chol.matrix();
    let sum_log_diag = chol.sum_log_diag();
    let dim = chol.dim();

    let mut objective = 0.0;
    let mut net_grads = NetGrads::zeros_like(mean_net);
    let mut dl_total = Array2::<f64>::zeros((dim, dim));
    let inv_m = 1.0 / m as f64;

    for i in 0..m {
        let trace = mean_net.forward_trace(contexts[i].view())?;
        let (logp, d_mean, dl) = gaussian::log_prob_grads_impl(
            &trace.output().view(),
            &l,
            sum_log_diag,
            &thetas[i].view(),
        )?;
        let ratio = (logp - log_prob_old[i]).exp();
        objective += inv_m * ratio * advantages[i];
        let w = inv_m * ratio * advantages[i];
        if w != 0.0 {
            let upstream = d_mean.mapv(|g| g * w);
            mean_net.backprop_trace(&trace, upstream.view(), &mut net_grads)?;
            dl_total.scaled_add(w, &dl);
        }
    }

    // Entropy bonus: dH/dL = diag(1 / L_ii).
    objective += alpha * gaussian::entropy_impl(dim, sum_log_diag);
    for i in 0..dim {
        dl_total[(i, i)] += alpha / l[(i, i)];
    }

    if !objective.is_finite() {
        return Err(Error::UpdateAborted("expert surrogate is non-finite".into()));
    }
    let mut chol_grads = vec![0.0; chol.n_params()];
    chol.matrix_grad_to_raw(&dl_total, &mut chol_grads);
    Ok((objective, net_grads, chol_grads))
}

/// Clipped surrogate plus categorical entropy for one energy net:
/// `mean_i min(r_i A_i, clip(r_i, 1 +- clip) A_i) + beta * H(softmax(energies))`,
/// where `r_i = p_new(c_i) / p_old(c_i)` and both softmaxes run over the
/// full environment batch.
///
/// `executed` holds `(batch index, payoff)` pairs for the contexts the
/// expert actually executed.
pub fn ebm_surrogate(
    energy_net: &DenseNet,
    env_batch: &[Array1<f64>],
    probs_old: &[f64],
    executed: &[(usize, f64)],
    beta: f64,
    clip: f64,
) -> Result<(f64, NetGrads)> {
    let n = env_batch.len();
    if n == 0 || probs_old.len() != n {
        return Err(Error::ShapeMismatch("EBM surrogate needs old probs matching the batch".into()));
    }
    // Forward pass over the whole batch, keeping traces for backprop.
    let mut traces = Vec::with_capacity(n);
    let mut energies = Vec::with_capacity(n);
    let mut clamp_mask = Vec::with_capacity(n);
    for c in env_batch {
        let trace = energy_net.forward_trace(c.view())?;
        let raw = trace.output()[0];
        if !raw.is_finite() {
            return Err(Error::UpdateAborted("non-finite energy in EBM update".into()));
        }
        clamp_mask.push(raw.abs() <= ENERGY_CLAMP);
        energies.push(raw.clamp(-ENERGY_CLAMP, ENERGY_CLAMP));
        traces.push(trace);
    }
    let max = energies.iter().fold(f64::NEG_INFINITY, |m, &e| m.max(e));
    let mut probs: Vec<f64> = energies.iter().map(|&e| (e - max).exp()).collect();
    let norm: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= norm;
    }
    let entropy: f64 =
        -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>();

    // d objective / d energy_j, accumulated across the surrogate and the
    // entropy bonus. For the surrogate, with s_i = g_i p_{b_i} / (M p_old,i):
    // d/d e_j = sum_{i: b_i = j} s_i  -  p_j * sum_i s_i.
    let mut d_energy = vec![0.0; n];
    let mut objective = 0.0;
    if !executed.is_empty() {
        let inv_m = 1.0 / executed.len() as f64;
        let mut s_sum = 0.0;
        for &(idx, payoff) in executed {
            if idx >= n {
                return Err(Error::ShapeMismatch("executed record indexes past the env batch".into()));
            }
            if probs_old[idx] <= 0.0 {
                return Err(Error::UpdateAborted("old curriculum probability vanished".into()));
            }
            let ratio = probs[idx] / probs_old[idx];
            let surr1 = ratio * payoff;
            let surr2 = ratio.clamp(1.0 - clip, 1.0 + clip) * payoff;
            objective += inv_m * surr1.min(surr2);
            // Gradient flows only while the unclipped branch is active.
            let g = if surr1 <= surr2 { payoff } else { 0.0 };
            let s = inv_m * g * probs[idx] / probs_old[idx];
            d_energy[idx] += s;
            s_sum += s;
        }
        for j in 0..n {
            d_energy[j] -= probs[j] * s_sum;
        }
    }

    objective += beta * entropy;
    for j in 0..n {
        // dH/d e_j = -p_j (ln p_j + H).
        if probs[j] > 0.0 {
            d_energy[j] += beta * (-probs[j] * (probs[j].ln() + entropy));
        }
    }

    if !objective.is_finite() {
        return Err(Error::UpdateAborted("EBM surrogate is non-finite".into()));
    }

    let mut grads = NetGrads::zeros_like(energy_net);
    let upstream = Array1::from_elem(1, 0.0);
    for j in 0..n {
        if d_energy[j] != 0.0 && clamp_mask[j] {
            let mut up = upstream.clone();
            up[0] = d_energy[j];
            energy_net.backprop_trace(&traces[j], up.view(), &mut grads)?;
        }
    }
    Ok((objective, grads))
}

/// Mean-squared-error regression loss `mean_i (V(c_i) - y_i)^2`.
pub fn critic_mse(net: &DenseNet, contexts: &[Array1<f64>], targets: &[f64]) -> Result<(f64, NetGrads)> {
    let m = contexts.len();
    if m == 0 || targets.len() != m {
        return Err(Error::ShapeMismatch("critic regression inputs disagree in length".into()));
    }
    let mut loss = 0.0;
    let mut grads = NetGrads::zeros_like(net);
    let inv_m = 1.0 / m as f64;
    for i in 0..m {
        let trace = net.forward_trace(contexts[i].view())?;
        let err = trace.output()[0] - targets[i];
        loss += inv_m * err * err;
        let upstream = Array1::from_elem(1, 2.0 * inv_m * err);
        net.backprop_trace(&trace, upstream.view(), &mut grads)?;
    }
    if !loss.is_finite() {
        return Err(Error::UpdateAborted("critic loss is non-finite".into()));
    }
    Ok((loss, grads))
}
