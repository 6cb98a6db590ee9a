use ndarray::{Array1, ArrayView1};
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{CholFactor, DenseNet, GaussianParams, TensorStore};

/// Energies are clamped to this symmetric range before any softmax, which
/// keeps early curricula away from degenerate one-hot distributions.
pub const ENERGY_CLAMP: f64 = 30.0;

/// Floor applied to log-probabilities before they are scaled by a
/// temperature and added to returns.
pub const LOG_FLOOR: f64 = -30.0;

/// One expert: a context-to-mean network plus a shared covariance factor.
#[derive(Debug, Clone)]
pub struct Expert {
    pub mean_net: DenseNet,
    pub chol: CholFactor,
}

impl Expert {
    pub fn mean(&self, context: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.mean_net.forward(context)
    }

    pub fn distribution(&self, context: ArrayView1<f64>) -> Result<GaussianParams> {
        GaussianParams::new(self.mean(context)?, self.chol.clone())
    }

    pub fn sample<R: Rng + ?Sized>(&self, context: ArrayView1<f64>, rng: &mut R) -> Result<Array1<f64>> {
        Ok(self.distribution(context)?.sample(rng))
    }

    pub fn log_prob(&self, context: ArrayView1<f64>, theta: ArrayView1<f64>) -> Result<f64> {
        self.distribution(context)?.log_prob(theta)
    }

    /// Differential entropy; context-independent because the covariance is.
    pub fn entropy(&self) -> f64 {
        crate::nn::gaussian_entropy_of(&self.chol)
    }
}

/// Curriculum probabilities of one expert over a context batch, together
/// with the batch normalizer estimate.
#[derive(Debug, Clone)]
pub struct CurriculumDist {
    pub probs: Vec<f64>,
    /// `logsumexp(energies) - ln N`.
    pub log_z: f64,
}

impl CurriculumDist {
    pub fn entropy(&self) -> f64 {
        -self.probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
    }
}

/// The full mixture policy.
#[derive(Debug, Clone)]
pub struct MixturePolicy {
    experts: Vec<Expert>,
    energy_nets: Vec<DenseNet>,
    /// Latest batch normalizer estimates, one per expert; `None` until the
    /// first environment batch has been seen.
    log_z: Option<Vec<f64>>,
}

impl MixturePolicy {
    /// Builds a fresh policy. `expert_hidden` may be empty for affine
    /// experts.
    pub fn new<R: Rng + ?Sized>(
        context_dim: usize,
        param_dim: usize,
        n_experts: usize,
        expert_hidden: &[usize],
        energy_hidden: &[usize],
        init_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if n_experts == 0 {
            return Err(Error::InvalidConfig("need at least one expert".into()));
        }
        let mut expert_dims = vec![context_dim];
        expert_dims.extend_from_slice(expert_hidden);
        expert_dims.push(param_dim);
        let mut energy_dims = vec![context_dim];
        energy_dims.extend_from_slice(energy_hidden);
        energy_dims.push(1);

        let mut experts = Vec::with_capacity(n_experts);
        let mut energy_nets = Vec::with_capacity(n_experts);
        for _ in 0..n_experts {
            experts.push(Expert {
                mean_net: DenseNet::new(&expert_dims, rng)?,
                chol: CholFactor::isotropic(param_dim, init_std)?,
            });
            energy_nets.push(DenseNet::new(&energy_dims, rng)?);
        }
        Ok(Self { experts, energy_nets, log_z: None })
    }

    pub fn n_experts(&self) -> usize {
        self.experts.len()
    }

    pub fn context_dim(&self) -> usize {
        self.experts[0].mean_net.input_dim()
    }

    pub fn param_dim(&self) -> usize {
        self.experts[0].mean_net.output_dim()
    }

    pub fn expert(&self, o: usize) -> Result<&Expert> {
        self.experts.get(o).ok_or_else(|| {
            Error::InvalidConfig(format!("expert index {o} out of range (K = {})", self.experts.len()))
        })
    }

    pub fn expert_mut(&mut self, o: usize) -> &mut Expert {
        &mut self.experts[o]
    }

    pub fn experts_mut(&mut self) -> &mut [Expert] {
        &mut self.experts
    }

    /// Disjoint mutable views of the experts and their energy nets, so
    /// per-expert updates can run in parallel.
    pub fn components_mut(&mut self) -> (&mut [Expert], &mut [DenseNet]) {
        (&mut self.experts, &mut self.energy_nets)
    }

    pub fn energy_net(&self, o: usize) -> &DenseNet {
        &self.energy_nets[o]
    }

    pub fn energy_net_mut(&mut self, o: usize) -> &mut DenseNet {
        &mut self.energy_nets[o]
    }

    /// Clamped scalar energy of expert `o` at context `c`.
    pub fn energy(&self, o: usize, context: ArrayView1<f64>) -> Result<f64> {
        let e = self.energy_nets[o].forward(context)?[0];
        if !e.is_finite() {
            return Err(Error::NonFinite(format!("energy of expert {o}")));
        }
        Ok(e.clamp(-ENERGY_CLAMP, ENERGY_CLAMP))
    }

    pub fn log_z(&self) -> Result<&[f64]> {
        self.log_z.as_deref().ok_or(Error::StaleNormalizers)
    }

    pub fn set_log_z(&mut self, log_z: Vec<f64>) {
        debug_assert_eq!(log_z.len(), self.experts.len());
        self.log_z = Some(log_z);
    }

    /// Curriculum distribution of expert `o` over a context batch: the
    /// softmax of its clamped energies, computed with max subtraction.
    pub fn curriculum(&self, o: usize, batch: &[Array1<f64>]) -> Result<CurriculumDist> {
        if batch.is_empty() {
            return Err(Error::InvalidConfig("curriculum needs a non-empty context batch".into()));
        }
        let mut energies = Vec::with_capacity(batch.len());
        for c in batch {
            energies.push(self.energy(o, c.view())?);
        }
        Ok(curriculum_from_energies(&energies))
    }

    /// Spec operation: curriculum probabilities that also store the batch
    /// normalizer estimate of expert `o`.
    pub fn curriculum_probs(&mut self, o: usize, batch: &[Array1<f64>]) -> Result<Vec<f64>> {
        let dist = self.curriculum(o, batch)?;
        let k = self.experts.len();
        let slot = self.log_z.get_or_insert_with(|| vec![f64::NAN; k]);
        slot[o] = dist.log_z;
        Ok(dist.probs)
    }

    /// Recomputes the normalizer estimates of every expert on a fresh batch.
    pub fn refresh_normalizers(&mut self, batch: &[Array1<f64>]) -> Result<Vec<CurriculumDist>> {
        let mut dists = Vec::with_capacity(self.experts.len());
        let mut log_z = Vec::with_capacity(self.experts.len());
        for o in 0..self.experts.len() {
            let d = self.curriculum(o, batch)?;
            log_z.push(d.log_z);
            dists.push(d);
        }
        self.log_z = Some(log_z);
        Ok(dists)
    }

    /// Draws `m` contexts (with replacement) from expert `o`'s curriculum.
    pub fn sample_training_contexts<R: Rng + ?Sized>(
        probs: &[f64],
        m: usize,
        rng: &mut R,
    ) -> Vec<usize> {
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &p in probs {
            acc += p;
            cdf.push(acc);
        }
        let total = *cdf.last().expect("non-empty probs");
        (0..m)
            .map(|_| {
                let u = rng.random::<f64>() * total;
                match cdf.binary_search_by(|x| x.partial_cmp(&u).expect("finite cdf")) {
                    Ok(i) => i,
                    Err(i) => i.min(probs.len() - 1),
                }
            })
            .collect()
    }

    /// Log-gating `ln pi(o|c)` for every expert. The uniform prior cancels,
    /// leaving a softmax of `energy_o(c) - log_z[o]`.
    pub fn gating_log(&self, context: ArrayView1<f64>) -> Result<Vec<f64>> {
        let log_z = self.log_z()?;
        let mut scores = Vec::with_capacity(self.experts.len());
        for o in 0..self.experts.len() {
            scores.push(self.energy(o, context)? - log_z[o]);
        }
        Ok(log_softmax(&scores))
    }

    /// Gating probabilities `pi(o|c)`; requires populated normalizers.
    pub fn gating(&self, context: ArrayView1<f64>) -> Result<Vec<f64>> {
        Ok(self.gating_log(context)?.iter().map(|l| l.exp()).collect())
    }

    /// Mixture log-density `ln pi(theta|c) = logsumexp_o [ln pi(theta|c,o) + ln pi(o|c)]`.
    pub fn mixture_log_prob(&self, context: ArrayView1<f64>, theta: ArrayView1<f64>) -> Result<f64> {
        let gating_log = self.gating_log(context)?;
        let mut scores = Vec::with_capacity(self.experts.len());
        for (o, g) in gating_log.iter().enumerate() {
            scores.push(self.experts[o].log_prob(context, theta)? + g);
        }
        Ok(logsumexp(&scores))
    }

    /// Inference step: pick an expert from the gating (argmax when
    /// deterministic, ties broken by lowest index), then a parameter vector
    /// from that expert (its mean when deterministic).
    pub fn act<R: Rng + ?Sized>(
        &self,
        context: ArrayView1<f64>,
        rng: &mut R,
        deterministic: bool,
    ) -> Result<(usize, Array1<f64>)> {
        let gating = self.gating(context)?;
        let o = if deterministic {
            argmax_lowest(&gating)
        } else {
            sample_categorical(&gating, rng)
        };
        let theta = if deterministic {
            self.experts[o].mean(context)?
        } else {
            self.experts[o].sample(context, rng)?
        };
        Ok((o, theta))
    }

    pub fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot(self.clone())
    }

    // ---- serialization ----

    pub fn save_into(&self, store: &mut TensorStore) {
        store.insert_meta("policy.n_experts", self.experts.len().to_string());
        for (o, ex) in self.experts.iter().enumerate() {
            ex.mean_net.save_into(store, &format!("expert{o}.mean"));
            ex.chol.save_into(store, &format!("expert{o}.chol"));
        }
        for (o, net) in self.energy_nets.iter().enumerate() {
            net.save_into(store, &format!("energy{o}"));
        }
        if let Some(log_z) = &self.log_z {
            store.insert_vec("policy.log_z", log_z);
        }
    }

    pub fn load_from(store: &TensorStore) -> Result<Self> {
        let k: usize = store
            .meta("policy.n_experts")?
            .parse()
            .map_err(|_| Error::Parse("bad expert count".into()))?;
        let mut experts = Vec::with_capacity(k);
        let mut energy_nets = Vec::with_capacity(k);
        for o in 0..k {
            experts.push(Expert {
                mean_net: DenseNet::load_from(store, &format!("expert{o}.mean"))?,
                chol: CholFactor::load_from(store, &format!("expert{o}.chol"))?,
            });
            energy_nets.push(DenseNet::load_from(store, &format!("energy{o}"))?);
        }
        let log_z = match store.get_vec("policy.log_z") {
            Ok(v) => {
                if v.len() != k {
                    return Err(Error::Checkpoint("log_z length does not match expert count".into()));
                }
                Some(v)
            }
            Err(_) => None,
        };
        Ok(Self { experts, energy_nets, log_z })
    }
}

/// A frozen deep copy of the policy taken at iteration start. Hosts the
/// previous-iteration quantities: responsibilities and variational gating.
#[derive(Debug, Clone)]
pub struct PolicySnapshot(MixturePolicy);

impl PolicySnapshot {
    pub fn policy(&self) -> &MixturePolicy {
        &self.0
    }

    pub fn n_experts(&self) -> usize {
        self.0.n_experts()
    }

    pub fn expert(&self, o: usize) -> Result<&Expert> {
        self.0.expert(o)
    }

    /// Gating under the snapshot's parameters and normalizer estimates.
    pub fn gating_variational(&self, context: ArrayView1<f64>) -> Result<Vec<f64>> {
        self.0.gating(context)
    }

    pub fn gating_variational_log(&self, context: ArrayView1<f64>) -> Result<Vec<f64>> {
        self.0.gating_log(context)
    }

    /// Posterior over experts for an executed `(c, theta)` pair:
    /// `softmax_o(ln pi_old(theta|c,o) + ln pi_old(o|c))`.
    pub fn responsibilities(&self, context: ArrayView1<f64>, theta: ArrayView1<f64>) -> Result<Vec<f64>> {
        let gating_log = self.0.gating_log(context)?;
        let mut scores = Vec::with_capacity(self.0.n_experts());
        for (o, g) in gating_log.iter().enumerate() {
            scores.push(self.0.experts[o].log_prob(context, theta)? + g);
        }
        Ok(softmax(&scores))
    }

    pub fn curriculum(&self, o: usize, batch: &[Array1<f64>]) -> Result<CurriculumDist> {
        self.0.curriculum(o, batch)
    }
}

pub(crate) fn curriculum_from_energies(energies: &[f64]) -> CurriculumDist {
    let max = energies.iter().fold(f64::NEG_INFINITY, |m, &e| m.max(e));
    let mut probs: Vec<f64> = energies.iter().map(|&e| (e - max).exp()).collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    let log_z = max + sum.ln() - (energies.len() as f64).ln();
    CurriculumDist { probs, log_z }
}

pub(crate) fn logsumexp(scores: &[f64]) -> f64 {
    let max = scores.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s));
    if max.is_infinite() {
        return max;
    }
    max + scores.iter().map(|&s| (s - max).exp()).sum::<f64>().ln()
}

pub(crate) fn log_softmax(scores: &[f64]) -> Vec<f64> {
    let lse = logsumexp(scores);
    scores.iter().map(|&s| s - lse).collect()
}

pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    log_softmax(scores).iter().map(|l| l.exp()).collect()
}

pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u = rng.random::<f64>();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
