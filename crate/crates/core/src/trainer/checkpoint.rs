//! Checkpoint assembly and integrity checking.
//!
//! A checkpoint is one tensor-store file holding the full config text (with
//! its hash), the iteration counter, every network and Adam state, the
//! normalizer estimates, and the positions of all random streams. Loading
//! re-hashes the embedded config and refuses on mismatch.

use std::path::Path;

use super::config::TrainConfig;
use super::rng::RngStreams;
use crate::error::{Error, Result};
use crate::nn::{AdamState, DenseNet, TensorStore};
use crate::policy::MixturePolicy;

pub const CHECKPOINT_FORMAT: &str = "diskill-checkpoint v1";

/// Per-expert mutable training state that is not part of the policy itself.
#[derive(Debug, Clone)]
pub struct ExpertSlot {
    pub critic_return: DenseNet,
    pub critic_context: DenseNet,
    pub opt_expert: AdamState,
    pub opt_critic_return: AdamState,
    pub opt_critic_context: AdamState,
    pub opt_energy: AdamState,
}

pub struct Checkpoint {
    pub config: TrainConfig,
    pub iteration: usize,
    pub policy: MixturePolicy,
    pub slots: Vec<ExpertSlot>,
    pub rng: RngStreams,
}

impl Checkpoint {
    pub fn to_store(&self) -> TensorStore {
        let mut store = TensorStore::new();
        store.insert_meta("format", CHECKPOINT_FORMAT);
        let config_text = self.config.to_text();
        store.insert_meta("config", config_text);
        store.insert_meta("config_hash", self.config.hash());
        store.insert_meta("iteration", self.iteration.to_string());
        self.policy.save_into(&mut store);
        for (o, slot) in self.slots.iter().enumerate() {
            slot.critic_return.save_into(&mut store, &format!("critic_return{o}"));
            slot.critic_context.save_into(&mut store, &format!("critic_context{o}"));
            slot.opt_expert.save_into(&mut store, &format!("opt.expert{o}"));
            slot.opt_critic_return.save_into(&mut store, &format!("opt.critic_return{o}"));
            slot.opt_critic_context.save_into(&mut store, &format!("opt.critic_context{o}"));
            slot.opt_energy.save_into(&mut store, &format!("opt.energy{o}"));
        }
        self.rng.save_into(&mut store);
        store
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_store().write_to_file(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let store = TensorStore::read_from_file(path)?;
        Self::from_store(&store)
    }

    pub fn from_store(store: &TensorStore) -> Result<Self> {
        if store.meta("format")? != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint("unrecognized checkpoint format".into()));
        }
        let config_text = store.meta("config")?;
        let config = TrainConfig::parse(config_text)?;
        let stored_hash = store.meta("config_hash")?;
        if config.hash() != stored_hash {
            return Err(Error::Checkpoint(format!(
                "config hash mismatch: embedded config hashes to {}, checkpoint claims {}",
                config.hash(),
                stored_hash
            )));
        }
        let iteration: usize = store
            .meta("iteration")?
            .parse()
            .map_err(|_| Error::Parse("bad iteration counter".into()))?;
        let policy = MixturePolicy::load_from(store)?;
        if policy.n_experts() != config.model.n_experts {
            return Err(Error::Checkpoint("expert count does not match the embedded config".into()));
        }
        let env = config.env.build()?;
        if policy.context_dim() != env.context_dim() || policy.param_dim() != env.param_dim() {
            return Err(Error::Checkpoint("policy shapes are incompatible with the configured environment".into()));
        }
        let mut slots = Vec::with_capacity(policy.n_experts());
        for o in 0..policy.n_experts() {
            slots.push(ExpertSlot {
                critic_return: DenseNet::load_from(store, &format!("critic_return{o}"))?,
                critic_context: DenseNet::load_from(store, &format!("critic_context{o}"))?,
                opt_expert: AdamState::load_from(store, &format!("opt.expert{o}"))?,
                opt_critic_return: AdamState::load_from(store, &format!("opt.critic_return{o}"))?,
                opt_critic_context: AdamState::load_from(store, &format!("opt.critic_context{o}"))?,
                opt_energy: AdamState::load_from(store, &format!("opt.energy{o}"))?,
            });
        }
        let rng = RngStreams::load_from(store)?;
        Ok(Self { config, iteration, policy, slots, rng })
    }
}
