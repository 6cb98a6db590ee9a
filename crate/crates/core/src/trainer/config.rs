//! Training configuration and its sectioned key=value file format.
//!
//! ```text
//! [env]
//! kind = reacher
//! n_links = 2
//! ...
//! [model]
//! ...
//! [update]
//! ...
//! [run]
//! ...
//! ```
//!
//! Every key has a default; unknown sections or keys are rejected. The
//! canonical serialization round-trips losslessly through the parser.

use std::path::PathBuf;

use crate::envs::{Environment, GateConfig, GateEnv, ReacherConfig, ReacherEnv};
use crate::error::{Error, Result};
use crate::updates::UpdateConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Reacher,
    Gate,
}

impl EnvKind {
    fn as_str(&self) -> &'static str {
        match self {
            EnvKind::Reacher => "reacher",
            EnvKind::Gate => "gate",
        }
    }
}

/// Environment selection plus physical constants.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub n_links: usize,
    pub link_length: f64,
    pub horizon: usize,
    pub dt: f64,
    pub kp: f64,
    pub kd: f64,
    pub max_torque: f64,
    pub success_threshold: f64,
    pub n_basis: usize,
    pub bandwidth: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        let r = ReacherConfig::five_link();
        Self {
            kind: EnvKind::Reacher,
            n_links: r.n_links,
            link_length: r.link_length,
            horizon: r.horizon,
            dt: r.dt,
            kp: r.kp,
            kd: r.kd,
            max_torque: r.max_torque,
            success_threshold: r.success_threshold,
            n_basis: r.n_basis,
            bandwidth: r.bandwidth,
        }
    }
}

impl EnvConfig {
    pub fn build(&self) -> Result<Box<dyn Environment>> {
        match self.kind {
            EnvKind::Reacher => {
                let cfg = ReacherConfig {
                    n_links: self.n_links,
                    link_length: self.link_length,
                    kp: self.kp,
                    kd: self.kd,
                    max_torque: self.max_torque,
                    horizon: self.horizon,
                    dt: self.dt,
                    torque_weight: 1.0,
                    goal_weight: 200.0,
                    velocity_weight: 10.0,
                    success_threshold: self.success_threshold,
                    n_basis: self.n_basis,
                    bandwidth: self.bandwidth,
                };
                Ok(Box::new(ReacherEnv::new(cfg)?))
            }
            EnvKind::Gate => {
                let cfg = GateConfig {
                    horizon: self.horizon,
                    dt: self.dt,
                    max_accel: self.max_torque,
                    success_threshold: self.success_threshold,
                    n_basis: self.n_basis,
                    bandwidth: self.bandwidth,
                    ..GateConfig::default()
                };
                Ok(Box::new(GateEnv::new(cfg)?))
            }
        }
    }
}

/// Network widths and the initial exploration scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub n_experts: usize,
    pub expert_hidden: Vec<usize>,
    pub energy_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_experts: 10,
            expert_hidden: vec![32, 32],
            energy_hidden: vec![16, 16],
            critic_hidden: vec![32, 32],
            init_std: 1.0,
        }
    }
}

/// Loop counts, seed, and artifact paths.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub iterations: usize,
    pub env_batch_size: usize,
    pub seed: u64,
    pub log_path: PathBuf,
    pub checkpoint_path: PathBuf,
    /// Checkpoint cadence in iterations; `0` writes only the final one.
    pub checkpoint_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            env_batch_size: 5000,
            seed: 0,
            log_path: PathBuf::from("runs/log.csv"),
            checkpoint_path: PathBuf::from("runs/checkpoint.txt"),
            checkpoint_every: 0,
        }
    }
}

/// The complete training configuration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainConfig {
    pub env: EnvConfig,
    pub model: ModelConfig,
    pub update: UpdateConfig,
    pub run: RunConfig,
}

impl TrainConfig {
    /// Desk-scale two-link reacher: K = 4 experts, 16 samples each, a
    /// 512-context environment batch.
    pub fn desk_reacher() -> Self {
        let r = ReacherConfig::desk_two_link();
        Self {
            env: EnvConfig {
                kind: EnvKind::Reacher,
                n_links: r.n_links,
                link_length: r.link_length,
                horizon: r.horizon,
                dt: r.dt,
                kp: r.kp,
                kd: r.kd,
                max_torque: r.max_torque,
                success_threshold: r.success_threshold,
                n_basis: r.n_basis,
                bandwidth: r.bandwidth,
            },
            model: ModelConfig { n_experts: 4, ..ModelConfig::default() },
            update: UpdateConfig { samples_per_expert: 16, ..UpdateConfig::default() },
            run: RunConfig { iterations: 300, env_batch_size: 512, ..RunConfig::default() },
        }
    }

    /// Desk-scale gate task with the same loop sizes as the reacher preset.
    pub fn desk_gate() -> Self {
        let g = GateConfig::default();
        let mut cfg = Self::desk_reacher();
        cfg.env = EnvConfig {
            kind: EnvKind::Gate,
            horizon: g.horizon,
            dt: g.dt,
            max_torque: g.max_accel,
            success_threshold: g.success_threshold,
            n_basis: g.n_basis,
            bandwidth: g.bandwidth,
            ..EnvConfig::default()
        };
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.update.validate()?;
        if self.model.n_experts == 0 {
            return Err(Error::InvalidConfig("n_experts must be positive".into()));
        }
        if self.run.iterations == 0 || self.run.env_batch_size == 0 {
            return Err(Error::InvalidConfig("iterations and env_batch_size must be positive".into()));
        }
        if self.run.env_batch_size < self.model.n_experts * self.update.samples_per_expert {
            return Err(Error::InvalidConfig(format!(
                "env_batch_size {} is smaller than n_experts * samples_per_expert = {}",
                self.run.env_batch_size,
                self.model.n_experts * self.update.samples_per_expert
            )));
        }
        if !(self.model.init_std > 0.0) {
            return Err(Error::InvalidConfig("init_std must be positive".into()));
        }
        self.env.build().map(|_| ())
    }

    /// Canonical text form; `parse` reads it back exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let e = &self.env;
        s.push_str("[env]\n");
        s.push_str(&format!("kind = {}\n", e.kind.as_str()));
        s.push_str(&format!("n_links = {}\n", e.n_links));
        s.push_str(&format!("link_length = {}\n", e.link_length));
        s.push_str(&format!("horizon = {}\n", e.horizon));
        s.push_str(&format!("dt = {}\n", e.dt));
        s.push_str(&format!("kp = {}\n", e.kp));
        s.push_str(&format!("kd = {}\n", e.kd));
        s.push_str(&format!("max_torque = {}\n", e.max_torque));
        s.push_str(&format!("success_threshold = {}\n", e.success_threshold));
        s.push_str(&format!("n_basis = {}\n", e.n_basis));
        s.push_str(&format!("bandwidth = {}\n", e.bandwidth));
        let m = &self.model;
        s.push_str("\n[model]\n");
        s.push_str(&format!("n_experts = {}\n", m.n_experts));
        s.push_str(&format!("expert_hidden = {}\n", join_dims(&m.expert_hidden)));
        s.push_str(&format!("energy_hidden = {}\n", join_dims(&m.energy_hidden)));
        s.push_str(&format!("critic_hidden = {}\n", join_dims(&m.critic_hidden)));
        s.push_str(&format!("init_std = {}\n", m.init_std));
        let u = &self.update;
        s.push_str("\n[update]\n");
        s.push_str(&format!("alpha = {}\n", u.alpha));
        s.push_str(&format!("beta = {}\n", u.beta));
        s.push_str(&format!("mean_bound = {}\n", u.mean_bound));
        s.push_str(&format!("cov_bound = {}\n", u.cov_bound));
        s.push_str(&format!("ppo_clip = {}\n", u.ppo_clip));
        s.push_str(&format!("epochs = {}\n", u.epochs));
        s.push_str(&format!("critic_epochs = {}\n", u.critic_epochs));
        s.push_str(&format!("energy_epochs = {}\n", u.energy_epochs));
        s.push_str(&format!("lr_policy = {}\n", u.lr_policy));
        s.push_str(&format!("lr_critic = {}\n", u.lr_critic));
        s.push_str(&format!("lr_energy = {}\n", u.lr_energy));
        s.push_str(&format!("samples_per_expert = {}\n", u.samples_per_expert));
        s.push_str(&format!("normalize_advantages = {}\n", u.normalize_advantages));
        s.push_str(&format!("curriculum_variational = {}\n", u.curriculum_variational));
        let r = &self.run;
        s.push_str("\n[run]\n");
        s.push_str(&format!("iterations = {}\n", r.iterations));
        s.push_str(&format!("env_batch_size = {}\n", r.env_batch_size));
        s.push_str(&format!("seed = {}\n", r.seed));
        s.push_str(&format!("log_path = {}\n", r.log_path.display()));
        s.push_str(&format!("checkpoint_path = {}\n", r.checkpoint_path.display()));
        s.push_str(&format!("checkpoint_every = {}\n", r.checkpoint_every));
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Parse(format!("line {}: unterminated section", lineno + 1)))?;
                if !matches!(name, "env" | "model" | "update" | "run") {
                    return Err(Error::Parse(format!("line {}: unknown section [{name}]", lineno + 1)));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim();
            let value = value.trim();
            cfg.apply(&section, key, value)
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        match (section, key) {
            ("env", "kind") => {
                self.env.kind = match value {
                    "reacher" => EnvKind::Reacher,
                    "gate" => EnvKind::Gate,
                    other => return Err(Error::Parse(format!("unknown env kind '{other}'"))),
                }
            }
            ("env", "n_links") => self.env.n_links = parse_num(value)?,
            ("env", "link_length") => self.env.link_length = parse_num(value)?,
            ("env", "horizon") => self.env.horizon = parse_num(value)?,
            ("env", "dt") => self.env.dt = parse_num(value)?,
            ("env", "kp") => self.env.kp = parse_num(value)?,
            ("env", "kd") => self.env.kd = parse_num(value)?,
            ("env", "max_torque") => self.env.max_torque = parse_num(value)?,
            ("env", "success_threshold") => self.env.success_threshold = parse_num(value)?,
            ("env", "n_basis") => self.env.n_basis = parse_num(value)?,
            ("env", "bandwidth") => self.env.bandwidth = parse_num(value)?,
            ("model", "n_experts") => self.model.n_experts = parse_num(value)?,
            ("model", "expert_hidden") => self.model.expert_hidden = parse_dims(value)?,
            ("model", "energy_hidden") => self.model.energy_hidden = parse_dims(value)?,
            ("model", "critic_hidden") => self.model.critic_hidden = parse_dims(value)?,
            ("model", "init_std") => self.model.init_std = parse_num(value)?,
            ("update", "alpha") => self.update.alpha = parse_num(value)?,
            ("update", "beta") => self.update.beta = parse_num(value)?,
            ("update", "mean_bound") => self.update.mean_bound = parse_num(value)?,
            ("update", "cov_bound") => self.update.cov_bound = parse_num(value)?,
            ("update", "ppo_clip") => self.update.ppo_clip = parse_num(value)?,
            ("update", "epochs") => self.update.epochs = parse_num(value)?,
            ("update", "critic_epochs") => self.update.critic_epochs = parse_num(value)?,
            ("update", "energy_epochs") => self.update.energy_epochs = parse_num(value)?,
            ("update", "lr_policy") => self.update.lr_policy = parse_num(value)?,
            ("update", "lr_critic") => self.update.lr_critic = parse_num(value)?,
            ("update", "lr_energy") => self.update.lr_energy = parse_num(value)?,
            ("update", "samples_per_expert") => self.update.samples_per_expert = parse_num(value)?,
            ("update", "normalize_advantages") => self.update.normalize_advantages = parse_bool(value)?,
            ("update", "curriculum_variational") => {
                self.update.curriculum_variational = parse_bool(value)?
            }
            ("run", "iterations") => self.run.iterations = parse_num(value)?,
            ("run", "env_batch_size") => self.run.env_batch_size = parse_num(value)?,
            ("run", "seed") => self.run.seed = parse_num(value)?,
            ("run", "log_path") => self.run.log_path = PathBuf::from(value),
            ("run", "checkpoint_path") => self.run.checkpoint_path = PathBuf::from(value),
            ("run", "checkpoint_every") => self.run.checkpoint_every = parse_num(value)?,
            ("", _) => return Err(Error::Parse("key outside of any section".into())),
            (s, k) => return Err(Error::Parse(format!("unknown key '{k}' in section [{s}]"))),
        }
        Ok(())
    }

    /// FNV-1a over the canonical text; stored in checkpoints for integrity.
    pub fn hash(&self) -> String {
        format!("{:016x}", fnv1a(self.to_text().as_bytes()))
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn join_dims(dims: &[usize]) -> String {
    dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_dims(value: &str) -> Result<Vec<usize>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| Error::Parse(format!("bad layer width '{t}'"))))
        .collect()
}

fn parse_num<T: std::str::FromStr>(value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Parse(format!("bad numeric value '{value}'")))
}

fn parse_bool(value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Parse(format!("expected true/false, got '{value}'"))),
    }
}
