//! Run configuration. Defaults follow the rendezvous hyperparameter tables
//! of the MADDPG backbone; every field can be overridden from a TOML file or
//! with dotted `section.key=value` assignments.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::RendezvousConfig;
use crate::error::{Error, Result};
use crate::nn::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Maddpg,
    Mir3,
    M3ddpg,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Maddpg => "maddpg",
            Algorithm::Mir3 => "mir3",
            Algorithm::M3ddpg => "m3ddpg",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maddpg" => Ok(Algorithm::Maddpg),
            "mir3" => Ok(Algorithm::Mir3),
            "m3ddpg" => Ok(Algorithm::M3ddpg),
            other => Err(Error::Config {
                field: "algorithm".into(),
                msg: format!("unknown algorithm `{other}` (maddpg | mir3 | m3ddpg)"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    pub n_agents: usize,
    pub v_max: f64,
    pub max_episode_len: usize,
    pub history_window: usize,
}

impl Default for EnvSection {
    fn default() -> Self {
        EnvSection {
            n_agents: 4,
            v_max: 0.05,
            max_episode_len: 200,
            history_window: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub total_timesteps: u64,
    pub lr: f64,
    pub actor_lr: Option<f64>,
    pub critic_lr: Option<f64>,
    pub gamma: f64,
    pub tau: f64,
    /// Episodes per minibatch.
    pub batch_size: usize,
    /// Replay capacity in episodes.
    pub buffer_size: usize,
    pub warmup_steps: u64,
    pub exploration_noise: f64,
    pub max_grad_norm: f64,
    pub train_epochs: usize,
    pub num_batches: usize,
    pub hidden_dim: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Epochs between periodic checkpoints; 0 writes only the final one.
    pub checkpoint_interval: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            total_timesteps: 10_000_000,
            lr: 1e-3,
            actor_lr: None,
            critic_lr: None,
            gamma: 0.99,
            tau: 0.01,
            batch_size: 8,
            buffer_size: 5000,
            warmup_steps: 0,
            exploration_noise: 0.1,
            max_grad_norm: 0.5,
            train_epochs: 1,
            num_batches: 1,
            hidden_dim: 256,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            checkpoint_interval: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Mir3Section {
    pub lambda: f64,
    pub mi_lr: Option<f64>,
    pub mi_train_epochs: usize,
    pub mi_hidden_dim: Option<usize>,
    pub mi_buffer_size: Option<usize>,
}

impl Default for Mir3Section {
    fn default() -> Self {
        Mir3Section {
            lambda: 5e-5,
            mi_lr: None,
            mi_train_epochs: 1,
            mi_hidden_dim: None,
            mi_buffer_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct M3ddpgSection {
    pub epsilon: f64,
}

impl Default for M3ddpgSection {
    fn default() -> Self {
        M3ddpgSection { epsilon: 0.001 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSection {
    pub budget_steps: u64,
    /// `auto-single`, `auto-multi`, or a comma separated list of bitstrings.
    pub partitions: String,
    pub k_adversaries: usize,
}

impl Default for AttackSection {
    fn default() -> Self {
        AttackSection {
            budget_steps: 50_000,
            partitions: "auto-single".into(),
            k_adversaries: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub episodes: usize,
    pub ci_level: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            episodes: 32,
            ci_level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub deterministic: bool,
    pub env: EnvSection,
    pub train: TrainSection,
    pub mir3: Mir3Section,
    pub m3ddpg: M3ddpgSection,
    pub attack: AttackSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            algorithm: Algorithm::Mir3,
            seed: 0,
            deterministic: true,
            env: EnvSection::default(),
            train: TrainSection::default(),
            mir3: Mir3Section::default(),
            m3ddpg: M3ddpgSection::default(),
            attack: AttackSection::default(),
            eval: EvalSection::default(),
        }
    }
}

fn cfg_err(field: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        msg: msg.into(),
    }
}

/// Maps a parse error to the dotted path of the offending key, located
/// through the error span.
fn toml_error(e: toml::de::Error, text: &str) -> Error {
    let msg = e.message().to_string();
    let field = e
        .span()
        .and_then(|span| {
            let upto = &text[..span.start.min(text.len())];
            let line_start = upto.rfind('\n').map_or(0, |i| i + 1);
            let line = text[line_start..].lines().next().unwrap_or("");
            let key = line.split_once('=').map(|(k, _)| k.trim().trim_matches('"'))?;
            let section = upto[..line_start]
                .lines()
                .rev()
                .find_map(|l| l.trim().strip_prefix('[')?.strip_suffix(']'));
            Some(match section {
                Some(sec) => format!("{sec}.{key}"),
                None => key.to_string(),
            })
        })
        .unwrap_or_else(|| "<document>".to_string());
    Error::Config { field, msg }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| toml_error(e, text))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Applies `section.key=value` overrides. Values are parsed as TOML
    /// literals, falling back to bare strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(&self.to_toml_string()).expect("own output parses");
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| cfg_err(o, "override must look like key=value"))?;
            let key = key.trim();
            let value = parse_value(raw.trim());
            let mut parts: Vec<&str> = key.split('.').collect();
            let leaf = parts.pop().unwrap();
            let mut table = &mut doc;
            for p in parts {
                table = table
                    .entry(p.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| cfg_err(key, format!("`{p}` is not a section")))?;
            }
            table.insert(leaf.to_string(), value);
        }
        let text = toml::to_string(&doc).expect("table serializes");
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| {
            let err = toml_error(e, &text);
            match err {
                Error::Config { field, msg } if field == "<document>" => {
                    let keys: Vec<&str> = overrides.iter().map(|o| o.as_ref()).collect();
                    cfg_err(&keys.join(","), msg)
                }
                other => other,
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let e = &self.env;
        let t = &self.train;
        if e.n_agents < 1 {
            return Err(cfg_err("env.n_agents", "must be >= 1"));
        }
        if !(e.v_max > 0.0 && e.v_max.is_finite()) {
            return Err(cfg_err("env.v_max", "must be positive"));
        }
        if e.max_episode_len < 1 {
            return Err(cfg_err("env.max_episode_len", "must be >= 1"));
        }
        if e.history_window < 1 {
            return Err(cfg_err("env.history_window", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&t.gamma) {
            return Err(cfg_err("train.gamma", "must lie in [0, 1)"));
        }
        if !(t.tau > 0.0 && t.tau <= 1.0) {
            return Err(cfg_err("train.tau", "must lie in (0, 1]"));
        }
        for (name, v) in [
            ("train.lr", Some(t.lr)),
            ("train.actor_lr", t.actor_lr),
            ("train.critic_lr", t.critic_lr),
            ("mir3.mi_lr", self.mir3.mi_lr),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(cfg_err(name, "learning rate must be positive"));
                }
            }
        }
        for (name, v) in [
            ("train.batch_size", t.batch_size),
            ("train.buffer_size", t.buffer_size),
            ("train.hidden_dim", t.hidden_dim),
            ("eval.episodes", self.eval.episodes),
        ] {
            if v == 0 {
                return Err(cfg_err(name, "must be >= 1"));
            }
        }
        if !(t.max_grad_norm > 0.0) {
            return Err(cfg_err("train.max_grad_norm", "must be positive"));
        }
        if !(t.exploration_noise >= 0.0) {
            return Err(cfg_err("train.exploration_noise", "must be >= 0"));
        }
        if !(self.mir3.lambda >= 0.0 && self.mir3.lambda.is_finite()) {
            return Err(cfg_err("mir3.lambda", "must be a finite value >= 0"));
        }
        if self.mir3.mi_hidden_dim == Some(0) || self.mir3.mi_buffer_size == Some(0) {
            return Err(cfg_err("mir3", "mi sizes must be >= 1"));
        }
        if !(self.m3ddpg.epsilon >= 0.0) {
            return Err(cfg_err("m3ddpg.epsilon", "must be >= 0"));
        }
        if !(self.eval.ci_level > 0.0 && self.eval.ci_level < 1.0) {
            return Err(cfg_err("eval.ci_level", "must lie in (0, 1)"));
        }
        if self.seed > i64::MAX as u64 {
            return Err(cfg_err("seed", "must fit in a signed 64-bit integer"));
        }
        let k = self.attack.k_adversaries;
        if k < 1 || k > e.n_agents {
            return Err(cfg_err("attack.k_adversaries", "must lie in [1, n_agents]"));
        }
        Ok(())
    }

    pub fn env_config(&self) -> RendezvousConfig {
        RendezvousConfig {
            n_agents: self.env.n_agents,
            v_max: self.env.v_max,
            max_episode_len: self.env.max_episode_len,
        }
    }

    pub fn obs_dim(&self) -> usize {
        2 * self.env.n_agents
    }

    pub fn history_dim(&self) -> usize {
        self.env.history_window * self.obs_dim()
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.train.adam_beta1,
            beta2: self.train.adam_beta2,
            eps: self.train.adam_eps,
            max_grad_norm: Some(self.train.max_grad_norm),
        }
    }

    pub fn actor_adam(&self) -> AdamConfig {
        self.adam(self.train.actor_lr.unwrap_or(self.train.lr))
    }

    pub fn critic_adam(&self) -> AdamConfig {
        self.adam(self.train.critic_lr.unwrap_or(self.train.lr))
    }

    pub fn mi_adam(&self) -> AdamConfig {
        self.adam(self.mir3.mi_lr.unwrap_or(self.train.lr))
    }

    pub fn mi_hidden_dim(&self) -> usize {
        self.mir3.mi_hidden_dim.unwrap_or(self.train.hidden_dim)
    }

    pub fn mi_buffer_size(&self) -> usize {
        self.mir3.mi_buffer_size.unwrap_or(self.train.buffer_size)
    }

    /// Minimum number of stored episodes before updates start.
    pub fn warmup_episodes(&self) -> usize {
        let len = self.env.max_episode_len as u64;
        (self.train.warmup_steps.div_ceil(len) as usize).max(1)
    }

    /// Shaping coefficient in effect; zero unless the algorithm is MIR3.
    pub fn effective_lambda(&self) -> f64 {
        match self.algorithm {
            Algorithm::Mir3 => self.mir3.lambda,
            _ => 0.0,
        }
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
