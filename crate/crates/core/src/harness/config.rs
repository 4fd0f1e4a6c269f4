//! Experiment configuration: flat `section.key = value` files over typed defaults.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::clustering::ClusterConfig;
use crate::envs::{BilliardConfig, CoinConfig, EnvConfig, LineConfig};
use crate::error::{config_err, Error, Result};
use crate::intrinsic::{IntrinsicConfig, Method};
use crate::ppo::PpoConfig;

/// Who picks actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agent {
    Ppo,
    /// Uniform random actions, never trained.
    Random,
}

/// How phase-1 sound data is gathered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Collection {
    /// PPO driven by the clustering novelty bonus.
    Active,
    /// Uniform random actions.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase1Config {
    pub collection: Collection,
    pub cluster: ClusterConfig,
    /// Train the predictor on the labelled phase-1 corpus before phase 2.
    pub warm_start: bool,
}

impl Default for Phase1Config {
    fn default() -> Self {
        Self {
            collection: Collection::Active,
            cluster: ClusterConfig::default(),
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// One of `billiard`, `coin_dense`, `coin_sparse`, `line`.
    pub env: String,
    pub method: Method,
    pub agent: Agent,
    pub seeds: Vec<u64>,
    /// Environment interactions per seed, phase 1 included.
    pub total_steps: u64,
    pub n_envs: usize,
    pub out_dir: PathBuf,
    /// Iterations between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub phase1: Phase1Config,
    pub ppo: PpoConfig,
    pub intrinsic: IntrinsicConfig,
    pub billiard: BilliardConfig,
    pub coin: CoinConfig,
    pub line: LineConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: "billiard".into(),
            method: Method::Aep,
            agent: Agent::Ppo,
            seeds: vec![0],
            total_steps: 200_000,
            n_envs: 8,
            out_dir: PathBuf::from("runs"),
            checkpoint_every: 50,
            phase1: Phase1Config::default(),
            ppo: PpoConfig::default(),
            intrinsic: IntrinsicConfig::default(),
            billiard: BilliardConfig::default(),
            coin: CoinConfig::default(),
            line: LineConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn env_config(&self) -> Result<EnvConfig> {
        Ok(match EnvConfig::from_id(&self.env)? {
            EnvConfig::Billiard(_) => EnvConfig::Billiard(self.billiard.clone()),
            EnvConfig::Coin(c) => EnvConfig::Coin(CoinConfig {
                sparse: c.sparse,
                ..self.coin.clone()
            }),
            EnvConfig::Line(_) => EnvConfig::Line(self.line.clone()),
        })
    }

    /// PPO settings actually used: with no intrinsic module the intrinsic head is idle.
    pub fn effective_ppo(&self) -> PpoConfig {
        let mut p = self.ppo.clone();
        if self.method == Method::None {
            p.c_int = 0.0;
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        self.env_config()?.validate()?;
        if self.seeds.is_empty() {
            return Err(config_err("at least one seed is required"));
        }
        if self.n_envs == 0 || self.total_steps == 0 {
            return Err(config_err("n_envs and total_steps must be positive"));
        }
        self.phase1.cluster.validate()?;
        self.intrinsic.validate()?;
        let ppo = self.effective_ppo();
        if self.agent == Agent::Ppo {
            if ppo.c_ext == 0.0 && ppo.c_int == 0.0 {
                return Err(config_err("method none needs ppo.c_ext > 0"));
            }
            ppo.validate()?;
        }
        if self.method == Method::Aep && self.phase1.cluster.budget >= self.total_steps {
            return Err(config_err("phase-1 budget must be below total_steps"));
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults; unknown keys are rejected.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut tree = serde_json::to_value(Self::default())?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected `key = value`", lineno + 1)))?;
            set_path(&mut tree, key.trim(), parse_value(value.trim()))
                .map_err(|e| config_err(format!("line {}: {e}", lineno + 1)))?;
        }
        let config: Self = serde_json::from_value(tree)
            .map_err(|e| config_err(format!("invalid configuration: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv(&std::fs::read_to_string(path)?)
    }

    /// Sets one dotted key from a string value, with the same checks as a file line.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut tree = serde_json::to_value(&*self)?;
        set_path(&mut tree, key, parse_value(value)).map_err(config_err)?;
        *self = serde_json::from_value(tree).map_err(|e| config_err(format!("invalid value for {key}: {e}")))?;
        Ok(())
    }

    /// Every leaf as a sorted `key = value` line; reading it back gives the same config.
    pub fn to_kv(&self) -> Result<String> {
        let tree = serde_json::to_value(self)?;
        let mut lines = Vec::new();
        flatten("", &tree, &mut lines);
        Ok(lines.join("\n") + "\n")
    }
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Agent::Ppo => "ppo",
            Agent::Random => "random",
        })
    }
}

impl FromStr for Agent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(Value::String(s.into())).map_err(|_| config_err(format!("unknown agent `{s}`")))
    }
}

/// JSON literal when it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn set_path(tree: &mut Value, key: &str, value: Value) -> std::result::Result<(), String> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("malformed key `{key}`"));
    }
    let mut node = tree;
    for (i, part) in parts.iter().enumerate() {
        let map: &mut Map<String, Value> = node
            .as_object_mut()
            .ok_or_else(|| format!("`{}` is not a section", parts[..i].join(".")))?;
        let child = map.get_mut(*part).ok_or_else(|| format!("unknown key `{key}`"))?;
        if i + 1 == parts.len() {
            if child.is_object() {
                return Err(format!("`{key}` is a section, not a value"));
            }
            *child = value;
            return Ok(());
        }
        node = child;
    }
    unreachable!("keys have at least one part")
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<String>) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            for k in keys {
                let path = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&path, &map[k], out);
            }
        }
        Value::String(s) if serde_json::from_str::<Value>(s).is_err() && !s.contains('#') => {
            out.push(format!("{prefix} = {s}"));
        }
        other => out.push(format!("{prefix} = {other}")),
    }
}
