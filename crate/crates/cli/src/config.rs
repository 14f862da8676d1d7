//! Run configuration: one TOML file, dotted-key overrides, and the resolved
//! copy written next to every output.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use siforecast::drift_model::Activation;
use siforecast::dynamics::{JumpDiffusionConfig, NavierStokesConfig};
use siforecast::eval::KdeConfig;
use siforecast::{GmmSpec, SamplerConfig, Schedule, ScheduleKind, TrainConfig};

/// A configuration or validation failure; reported with exit code 2.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    GmmSynthetic,
    JumpDiffusion,
    NavierStokes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    #[serde(flatten)]
    pub kind: ScheduleKind,
    pub epsilon: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::QuadraticBeta,
            epsilon: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64, 64],
            activation: Activation::Silu,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset directory read by `train` (written by `gen-data`).
    pub dir: Option<PathBuf>,
    /// Pairs to generate for the GMM and jump-diffusion tasks.
    pub n_pairs: usize,
    /// Snapshots per Navier-Stokes trajectory.
    pub n_snapshots: usize,
    pub burn_in: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dir: None,
            n_pairs: 10_000,
            n_snapshots: 20,
            burn_in: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmTaskConfig {
    /// Target mixture; conditioning states are standard normal.
    pub target: GmmSpec,
}

impl Default for GmmTaskConfig {
    fn default() -> Self {
        Self {
            target: GmmSpec::five_mode(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainRunConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    /// Checkpoint to continue from.
    pub resume: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    pub checkpoint: Option<PathBuf>,
    /// Conditioning states given inline.
    pub x0: Vec<Vec<f64>>,
    /// Or an `n x d` array file of conditioning states.
    pub x0_file: Option<PathBuf>,
    /// Rollout length; 1 is a plain one-lag forecast.
    pub lags: usize,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            checkpoint: None,
            x0: Vec::new(),
            x0_file: None,
            lags: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub ensemble: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub kde: KdeConfig,
    pub bootstrap: usize,
    /// Coordinates beyond this count are not given their own KDE.
    pub max_coordinates: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ensemble: None,
            reference: None,
            kde: KdeConfig::default(),
            bootstrap: 50,
            max_coordinates: 8,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectraConfig {
    /// `n x (m * m)` array of vorticity fields.
    pub fields: Option<PathBuf>,
    /// Truncate each field to this grid first.
    pub downsample: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    /// Seeds every stage; the per-section seed keys are overwritten with it.
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub train: TrainRunConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub gmm: GmmTaskConfig,
    #[serde(default)]
    pub jump: JumpDiffusionConfig,
    #[serde(default)]
    pub navier_stokes: NavierStokesConfig,
    #[serde(default)]
    pub forecast: ForecastConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub spectra: SpectraConfig,
}

impl RunConfig {
    /// Parse `text` (may be empty), apply `key=value` overrides, and resolve.
    pub fn load(text: &str, overrides: &[(String, toml::Value)]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| invalid(format!("config: {e}")))?;
        for (key, value) in overrides {
            set_key(&mut table, key, value.clone())?;
        }
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| invalid(format!("config: {}", e.message())))?;
        cfg.train.train.seed = cfg.seed;
        cfg.sampler.seed = cfg.seed;
        cfg.jump.seed = cfg.seed;
        cfg.navier_stokes.seed = cfg.seed;
        Ok(cfg)
    }

    pub fn from_file(path: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| invalid(format!("cannot read config {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::load(&text, overrides)
    }

    pub fn schedule(&self) -> Result<Schedule> {
        Schedule::new(self.schedule.kind.clone(), self.schedule.epsilon).map_err(|e| invalid(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing the resolved config")
    }

    /// SHA-256 of the resolved config text.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(self.to_toml()?.as_bytes()))
    }

    /// Write `config.toml` and `version.txt` into `dir`.
    pub fn stamp(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join("config.toml"), self.to_toml()?)?;
        std::fs::write(dir.join("version.txt"), format!("{}\n", version_stamp()))?;
        Ok(())
    }
}

pub fn version_stamp() -> String {
    format!("siforecast {} ({})", env!("CARGO_PKG_VERSION"), env!("SIFORECAST_GIT_DESCRIBE"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Existing input path or a validation error naming `what`.
pub fn require_path<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    let p = p.as_deref().ok_or_else(|| invalid(format!("{what} is not set")))?;
    if !p.exists() {
        return Err(invalid(format!("{what} {} does not exist", p.display())));
    }
    Ok(p)
}

/// A TOML literal if it parses as one, else a bare string.
pub fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_key(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(invalid(format!("bad override key '{key}'")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| invalid(format!("override '{key}': '{p}' is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "task = \"jump_diffusion\"\nseed = 3\nout_dir = \"out\"\n";

    #[test]
    fn overrides_and_seed_propagation() {
        let o: Vec<(String, toml::Value)> = [("train.epochs", "7"), ("sampler.diffusion.kind", "follmer"), ("out_dir", "\"elsewhere\"")]
            .iter()
            .map(|(k, v)| (k.to_string(), parse_value(v)))
            .collect();
        let cfg = RunConfig::load(BASE, &o).unwrap();
        assert_eq!(cfg.train.train.epochs, 7);
        assert_eq!(cfg.sampler.diffusion, siforecast::DiffusionKind::Follmer);
        assert_eq!(cfg.out_dir, PathBuf::from("elsewhere"));
        assert_eq!((cfg.train.train.seed, cfg.sampler.seed, cfg.jump.seed), (3, 3, 3));
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig::load(BASE, &[]).unwrap();
        let again = RunConfig::load(&cfg.to_toml().unwrap(), &[]).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash().unwrap(), again.hash().unwrap());
    }

    #[test]
    fn missing_seed_and_unknown_keys_are_rejected() {
        assert!(RunConfig::load("task = \"gmm_synthetic\"\nout_dir = \"o\"\n", &[]).is_err());
        assert!(RunConfig::load(BASE, &[("tran.epochs".into(), parse_value("1"))]).is_err());
        assert!(RunConfig::load(BASE, &[("task".into(), parse_value("weather"))]).is_err());
        assert!(RunConfig::load(BASE, &[("seed.x".into(), parse_value("1"))]).is_err());
    }
}
