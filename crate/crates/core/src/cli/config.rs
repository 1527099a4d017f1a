//! TOML experiment configuration.
//!
//! ```toml
//! m_subcarriers = 64
//! bit_duration = 400      # Tb
//! bandwidth = 1           # B, per user
//! rolloff = 0.25
//! chaos_map = "chebyshev2"
//! model = "chip_level"    # or "waveform"
//! ebn0_grid_db = [0, 2, 4, 6, 8]
//! max_bits = 10000000
//! target_errors = 100
//! seed = 1
//! users = 1
//! ```
//!
//! `spreading_factor` is derived from the bandwidth budget when omitted.

use std::path::Path;

use serde::Deserialize;

use crate::chaos::ChaosMapKind;
use crate::error::{Error, Result};
use crate::modem::FrameParams;
use crate::montecarlo::{ExperimentConfig, Model, WaveformSettings};
use crate::waveform::DEFAULT_SPAN_CHIPS;

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "CHAOSCOMM_SEED";

pub const CONFIG_KEYS: [&str; 14] = [
    "m_subcarriers",
    "spreading_factor",
    "bit_duration",
    "bandwidth",
    "rolloff",
    "chaos_map",
    "model",
    "ebn0_grid_db",
    "max_bits",
    "target_errors",
    "seed",
    "users",
    "samples_per_chip",
    "fundamental_freq",
];

const DEFAULT_BIT_DURATION: f64 = 400.0;
const DEFAULT_BANDWIDTH: f64 = 1.0;
const DEFAULT_ROLLOFF: f64 = 0.25;

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct RawConfig {
    m_subcarriers: Option<u64>,
    spreading_factor: Option<u64>,
    bit_duration: Option<f64>,
    bandwidth: Option<f64>,
    rolloff: Option<f64>,
    chaos_map: Option<ChaosMapKind>,
    model: Option<Model>,
    ebn0_grid_db: Option<Vec<f64>>,
    max_bits: Option<u64>,
    target_errors: Option<u64>,
    seed: Option<u64>,
    users: Option<u64>,
    samples_per_chip: Option<u64>,
    fundamental_freq: Option<f64>,
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

pub fn parse_config(text: &str, strict: bool) -> Result<ExperimentConfig> {
    let table: toml::Table = text.parse().map_err(config_err)?;
    let unknown: Vec<&str> = table
        .keys()
        .map(String::as_str)
        .filter(|k| !CONFIG_KEYS.contains(k))
        .collect();
    if !unknown.is_empty() {
        if strict {
            return Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))));
        }
        log::warn!("ignoring unknown config keys: {}", unknown.join(", "));
    }
    let raw: RawConfig = table.try_into().map_err(config_err)?;
    resolve(raw).map_err(|e| match e {
        Error::Config(_) => e,
        other => config_err(other),
    })
}

fn to_usize(v: u64, key: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::Config(format!("{key} out of range")))
}

fn resolve(raw: RawConfig) -> Result<ExperimentConfig> {
    let m = raw
        .m_subcarriers
        .ok_or_else(|| Error::Config("missing required key `m_subcarriers`".into()))?;
    let m = to_usize(m, "m_subcarriers")?;
    if m < 2 {
        return Err(Error::TooFewSubcarriers(m));
    }
    let tb = raw.bit_duration.unwrap_or(DEFAULT_BIT_DURATION);
    let b = raw.bandwidth.unwrap_or(DEFAULT_BANDWIDTH);
    let alpha = raw.rolloff.unwrap_or(DEFAULT_ROLLOFF);
    let params = match raw.spreading_factor {
        Some(beta) => FrameParams::with_spreading_factor(tb, b, m, alpha, to_usize(beta, "spreading_factor")?)?,
        None => FrameParams::derive(tb, b, m, alpha)?,
    };
    let mut cfg = ExperimentConfig::new(params);
    if let Some(map) = raw.chaos_map {
        cfg.chaos_map = map;
    }
    if let Some(model) = raw.model {
        cfg.model = model;
    }
    if let Some(grid) = raw.ebn0_grid_db {
        cfg.ebn0_grid_db = grid;
    }
    if let Some(v) = raw.max_bits {
        cfg.max_bits = v;
    }
    if let Some(v) = raw.target_errors {
        cfg.target_errors = v;
    }
    if let Some(v) = raw.seed {
        cfg.master_seed = v;
    }
    if let Some(v) = raw.users {
        cfg.users = to_usize(v, "users")?;
    }
    cfg.waveform = WaveformSettings {
        samples_per_chip: raw.samples_per_chip.map(|v| to_usize(v, "samples_per_chip")).transpose()?,
        fundamental_freq: raw.fundamental_freq.unwrap_or(2.0 * b),
        span_chips: DEFAULT_SPAN_CHIPS,
    };
    if let Some(l) = cfg.waveform.samples_per_chip {
        if l < 2 {
            return Err(Error::Config(format!("samples_per_chip {l} < 2")));
        }
    }
    if !(cfg.waveform.fundamental_freq > 0.0) {
        return Err(Error::Config("fundamental_freq must be positive".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path, strict: bool) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, strict)
}

/// Replaces the seed with `value` (the contents of [`SEED_ENV`]) if set.
pub fn apply_seed_override(cfg: &mut ExperimentConfig, value: Option<&str>) -> Result<()> {
    if let Some(v) = value {
        cfg.master_seed = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
    }
    Ok(())
}
