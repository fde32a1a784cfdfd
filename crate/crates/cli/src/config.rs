//! Experiment configuration files and the bundled presets.
//!
//! A configuration is one TOML document with up to five tables:
//!
//! ```toml
//! [fan]          # FanSpec; every field optional
//! [modulation]   # ModulationConfig; required
//! [channel]      # ChannelConfig; every field optional
//! [demod]        # receiver overrides; every field optional
//! [experiment]   # trials, seeds, base_seed, payload_bytes
//! ```

use std::path::Path;

use fanmodem::{ChannelConfig, DemodConfig, FanSpec, ModulationConfig, Scheme};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Bundled presets as `(name, TOML source)`.
pub const PRESETS: [(&str, &str); 4] = [
    ("fig7", include_str!("../presets/fig7.toml")),
    ("fig8", include_str!("../presets/fig8.toml")),
    ("fig9", include_str!("../presets/fig9.toml")),
    ("fig10", include_str!("../presets/fig10.toml")),
];

/// Receiver settings that replace the values derived from the transmitter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemodOverrides {
    /// Decode as this scheme regardless of how the recording was made.
    pub scheme: Option<Scheme>,
    pub target_rate: Option<u32>,
    pub band: Option<(f64, f64)>,
    pub window_length: Option<f64>,
    pub hop: Option<f64>,
    pub expected_f0: Option<f64>,
    pub expected_f1: Option<f64>,
    pub sync_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub trials: usize,
    /// One seed per trial; defaults to `base_seed + i`.
    pub seeds: Option<Vec<u64>>,
    pub base_seed: u64,
    /// Random payload length per trial.
    pub payload_bytes: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            trials: 100,
            seeds: None,
            base_seed: 0,
            payload_bytes: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    fan: FanSpec,
    modulation: ModulationConfig,
    #[serde(default)]
    channel: ChannelConfig,
    #[serde(default)]
    demod: DemodOverrides,
    #[serde(default)]
    experiment: ExperimentSection,
}

/// Everything one run needs: the link, the receiver overrides and the trial plan.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub fan: FanSpec,
    pub modulation: ModulationConfig,
    pub channel: ChannelConfig,
    pub demod: DemodOverrides,
    pub trials: usize,
    pub seeds: Vec<u64>,
    pub payload_bytes: usize,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        let ex = file.experiment;
        let seeds = match ex.seeds {
            Some(s) => s,
            None => (0..ex.trials as u64).map(|i| ex.base_seed + i).collect(),
        };
        let cfg = ExperimentConfig {
            fan: file.fan,
            modulation: file.modulation,
            channel: file.channel,
            demod: file.demod,
            trials: ex.trials,
            seeds,
            payload_bytes: ex.payload_bytes,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn preset(name: &str) -> Result<Self> {
        let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            CliError::Config(format!(
                "unknown preset {name:?}; available: {}",
                names.join(", ")
            ))
        })?;
        Self::from_toml(text)
    }

    pub fn validate(&self) -> Result<()> {
        self.fan.validate()?;
        self.modulation.validate(&self.fan)?;
        self.channel.validate()?;
        if self.trials < 1 {
            return Err(CliError::Config("experiment.trials must be >= 1".into()));
        }
        if self.seeds.len() != self.trials {
            return Err(CliError::Config(format!(
                "experiment.seeds has {} entries but trials = {}",
                self.seeds.len(),
                self.trials
            )));
        }
        self.demod_config()?;
        Ok(())
    }

    /// TR for the configured speed pair.
    pub fn transition_time(&self) -> f64 {
        self.modulation
            .transition_time(&self.fan)
            .expect("speeds checked at load")
    }

    /// The receiver for this link with the `[demod]` overrides applied.
    pub fn demod_config(&self) -> Result<DemodConfig> {
        demod_for(&self.fan, &self.modulation, &self.demod)
    }
}

/// Receiver matched to `m`, then adjusted by `o`.
pub fn demod_for(fan: &FanSpec, m: &ModulationConfig, o: &DemodOverrides) -> Result<DemodConfig> {
    let scheme = o.scheme.unwrap_or(m.scheme);
    let mut cfg = DemodConfig::for_modulation(fan, &ModulationConfig { scheme, ..*m })?;
    if let Some(rate) = o.target_rate {
        cfg.target_rate = rate;
    }
    if let Some(band) = o.band {
        cfg.band = band;
    }
    match (o.expected_f0, o.expected_f1) {
        (Some(f0), Some(f1)) => cfg = cfg.with_hints(f0, f1),
        (None, None) => {}
        _ => {
            return Err(CliError::Config(
                "demod: give both expected_f0 and expected_f1 or neither".into(),
            ))
        }
    }
    if let Some(w) = o.window_length {
        cfg.window_length = w;
        if o.hop.is_none() {
            cfg.hop = cfg.hop.min(w);
        }
    }
    if let Some(h) = o.hop {
        cfg.hop = h;
    }
    if let Some(t) = o.sync_threshold {
        cfg.sync_threshold = t;
    }
    cfg.validate()?;
    Ok(cfg)
}
