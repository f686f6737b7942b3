//! Scenario configuration files.
//!
//! A scenario is a flat JSON object. Powers are given in dBm, gains in dB and
//! the rate target in bits/s/Hz; [`load_scenario`] converts them to the linear
//! units used by the library.

use std::f64::consts::LN_2;
use std::path::Path;

use isac_beamkit::model::{db_to_linear, dbm_to_watts, ChannelModel};
use isac_beamkit::{ArrayConfig, GmmAnglePrior, GmmComponent, ReflectionPrior, RxArchitecture, Scenario};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelConfig {
    Rician {
        user_angle: f64,
        user_distance: f64,
        rician_factor_db: f64,
        ref_gain_db: f64,
        path_exp: f64,
    },
    Wideband {
        taps: usize,
        user_distance: f64,
        ref_gain_db: f64,
        path_exp: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_user: usize,
    pub n_rf_tx: usize,
    pub n_rf_rx: usize,
    pub rx_architecture: RxArchitecture,
    pub prior: Vec<PriorComponent>,
    /// Second moment of the reflection coefficient.
    pub gamma: f64,
    pub power_dbm: f64,
    pub noise_comm_dbm: f64,
    pub noise_sense_dbm: f64,
    pub symbols: usize,
    pub rate_target_bits: f64,
    pub subcarriers: usize,
    pub quadrature_points: usize,
    pub seed: u64,
    pub channel: ChannelConfig,
}

fn invalid(key: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {e}"))
}

impl ScenarioConfig {
    pub fn to_scenario(&self) -> Result<Scenario, CliError> {
        let arrays = ArrayConfig::new(
            self.n_tx,
            self.n_rx,
            self.n_user,
            self.n_rf_tx,
            self.n_rf_rx,
            self.rx_architecture,
        )
        .map_err(|e| invalid("arrays", e))?;
        let components = self
            .prior
            .iter()
            .map(|c| GmmComponent {
                weight: c.weight,
                mean: c.mean,
                variance: c.variance,
            })
            .collect();
        let angle_prior = GmmAnglePrior::new(components).map_err(|e| invalid("prior", e))?;
        let reflection = ReflectionPrior::new(self.gamma).map_err(|e| invalid("gamma", e))?;
        for (key, v) in [
            ("power_dbm", self.power_dbm),
            ("noise_comm_dbm", self.noise_comm_dbm),
            ("noise_sense_dbm", self.noise_sense_dbm),
        ] {
            if !v.is_finite() {
                return Err(invalid(key, "must be finite"));
            }
        }
        if !(self.rate_target_bits.is_finite() && self.rate_target_bits >= 0.0) {
            return Err(invalid("rate_target_bits", "must be finite and nonnegative"));
        }
        let model = match self.channel {
            ChannelConfig::Rician {
                user_angle,
                user_distance,
                rician_factor_db,
                ref_gain_db,
                path_exp,
            } => ChannelModel::Rician {
                user_angle,
                user_distance,
                rician_factor: db_to_linear(rician_factor_db),
                ref_gain: db_to_linear(ref_gain_db),
                path_exp,
            },
            ChannelConfig::Wideband {
                taps,
                user_distance,
                ref_gain_db,
                path_exp,
            } => ChannelModel::Wideband {
                taps,
                user_distance,
                ref_gain: db_to_linear(ref_gain_db),
                path_exp,
            },
        };
        let channel = model
            .realize(&arrays, self.subcarriers, self.seed)
            .map_err(|e| invalid("channel", e))?;
        let scenario = Scenario {
            arrays,
            angle_prior,
            reflection,
            channel,
            channel_model: Some(model),
            power: dbm_to_watts(self.power_dbm),
            noise_comm: dbm_to_watts(self.noise_comm_dbm),
            noise_sense: dbm_to_watts(self.noise_sense_dbm),
            symbols: self.symbols,
            rate_target: self.rate_target_bits * LN_2,
            subcarriers: self.subcarriers,
            quadrature_points: self.quadrature_points,
            seed: self.seed,
        };
        scenario.validate().map_err(|e| invalid("scenario", e))?;
        Ok(scenario)
    }
}

/// Applies `key=value` overrides to a parsed config document. Keys address
/// existing fields, with dots for nesting (`channel.user_angle`); values are
/// parsed as JSON and fall back to plain strings.
pub fn apply_overrides(doc: &mut Value, overrides: &[String]) -> Result<(), CliError> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("override `{item}` is not of the form key=value")))?;
        let mut slot = &mut *doc;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|m| m.get_mut(part))
                .ok_or_else(|| CliError::Config(format!("{key}: not a scenario key")))?;
        }
        *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    }
    Ok(())
}

pub fn parse_config(doc: Value) -> Result<ScenarioConfig, CliError> {
    serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            CliError::Config(inner.to_string())
        } else {
            CliError::Config(format!("{path}: {inner}"))
        }
    })
}

pub fn read_config(path: &Path, overrides: &[String]) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut doc: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    apply_overrides(&mut doc, overrides)?;
    parse_config(doc)
}

/// Reads, overrides and validates a scenario file.
pub fn load_scenario(path: &Path, overrides: &[String]) -> Result<Scenario, CliError> {
    read_config(path, overrides)?.to_scenario()
}

/// The default narrowband setup as a config document.
pub fn default_config() -> ScenarioConfig {
    ScenarioConfig {
        n_tx: 8,
        n_rx: 12,
        n_user: 6,
        n_rf_tx: 3,
        n_rf_rx: 6,
        rx_architecture: RxArchitecture::PartiallyConnected,
        prior: isac_beamkit::model::default_prior()
            .components()
            .iter()
            .map(|c| PriorComponent {
                weight: c.weight,
                mean: c.mean,
                variance: c.variance,
            })
            .collect(),
        gamma: 2e-12,
        power_dbm: 30.0,
        noise_comm_dbm: -90.0,
        noise_sense_dbm: -90.0,
        symbols: 30,
        rate_target_bits: 4.5,
        subcarriers: 1,
        quadrature_points: 2048,
        seed: 1,
        channel: ChannelConfig::Rician {
            user_angle: 0.36,
            user_distance: 400.0,
            rician_factor_db: -8.0,
            ref_gain_db: -30.0,
            path_exp: 3.5,
        },
    }
}
