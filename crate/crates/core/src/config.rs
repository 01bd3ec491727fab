//! Run configuration files.
//!
//! ```toml
//! [molecule]
//! name = "H2"
//! units = "bohr"
//! n_up = 1
//! n_down = 1
//! [[molecule.nuclei]]
//! symbol = "H"
//! charge = 1
//! position = [0.0, 0.0, 0.0]
//!
//! [network]      # optional, defaults otherwise
//! n_layers = 2
//!
//! [train]        # optional, defaults otherwise
//! seed = 7
//! ```
//!
//! Summary files written by `vqmc run` use the same layout plus a `[result]`
//! table, so they can be fed back in to repeat a run.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::NetworkHyperparams;
use crate::system::{Molecule, RawMolecule, SystemError};
use crate::trainer::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Parse(String),
    #[error(transparent)]
    System(#[from] SystemError),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRunConfig {
    molecule: RawMolecule,
    #[serde(default)]
    network: NetworkHyperparams,
    #[serde(default)]
    train: TrainConfig,
    #[serde(default)]
    #[allow(dead_code)]
    result: Option<toml::Value>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub molecule: Molecule,
    pub network: NetworkHyperparams,
    pub train: TrainConfig,
}

#[derive(Serialize)]
struct RunConfigOut<'a, R: Serialize> {
    #[serde(flatten)]
    molecule: toml::Table,
    network: &'a NetworkHyperparams,
    train: &'a TrainConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<R>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let raw: RawRunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))?;
        Ok(RunConfig {
            molecule: raw.molecule.into_molecule()?,
            network: raw.network,
            train: raw.train,
        })
    }

    /// Full configuration, with an optional `[result]` table appended.
    pub fn to_toml_with<R: Serialize>(&self, result: Option<R>) -> String {
        let molecule: toml::Table = toml::from_str(&self.molecule.to_toml()).expect("molecule round-trips");
        let out = RunConfigOut {
            molecule,
            network: &self.network,
            train: &self.train,
            result,
        };
        toml::to_string(&out).expect("run config serializes")
    }

    pub fn to_toml(&self) -> String {
        self.to_toml_with::<()>(None)
    }
}
