//! Single TOML configuration file with one section per stage. Unknown keys
//! are rejected everywhere.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::error::{CosmosError, Result};
use crate::generator::SimConfig;
use crate::ingest::IngestConfig;
use crate::plume_fit::FitConfig;
use crate::synth::TemplateSpec;
use crate::validate::ValidateConfig;

/// How template whiffs are binned into the statistics grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    pub bin_size: f64,
    /// Samples next to a whiff excluded from blank-state spread.
    pub transition_margin: usize,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self { bin_size: 5.0, transition_margin: 14 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CosmosConfig {
    pub ingest: IngestConfig,
    pub fit: FitConfig,
    pub stats: StatsConfig,
    pub simulation: SimConfig,
    pub validate: ValidateConfig,
    pub template: TemplateSpec,
    pub agent: AgentConfig,
}

impl CosmosConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CosmosError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CosmosError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CosmosError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.ingest.validate()?;
        self.simulation.validate()?;
        self.template.validate()?;
        self.agent.validate()?;
        if self.ingest.rows_per_second != self.simulation.rows_per_second {
            return Err(CosmosError::Config(format!(
                "ingest.rows_per_second ({}) differs from simulation.rows_per_second ({})",
                self.ingest.rows_per_second, self.simulation.rows_per_second
            )));
        }
        if !(self.stats.bin_size > 0.0) {
            return Err(CosmosError::Config("stats.bin_size must be positive".into()));
        }
        if !(self.fit.smoothing_sigma >= 0.0) {
            return Err(CosmosError::Config("fit.smoothing_sigma must be >= 0".into()));
        }
        Ok(())
    }
}
