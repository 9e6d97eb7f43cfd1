//! Flat key-value scenario configuration.

use serde::{Deserialize, Serialize};

use crate::error::HarnessError;
use crate::model::SystemParams;
use crate::optimizer::{Mode, SolverTolerances};

/// Everything needed to reproduce a simulation. Every key has a default and
/// can be overridden from a flat TOML document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Fleet size `M`.
    pub clients: usize,
    /// Number of rounds `T`.
    pub rounds: usize,
    /// Mean per-round candidate count before truncation to `[1, M]`.
    pub poisson_mean: f64,
    pub radius_min: f64,
    pub radius_max: f64,
    pub velocity_min: f64,
    pub velocity_max: f64,
    pub gpu_freq_min: f64,
    pub gpu_freq_max: f64,
    pub cores_min: f64,
    pub cores_max: f64,
    pub flops_per_cycle: f64,
    /// Client-side forward FLOPs per sample.
    pub client_flops: f64,
    /// Width of the synthetic activations used for attention scoring.
    pub score_dim: usize,
    /// Multiplier on synthetic attention logits; below 1 flattens importance.
    pub attention_scale: f64,
    pub mode: Mode,
    pub sweep_bandwidth: Vec<f64>,
    pub sweep_energy: Vec<f64>,
    /// Scenarios averaged per sweep cell, seeded `seed, seed + 1, ...`.
    pub sweep_seeds: u64,
    /// Instances compared by `oracle-check`.
    pub oracle_instances: usize,
    #[serde(flatten)]
    pub params: SystemParams,
    #[serde(skip)]
    pub tolerances: SolverTolerances,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            clients: 100,
            rounds: 10,
            poisson_mean: 10.0,
            radius_min: 5.0,
            radius_max: 500.0,
            velocity_min: 0.0,
            velocity_max: 20.0,
            gpu_freq_min: 1.0e9,
            gpu_freq_max: 1.5e9,
            cores_min: 4.0,
            cores_max: 6.0,
            flops_per_cycle: 1.0,
            client_flops: 1e8,
            score_dim: 64,
            attention_scale: 1.0,
            mode: Mode::Full,
            sweep_bandwidth: vec![5e6, 10e6, 20e6, 35e6, 50e6],
            sweep_energy: vec![0.02, 0.05, 0.1, 0.2, 0.5],
            sweep_seeds: 5,
            oracle_instances: 20,
            params: SystemParams::default(),
            tolerances: SolverTolerances::default(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ScenarioConfig {
    /// Parse a flat TOML document; unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let table: toml::Table = text.parse().map_err(|e| config_err(format!("{e}")))?;
        let known = toml::Table::try_from(ScenarioConfig::default())
            .map_err(|e| config_err(format!("{e}")))?;
        if let Some(key) = table.keys().find(|k| !known.contains_key(*k)) {
            return Err(config_err(format!("unknown key `{key}`")));
        }
        let cfg: ScenarioConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| config_err(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.params
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        if self.clients == 0 {
            return Err(config_err("clients must be at least 1"));
        }
        if self.rounds == 0 {
            return Err(config_err("rounds must be at least 1"));
        }
        if !(self.poisson_mean.is_finite() && self.poisson_mean >= 0.0) {
            return Err(config_err("poisson_mean must be finite and non-negative"));
        }
        let ranges = [
            ("radius", self.radius_min, self.radius_max),
            ("velocity", self.velocity_min, self.velocity_max),
            ("gpu_freq", self.gpu_freq_min, self.gpu_freq_max),
            ("cores", self.cores_min, self.cores_max),
        ];
        for (name, lo, hi) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= 0.0) {
                return Err(config_err(format!(
                    "{name} range [{lo}, {hi}] must be ordered and non-negative"
                )));
            }
        }
        if self.radius_max > self.params.coverage_radius {
            return Err(config_err(format!(
                "radius_max {} exceeds coverage_radius {}",
                self.radius_max, self.params.coverage_radius
            )));
        }
        if !(self.gpu_freq_min > 0.0 && self.cores_min > 0.0) {
            return Err(config_err("gpu_freq and cores must be positive"));
        }
        if !(self.flops_per_cycle > 0.0 && self.client_flops > 0.0) {
            return Err(config_err("flops_per_cycle and client_flops must be positive"));
        }
        if !(self.attention_scale.is_finite() && self.attention_scale >= 0.0) {
            return Err(config_err("attention_scale must be finite and non-negative"));
        }
        if self.score_dim == 0 {
            return Err(config_err("score_dim must be at least 1"));
        }
        for (name, grid) in [
            ("sweep_bandwidth", &self.sweep_bandwidth),
            ("sweep_energy", &self.sweep_energy),
        ] {
            if grid.is_empty() || grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(config_err(format!("{name} must hold positive values")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(ScenarioConfig::from_toml("").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn flat_overrides() {
        let c = ScenarioConfig::from_toml(
            "seed = 7\nclients = 12\nmode = \"no-token\"\ntotal_bandwidth = 2e7\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.clients, 12);
        assert_eq!(c.mode, Mode::NoToken);
        assert_eq!(c.params.total_bandwidth, 2e7);
        assert_eq!(c.params.max_power, 0.2);
    }

    #[test]
    fn rejects_bad_input() {
        for doc in [
            "bogus = 1",
            "clients = 0",
            "radius_min = 10.0\nradius_max = 5.0",
            "mode = \"fast\"",
            "max_power = -1.0",
            "radius_max = 900.0",
            "rounds = ",
        ] {
            let e = ScenarioConfig::from_toml(doc).unwrap_err();
            assert!(matches!(e, HarnessError::Config(_)), "{doc}: {e}");
            assert_eq!(e.exit_code(), 2);
        }
    }
}
