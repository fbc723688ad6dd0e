//! Experiment configuration. The bundled default lives in
//! `configs/default.json` and is compiled into the crate.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{OracleConfig, RemoteConfig};
use crate::error::{Error, Result};
use crate::model::{AllocationRatio, RadioConfig, SliceSpec};
use crate::radio::{QueueConfig, RadioSim, TrafficProfile, UeChannelState};

pub const BUNDLED_CONFIG: &str = include_str!("../configs/default.json");

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionMode {
    /// Risk factors are computed locally and cost no tokens.
    #[default]
    Analytic,
    /// Every cycle also sends a short detection prompt through the backend,
    /// which is charged to the token budget.
    Prompted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlConfig {
    pub initial_shares: Vec<f64>,
    pub retrieval_k: usize,
    pub shortlist_multiplier: usize,
    #[serde(default)]
    pub detection: DetectionMode,
    #[serde(default)]
    pub oracle: OracleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario1Config {
    pub cycles: u64,
    pub traffic: TrafficProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario2Config {
    pub values_mbps: Vec<f64>,
    pub trials: usize,
    pub cycles_per_trial: u64,
    pub fixed_baselines: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub radio: RadioConfig,
    pub queue: QueueConfig,
    pub slices: Vec<SliceSpec>,
    pub channels: Vec<UeChannelState>,
    pub control: ControlConfig,
    pub scenario1: Scenario1Config,
    pub scenario2: Scenario2Config,
    #[serde(default)]
    pub remote: RemoteConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::bundled()
    }
}

impl ExperimentConfig {
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED_CONFIG).expect("bundled config is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Sets the experiment seed, which also seeds arrival jitter.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.queue.jitter_seed = seed;
        self
    }

    pub fn slice_count(&self) -> usize {
        self.slices.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.slices.iter().map(SliceSpec::weight).collect()
    }

    pub fn initial_allocation(&self) -> Result<AllocationRatio> {
        let r = AllocationRatio::new(self.control.initial_shares.clone())?;
        r.check_min_share(self.radio.total_rbs)?;
        Ok(r)
    }

    pub fn build_sim(&self) -> Result<RadioSim> {
        RadioSim::new(
            self.radio.clone(),
            self.queue.clone(),
            self.channels.clone(),
            self.slice_count(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.slice_count();
        if n == 0 {
            return Err(Error::Config("at least one slice is required".into()));
        }
        for (i, s) in self.slices.iter().enumerate() {
            if s.slice_id() != i {
                return Err(Error::Config(format!(
                    "slice ids must be 0..{n} in order; position {i} holds {}",
                    s.slice_id()
                )));
            }
        }
        self.build_sim()?;
        if self.control.initial_shares.len() != n {
            return Err(Error::Config(
                "initial_shares must have one entry per slice".into(),
            ));
        }
        self.initial_allocation()?;
        if self.control.retrieval_k == 0 || self.control.shortlist_multiplier == 0 {
            return Err(Error::Config(
                "retrieval_k and shortlist_multiplier must be positive".into(),
            ));
        }
        if self.control.oracle.sigma_band.is_nan() || self.control.oracle.sigma_band < 0.0 {
            return Err(Error::Config(
                "oracle sigma_band must be nonnegative".into(),
            ));
        }
        self.scenario1.traffic.validate(n)?;
        let s2 = &self.scenario2;
        TrafficProfile::RandomGrid {
            values_mbps: s2.values_mbps.clone(),
            seed: 0,
        }
        .validate(n)?;
        if s2.trials == 0 || s2.cycles_per_trial == 0 {
            return Err(Error::Config(
                "scenario2 needs at least one trial and one cycle".into(),
            ));
        }
        for shares in &s2.fixed_baselines {
            let r = AllocationRatio::new(shares.clone())?;
            if r.len() != n {
                return Err(Error::Config("fixed baseline has wrong slice count".into()));
            }
            r.check_min_share(self.radio.total_rbs)?;
        }
        Ok(())
    }
}
