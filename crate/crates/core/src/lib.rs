//! Closed-loop RAN slicing controller: radio and queue simulator, SLA risk
//! scoring, experience store, allocation agents, baselines and the
//! experiment harness.

pub mod agents;
pub mod baselines;
pub mod config;
pub mod control;
pub mod error;
pub mod experiments;
pub mod model;
pub mod predict;
pub mod radio;
pub mod rag;
pub mod sla;

pub use config::{ControlConfig, DetectionMode, ExperimentConfig};
pub use error::{Error, Result};
pub use model::{
    ratio_to_rb_counts, AllocationRatio, KpmSample, RadioConfig, SliceKind, SliceKpm, SliceSpec,
    ThroughputTarget,
};
pub use radio::{
    QueueConfig, RadioSim, SimState, Sinr, TrafficProfile, TrafficStep, UeChannelState,
};
pub use rag::{ExperienceRecord, KpmSummary, RagStore};
pub use sla::{assess, RiskAssessment, SliceRisk};
