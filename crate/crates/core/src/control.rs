//! Closed control loop: measure, assess, and on a violation retrieve similar
//! experiences, ask the decision backend for new shares and apply them, then
//! let the change settle for the wait period.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{
    build_detection_prompt, build_meta_prompt, DecisionBackend, DecisionOutcome, DecisionRequest,
    TokenUsage,
};
use crate::config::{DetectionMode, ExperimentConfig};
use crate::error::{Error, Result};
use crate::model::{ratio_to_rb_counts, AllocationRatio, KpmSample, SliceSpec};
use crate::predict::Snapshot;
use crate::radio::{generate_traffic, RadioSim, SimState, TrafficProfile};
use crate::rag::{ExperienceRecord, KpmSummary, RagStore};
use crate::sla::{assess, RiskAssessment};

/// Version tag carried by the messages exchanged between the measurement
/// half and the decision half of the loop.
pub const A1_SCHEMA_VERSION: u32 = 1;

/// Measurement-side message: what was observed and how risky it is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpmReport {
    pub schema_version: u32,
    pub interval_index: u64,
    pub kpms: KpmSample,
    pub assessment: RiskAssessment,
}

/// Decision-side message: the shares to apply from the next interval on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationDirective {
    pub schema_version: u32,
    pub interval_index: u64,
    pub allocation: AllocationRatio,
    pub rb_counts: Vec<u32>,
    pub backend_label: String,
}

impl KpmReport {
    pub fn new(kpms: KpmSample, assessment: RiskAssessment) -> Self {
        Self {
            schema_version: A1_SCHEMA_VERSION,
            interval_index: kpms.interval_index,
            kpms,
            assessment,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoopState {
    pub current_allocation: AllocationRatio,
    /// Next interval to simulate.
    pub interval_index: u64,
    pub cumulative_tokens: TokenUsage,
    pub last_assessment: Option<RiskAssessment>,
    pub sim_state: SimState,
}

impl LoopState {
    pub fn new(sim: &RadioSim, initial: AllocationRatio) -> Self {
        Self {
            current_allocation: initial,
            interval_index: 0,
            cumulative_tokens: TokenUsage::default(),
            last_assessment: None,
            sim_state: sim.initial_state(),
        }
    }
}

/// How allocations are chosen.
pub enum Policy<'a> {
    /// Ask `backend` for new shares. With `gate` set, only when the
    /// assessment flags a violation; otherwise every cycle.
    Adaptive {
        backend: &'a mut dyn DecisionBackend,
        gate: bool,
    },
    /// Keep the initial shares forever.
    Fixed,
}

impl Policy<'_> {
    pub fn label(&self) -> String {
        match self {
            Policy::Adaptive {
                backend,
                gate: true,
            } => format!("adaptive-{}", backend.label()),
            Policy::Adaptive {
                backend,
                gate: false,
            } => format!("ungated-{}", backend.label()),
            Policy::Fixed => "fixed".into(),
        }
    }
}

/// Fixed inputs of a run.
#[derive(Debug, Clone)]
pub struct LoopContext {
    pub sim: RadioSim,
    pub specs: Vec<SliceSpec>,
    pub traffic: TrafficProfile,
    pub theta: f64,
    pub retrieval_k: usize,
    pub detection: DetectionMode,
}

impl LoopContext {
    pub fn from_config(cfg: &ExperimentConfig, traffic: TrafficProfile) -> Result<Self> {
        cfg.validate()?;
        traffic.validate(cfg.slice_count())?;
        Ok(Self {
            sim: cfg.build_sim()?,
            specs: cfg.slices.clone(),
            traffic,
            theta: cfg.radio.violation_threshold,
            retrieval_k: cfg.control.retrieval_k,
            detection: cfg.control.detection,
        })
    }

    fn total_rbs(&self) -> u32 {
        self.sim.radio().total_rbs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleError {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for CycleError {
    fn from(e: &Error) -> Self {
        Self {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleReport {
    pub cycle: u64,
    pub offered_mbps: Vec<f64>,
    /// The assessed monitoring interval.
    pub kpms: KpmSample,
    pub assessment: RiskAssessment,
    pub allocation_before: AllocationRatio,
    pub allocation_after: AllocationRatio,
    pub rb_counts_after: Vec<u32>,
    pub backend_called: bool,
    pub decision: Option<DecisionOutcome>,
    pub reallocated: bool,
    pub error: Option<CycleError>,
    pub token_delta: TokenUsage,
    pub cumulative_tokens: TokenUsage,
    pub record_id: Option<u64>,
    /// Intervals simulated while the new allocation settles; logged but not
    /// assessed.
    pub wait_kpms: Vec<KpmSample>,
}

impl CycleReport {
    pub fn violation(&self) -> bool {
        self.assessment.violation_detected
    }

    /// Monitoring interval followed by the wait intervals.
    pub fn samples(&self) -> impl Iterator<Item = &KpmSample> {
        std::iter::once(&self.kpms).chain(&self.wait_kpms)
    }
}

/// One cycle of the loop. Backend failures leave the allocation unchanged
/// and are noted in the report; simulation errors abort.
pub fn run_cycle(
    state: &mut LoopState,
    ctx: &LoopContext,
    store: &mut RagStore,
    policy: &mut Policy<'_>,
    cycle: u64,
) -> Result<CycleReport> {
    let n = ctx.specs.len();
    let total = ctx.total_rbs();
    let before = state.current_allocation.clone();
    let counts = ratio_to_rb_counts(&before, total)?;

    let offered = generate_traffic(&ctx.traffic, state.interval_index, n);
    let sample = ctx.sim.step(&mut state.sim_state, &offered, &counts)?;
    state.interval_index += 1;
    let assessment = assess(std::slice::from_ref(&sample), &ctx.specs, ctx.theta)?;
    let report = KpmReport::new(sample.clone(), assessment.clone());

    let mut delta = TokenUsage::default();
    let mut error = None;
    let mut decision = None;
    let mut after = before.clone();

    let call = match policy {
        Policy::Fixed => false,
        Policy::Adaptive { backend, gate } => {
            if ctx.detection == DetectionMode::Prompted {
                let prompt = build_detection_prompt(&report.kpms, &ctx.specs, ctx.theta);
                match backend.detection_usage(&prompt, report.assessment.violation_detected) {
                    Ok(u) => delta += u,
                    Err(e) => error = Some(CycleError::from(&e)),
                }
            }
            !*gate || report.assessment.violation_detected
        }
    };

    // Retrieval sees only experiences from earlier cycles.
    let record = ExperienceRecord {
        record_id: 0,
        arrival_rates_mbps: offered.clone(),
        allocation: before.clone(),
        resulting_sigma: assessment.sigma,
        kpm_summary: sample
            .slices
            .iter()
            .map(|k| KpmSummary {
                latency_ms: k.mean_latency_ms,
                throughput_mbps: k.mean_throughput_mbps,
                drop_ratio: k.drop_ratio,
            })
            .collect(),
        created_at_interval: sample.interval_index,
    };

    if let (true, Policy::Adaptive { backend, .. }) = (call, &mut *policy) {
        let outcome = decide(
            *backend,
            ctx,
            store,
            &report,
            &before,
            &state.sim_state,
            &offered,
        );
        match outcome {
            Ok((out, directive)) => {
                delta += out.usage();
                after = directive.allocation;
                decision = Some(out);
            }
            Err(e) => error = Some(CycleError::from(&e)),
        }
    }
    let record_id = Some(store.record(record)?);

    let after_counts = ratio_to_rb_counts(&after, total)?;
    let reallocated = after_counts != counts;
    state.current_allocation = after.clone();

    let mut wait_kpms = Vec::new();
    for _ in 0..ctx.sim.radio().wait_intervals() {
        let offered = generate_traffic(&ctx.traffic, state.interval_index, n);
        wait_kpms.push(
            ctx.sim
                .step(&mut state.sim_state, &offered, &after_counts)?,
        );
        state.interval_index += 1;
    }

    state.cumulative_tokens += delta;
    state.last_assessment = Some(assessment.clone());
    Ok(CycleReport {
        cycle,
        offered_mbps: offered,
        kpms: sample,
        assessment,
        allocation_before: before,
        allocation_after: after,
        rb_counts_after: after_counts,
        backend_called: call,
        decision,
        reallocated,
        error,
        token_delta: delta,
        cumulative_tokens: state.cumulative_tokens,
        record_id,
        wait_kpms,
    })
}

fn decide(
    backend: &mut dyn DecisionBackend,
    ctx: &LoopContext,
    store: &RagStore,
    report: &KpmReport,
    current: &AllocationRatio,
    sim_state: &SimState,
    offered: &[f64],
) -> Result<(DecisionOutcome, AllocationDirective)> {
    let total = ctx.total_rbs();
    let retrieved = store.retrieve(offered, ctx.retrieval_k)?;
    let prompt = build_meta_prompt(
        &report.assessment,
        &report.kpms,
        current,
        &retrieved,
        &ctx.specs,
        total,
    );
    let request = DecisionRequest {
        prompt,
        snapshot: Snapshot {
            sim: ctx.sim.clone(),
            state: sim_state.clone(),
            offered_mbps: offered.to_vec(),
        },
        specs: ctx.specs.clone(),
        theta: ctx.theta,
        current: current.clone(),
        total_rbs: total,
    };
    let outcome = backend.propose_allocation(&request)?;
    if outcome.allocation.len() != ctx.specs.len() {
        return Err(Error::Parse {
            reason: format!(
                "{} shares for {} slices",
                outcome.allocation.len(),
                ctx.specs.len()
            ),
            text: outcome.raw_response.clone(),
        });
    }
    let rb_counts = ratio_to_rb_counts(&outcome.allocation, total)?;
    let directive = AllocationDirective {
        schema_version: A1_SCHEMA_VERSION,
        interval_index: report.interval_index + 1,
        allocation: outcome.allocation.clone(),
        rb_counts,
        backend_label: outcome.backend_label.clone(),
    };
    Ok((outcome, directive))
}

/// One row of `timeline.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineRow {
    pub cycle: u64,
    pub phase: String,
    pub interval: u64,
    pub slice_id: usize,
    pub latency_ms: f64,
    pub throughput_mbps: f64,
    pub drop_ratio: f64,
    pub offered_mbps: f64,
    pub rb_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentLog {
    pub policy: String,
    pub cycles: Vec<CycleReport>,
}

impl ExperimentLog {
    pub fn backend_calls(&self) -> usize {
        self.cycles.iter().filter(|c| c.backend_called).count()
    }

    pub fn reallocations(&self) -> usize {
        self.cycles.iter().filter(|c| c.reallocated).count()
    }

    pub fn violation_cycles(&self) -> usize {
        self.cycles.iter().filter(|c| c.violation()).count()
    }

    pub fn total_tokens(&self) -> TokenUsage {
        self.cycles
            .last()
            .map(|c| c.cumulative_tokens)
            .unwrap_or_default()
    }

    /// Every simulated interval in order, monitoring and wait alike.
    pub fn samples(&self) -> impl Iterator<Item = &KpmSample> {
        self.cycles.iter().flat_map(CycleReport::samples)
    }

    pub fn timeline_rows(&self) -> Vec<TimelineRow> {
        let mut rows = Vec::new();
        for c in &self.cycles {
            for (i, s) in c.samples().enumerate() {
                for k in &s.slices {
                    rows.push(TimelineRow {
                        cycle: c.cycle,
                        phase: if i == 0 { "monitor" } else { "wait" }.into(),
                        interval: s.interval_index,
                        slice_id: k.slice_id,
                        latency_ms: k.mean_latency_ms,
                        throughput_mbps: k.mean_throughput_mbps,
                        drop_ratio: k.drop_ratio,
                        offered_mbps: k.offered_load_mbps,
                        rb_count: k.rb_count,
                    });
                }
            }
        }
        rows
    }

    pub fn write_timeline_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in self.timeline_rows() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `cycles` cycles from an empty system with `initial` shares.
pub fn run_experiment(
    ctx: &LoopContext,
    initial: AllocationRatio,
    cycles: u64,
    mut policy: Policy<'_>,
    store: &mut RagStore,
) -> Result<ExperimentLog> {
    initial.check_min_share(ctx.total_rbs())?;
    let mut state = LoopState::new(&ctx.sim, initial);
    let mut log = ExperimentLog {
        policy: policy.label(),
        cycles: Vec::with_capacity(cycles as usize),
    };
    for cycle in 0..cycles {
        log.cycles
            .push(run_cycle(&mut state, ctx, store, &mut policy, cycle)?);
    }
    Ok(log)
}
