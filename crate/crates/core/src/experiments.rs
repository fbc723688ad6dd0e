//! Experiment harness: the two traffic scenarios, the token comparison,
//! distribution statistics and the on-disk output layout.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::agents::{DecisionBackend, HeuristicOracle, RemoteBackend, ScriptedBackend, TokenUsage};
use crate::baselines::{brute_force_optimal, OptimizerResult};
use crate::config::ExperimentConfig;
use crate::control::{run_experiment, ExperimentLog, LoopContext, Policy, TimelineRow};
use crate::error::{Error, Result};
use crate::model::{AllocationRatio, SliceKind};
use crate::predict::Snapshot;
use crate::radio::{generate_traffic, TrafficProfile};
use crate::rag::RagStore;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendChoice {
    Oracle,
    Scripted(PathBuf),
    Remote,
}

impl BackendChoice {
    pub fn build(&self, cfg: &ExperimentConfig) -> Result<Box<dyn DecisionBackend>> {
        Ok(match self {
            BackendChoice::Oracle => Box::new(HeuristicOracle::new(cfg.control.oracle)),
            BackendChoice::Scripted(path) => Box::new(ScriptedBackend::from_file(path)?),
            BackendChoice::Remote => Box::new(RemoteBackend::from_env(cfg.remote.clone())?),
        })
    }
}

/// Empirical distribution summary. Quantiles use linear interpolation
/// between order statistics at position `p * (n - 1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionStats {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub p50: f64,
    pub p95: f64,
    /// `(value, fraction of samples <= value)` at each distinct sample value.
    pub cdf: Vec<(f64, f64)>,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn compute_distribution_stats(samples: &[f64]) -> Result<DistributionStats> {
    if samples.is_empty() {
        return Err(Error::Argument("no samples".into()));
    }
    if let Some(x) = samples.iter().find(|x| !x.is_finite()) {
        return Err(Error::Argument(format!("non-finite sample {x}")));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let mut cdf: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in s.iter().enumerate() {
        let f = (i + 1) as f64 / n as f64;
        match cdf.last_mut() {
            Some(last) if last.0 == x => last.1 = f,
            _ => cdf.push((x, f)),
        }
    }
    Ok(DistributionStats {
        count: n,
        mean: s.iter().sum::<f64>() / n as f64,
        min: s[0],
        q1: quantile(&s, 0.25),
        median: quantile(&s, 0.5),
        q3: quantile(&s, 0.75),
        max: s[n - 1],
        p50: quantile(&s, 0.5),
        p95: quantile(&s, 0.95),
        cdf,
    })
}

fn fresh_store(cfg: &ExperimentConfig) -> RagStore {
    RagStore::in_memory(cfg.slice_count())
        .with_shortlist_multiplier(cfg.control.shortlist_multiplier)
}

fn slice_of_kind(cfg: &ExperimentConfig, kind: SliceKind) -> Result<usize> {
    cfg.slices
        .iter()
        .position(|s| s.kind() == kind)
        .ok_or_else(|| Error::Config(format!("no {kind:?} slice configured")))
}

// ---------------------------------------------------------------- scenario 1

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseSummary {
    pub start_interval: u64,
    pub end_interval: u64,
    pub offered_mbps: Vec<f64>,
    pub reallocations: usize,
    pub latency_mean_ms: f64,
    pub latency_max_ms: f64,
    pub drop_mean: f64,
    /// Mean latency of the latency slice after the last reallocation of the
    /// phase, skipping one drain interval. `None` if nothing was reallocated
    /// or no interval is left.
    pub settled_latency_ms: Option<f64>,
    pub settled_intervals: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario1Summary {
    pub policy: String,
    pub cycles: usize,
    pub intervals: u64,
    pub backend_calls: usize,
    pub violation_cycles: usize,
    pub reallocations: usize,
    pub tokens: TokenUsage,
    pub phases: Vec<PhaseSummary>,
}

#[derive(Debug, Clone)]
pub struct Scenario1Result {
    pub log: ExperimentLog,
    pub summary: Scenario1Summary,
}

pub fn run_scenario1(
    cfg: &ExperimentConfig,
    backend: &mut dyn DecisionBackend,
    gate: bool,
    store: &mut RagStore,
) -> Result<Scenario1Result> {
    let ctx = LoopContext::from_config(cfg, cfg.scenario1.traffic.clone())?;
    let log = run_experiment(
        &ctx,
        cfg.initial_allocation()?,
        cfg.scenario1.cycles,
        Policy::Adaptive { backend, gate },
        store,
    )?;
    let summary = summarize_scenario1(cfg, &log)?;
    Ok(Scenario1Result { log, summary })
}

fn summarize_scenario1(cfg: &ExperimentConfig, log: &ExperimentLog) -> Result<Scenario1Summary> {
    let lat = slice_of_kind(cfg, SliceKind::LatencyConstrained)?;
    let tput = slice_of_kind(cfg, SliceKind::ThroughputConstrained)?;
    let samples: Vec<_> = log.samples().collect();
    let intervals = samples.len() as u64;
    let mut bounds: Vec<u64> = cfg
        .scenario1
        .traffic
        .step_starts()
        .into_iter()
        .filter(|&s| s < intervals)
        .collect();
    if bounds.first() != Some(&0) {
        bounds.insert(0, 0);
    }
    bounds.push(intervals);

    let mut phases = Vec::new();
    for w in bounds.windows(2) {
        let (start, end) = (w[0], w[1]);
        let in_phase = &samples[start as usize..end as usize];
        let realloc: Vec<_> = log
            .cycles
            .iter()
            .filter(|c| c.reallocated && (start..end).contains(&c.kpms.interval_index))
            .collect();
        let mean = |xs: &mut dyn Iterator<Item = f64>| {
            let v: Vec<f64> = xs.collect();
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        let (settled_latency_ms, settled_intervals) = match realloc.last() {
            None => (None, 0),
            Some(c) => {
                // The new split applies from the next interval; skip one more to drain.
                let from = c.kpms.interval_index + 2;
                if from >= end {
                    (None, 0)
                } else {
                    let window = &samples[from as usize..end as usize];
                    (
                        Some(mean(
                            &mut window.iter().map(|s| s.slices[lat].mean_latency_ms),
                        )),
                        end - from,
                    )
                }
            }
        };
        phases.push(PhaseSummary {
            start_interval: start,
            end_interval: end,
            offered_mbps: generate_traffic(&cfg.scenario1.traffic, start, cfg.slice_count()),
            reallocations: realloc.len(),
            latency_mean_ms: mean(&mut in_phase.iter().map(|s| s.slices[lat].mean_latency_ms)),
            latency_max_ms: in_phase
                .iter()
                .map(|s| s.slices[lat].mean_latency_ms)
                .fold(0.0, f64::max),
            drop_mean: mean(&mut in_phase.iter().map(|s| s.slices[tput].drop_ratio)),
            settled_latency_ms,
            settled_intervals,
        });
    }
    Ok(Scenario1Summary {
        policy: log.policy.clone(),
        cycles: log.cycles.len(),
        intervals,
        backend_calls: log.backend_calls(),
        violation_cycles: log.violation_cycles(),
        reallocations: log.reallocations(),
        tokens: log.total_tokens(),
        phases,
    })
}

// ---------------------------------------------------------------- scenario 2

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyTrial {
    pub policy: String,
    pub latency_ms: Vec<f64>,
    pub drop_ratio: Vec<f64>,
    pub mean_drop: f64,
    pub backend_calls: usize,
    pub reallocations: usize,
    pub tokens: TokenUsage,
    #[serde(skip)]
    pub timeline: Vec<TimelineRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub trial: usize,
    /// Offered rates shared by every policy in this trial.
    pub rates_mbps: Vec<f64>,
    pub policies: Vec<PolicyTrial>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary {
    pub policy: String,
    pub latency: DistributionStats,
    pub drop: DistributionStats,
    pub mean_drop: f64,
    pub max_trial_drop: f64,
    pub latency_p95_ms: f64,
    pub backend_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario2Result {
    pub trials: Vec<TrialResult>,
    pub policies: Vec<PolicySummary>,
}

/// Offered rates of trial `t`, drawn from the configured grid.
pub fn scenario2_draw(cfg: &ExperimentConfig, trial: usize) -> Vec<f64> {
    let profile = TrafficProfile::RandomGrid {
        values_mbps: cfg.scenario2.values_mbps.clone(),
        seed: cfg.seed,
    };
    generate_traffic(&profile, trial as u64, cfg.slice_count())
}

/// Every trial runs the adaptive policy and each fixed baseline on the same
/// offered rates, from an empty system and a fresh experience store. Trials
/// run in parallel and are collected in trial order.
pub fn run_scenario2(
    cfg: &ExperimentConfig,
    trials: usize,
    backend: &BackendChoice,
) -> Result<Scenario2Result> {
    cfg.validate()?;
    if trials == 0 {
        return Err(Error::Argument("trials must be at least 1".into()));
    }
    let lat = slice_of_kind(cfg, SliceKind::LatencyConstrained)?;
    let tput = slice_of_kind(cfg, SliceKind::ThroughputConstrained)?;
    let results: Vec<TrialResult> = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, t, backend, lat, tput))
        .collect::<Result<_>>()?;

    let labels: Vec<String> = results[0]
        .policies
        .iter()
        .map(|p| p.policy.clone())
        .collect();
    let mut policies = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        let latency: Vec<f64> = results
            .iter()
            .flat_map(|r| r.policies[i].latency_ms.iter().copied())
            .collect();
        let drop: Vec<f64> = results
            .iter()
            .flat_map(|r| r.policies[i].drop_ratio.iter().copied())
            .collect();
        let latency = compute_distribution_stats(&latency)?;
        let drop = compute_distribution_stats(&drop)?;
        policies.push(PolicySummary {
            policy: label.clone(),
            mean_drop: drop.mean,
            max_trial_drop: results
                .iter()
                .map(|r| r.policies[i].mean_drop)
                .fold(0.0, f64::max),
            latency_p95_ms: latency.p95,
            backend_calls: results.iter().map(|r| r.policies[i].backend_calls).sum(),
            latency,
            drop,
        });
    }
    Ok(Scenario2Result {
        trials: results,
        policies,
    })
}

fn run_trial(
    cfg: &ExperimentConfig,
    trial: usize,
    backend: &BackendChoice,
    lat: usize,
    tput: usize,
) -> Result<TrialResult> {
    let rates = scenario2_draw(cfg, trial);
    let ctx = LoopContext::from_config(cfg, TrafficProfile::constant(&rates))?;
    let cycles = cfg.scenario2.cycles_per_trial;

    let mut logs = Vec::new();
    let mut b = backend.build(cfg)?;
    let mut log = run_experiment(
        &ctx,
        cfg.initial_allocation()?,
        cycles,
        Policy::Adaptive {
            backend: b.as_mut(),
            gate: true,
        },
        &mut fresh_store(cfg),
    )?;
    log.policy = "adaptive".into();
    logs.push(log);
    for shares in &cfg.scenario2.fixed_baselines {
        let alloc = AllocationRatio::new(shares.clone())?;
        let mut log = run_experiment(
            &ctx,
            alloc.clone(),
            cycles,
            Policy::Fixed,
            &mut fresh_store(cfg),
        )?;
        log.policy = crate::baselines::FixedPolicy::new(alloc).label();
        logs.push(log);
    }

    let policies = logs
        .into_iter()
        .map(|log| {
            let latency_ms: Vec<f64> = log
                .samples()
                .map(|s| s.slices[lat].mean_latency_ms)
                .collect();
            let drop_ratio: Vec<f64> = log.samples().map(|s| s.slices[tput].drop_ratio).collect();
            PolicyTrial {
                policy: log.policy.clone(),
                mean_drop: drop_ratio.iter().sum::<f64>() / drop_ratio.len() as f64,
                backend_calls: log.backend_calls(),
                reallocations: log.reallocations(),
                tokens: log.total_tokens(),
                timeline: log.timeline_rows(),
                latency_ms,
                drop_ratio,
            }
        })
        .collect();
    Ok(TrialResult {
        trial,
        rates_mbps: rates,
        policies,
    })
}

// ---------------------------------------------------------------- tokens

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenComparison {
    pub gated: Vec<TokenUsage>,
    pub ungated: Vec<TokenUsage>,
    pub gated_calls: usize,
    pub ungated_calls: usize,
    pub gated_violation_cycles: usize,
    /// First cycle of the gated run without a violation.
    pub first_quiet_cycle: Option<usize>,
}

/// Scenario 1 twice on the same inputs: once with the detection gate, once
/// calling the backend every cycle.
pub fn run_token_comparison(
    cfg: &ExperimentConfig,
    backend: &BackendChoice,
) -> Result<(TokenComparison, ExperimentLog, ExperimentLog)> {
    let mut b = backend.build(cfg)?;
    let gated = run_scenario1(cfg, b.as_mut(), true, &mut fresh_store(cfg))?.log;
    let mut b = backend.build(cfg)?;
    let ungated = run_scenario1(cfg, b.as_mut(), false, &mut fresh_store(cfg))?.log;
    let cmp = TokenComparison {
        gated: gated.cycles.iter().map(|c| c.cumulative_tokens).collect(),
        ungated: ungated.cycles.iter().map(|c| c.cumulative_tokens).collect(),
        gated_calls: gated.backend_calls(),
        ungated_calls: ungated.backend_calls(),
        gated_violation_cycles: gated.violation_cycles(),
        first_quiet_cycle: gated.cycles.iter().position(|c| !c.violation()),
    };
    Ok((cmp, gated, ungated))
}

// ---------------------------------------------------------------- optimizer table

/// Exhaustive search from an empty system at the given offered rates.
pub fn run_oracle_table(cfg: &ExperimentConfig, rates: &[f64]) -> Result<OptimizerResult> {
    cfg.validate()?;
    if rates.len() != cfg.slice_count() {
        return Err(Error::Argument(format!(
            "{} rates for {} slices",
            rates.len(),
            cfg.slice_count()
        )));
    }
    let sim = cfg.build_sim()?;
    let snapshot = Snapshot {
        state: sim.initial_state(),
        sim,
        offered_mbps: rates.to_vec(),
    };
    brute_force_optimal(&snapshot, &cfg.slices, cfg.radio.violation_threshold)
}

// ---------------------------------------------------------------- output

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn prepare(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("config.json"), cfg)
}

pub fn write_scenario1(dir: &Path, cfg: &ExperimentConfig, result: &Scenario1Result) -> Result<()> {
    prepare(dir, cfg)?;
    result.log.write_timeline_csv(dir.join("timeline.csv"))?;
    write_json(&dir.join("summary.json"), &result.summary)
}

#[derive(Serialize)]
struct CdfRow<'a> {
    policy: &'a str,
    value: f64,
    cdf: f64,
}

#[derive(Serialize)]
struct BoxRow<'a> {
    policy: &'a str,
    count: usize,
    mean: f64,
    min: f64,
    q1: f64,
    median: f64,
    q3: f64,
    max: f64,
    p95: f64,
}

#[derive(Serialize)]
struct TrialTimelineRow<'a> {
    trial: usize,
    policy: &'a str,
    cycle: u64,
    phase: &'a str,
    interval: u64,
    slice_id: usize,
    latency_ms: f64,
    throughput_mbps: f64,
    drop_ratio: f64,
    offered_mbps: f64,
    rb_count: u32,
}

#[derive(Serialize)]
struct Scenario2Summary<'a> {
    trials: usize,
    draws: Vec<&'a [f64]>,
    policies: &'a [PolicySummary],
}

fn write_cdf(
    path: &Path,
    policies: &[PolicySummary],
    pick: fn(&PolicySummary) -> &DistributionStats,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in policies {
        for &(value, cdf) in &pick(p).cdf {
            w.serialize(CdfRow {
                policy: &p.policy,
                value,
                cdf,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_box(
    path: &Path,
    policies: &[PolicySummary],
    pick: fn(&PolicySummary) -> &DistributionStats,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in policies {
        let s = pick(p);
        w.serialize(BoxRow {
            policy: &p.policy,
            count: s.count,
            mean: s.mean,
            min: s.min,
            q1: s.q1,
            median: s.median,
            q3: s.q3,
            max: s.max,
            p95: s.p95,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_scenario2(dir: &Path, cfg: &ExperimentConfig, result: &Scenario2Result) -> Result<()> {
    prepare(dir, cfg)?;
    let mut w = csv::Writer::from_path(dir.join("timeline.csv"))?;
    for t in &result.trials {
        for p in &t.policies {
            for row in &p.timeline {
                w.serialize(TrialTimelineRow {
                    trial: t.trial,
                    policy: &p.policy,
                    cycle: row.cycle,
                    phase: &row.phase,
                    interval: row.interval,
                    slice_id: row.slice_id,
                    latency_ms: row.latency_ms,
                    throughput_mbps: row.throughput_mbps,
                    drop_ratio: row.drop_ratio,
                    offered_mbps: row.offered_mbps,
                    rb_count: row.rb_count,
                })?;
            }
        }
    }
    w.flush()?;
    write_cdf(&dir.join("fig3a_latency_cdf.csv"), &result.policies, |p| {
        &p.latency
    })?;
    write_cdf(&dir.join("fig3b_drop_cdf.csv"), &result.policies, |p| {
        &p.drop
    })?;
    write_box(&dir.join("fig4a_latency_box.csv"), &result.policies, |p| {
        &p.latency
    })?;
    write_box(&dir.join("fig4b_drop_box.csv"), &result.policies, |p| {
        &p.drop
    })?;
    write_json(
        &dir.join("summary.json"),
        &Scenario2Summary {
            trials: result.trials.len(),
            draws: result
                .trials
                .iter()
                .map(|t| t.rates_mbps.as_slice())
                .collect(),
            policies: &result.policies,
        },
    )
}

#[derive(Serialize)]
struct TokenRow {
    cycle: usize,
    gated_prompt: u64,
    gated_completion: u64,
    gated_total: u64,
    ungated_prompt: u64,
    ungated_completion: u64,
    ungated_total: u64,
}

pub fn write_tokens(
    dir: &Path,
    cfg: &ExperimentConfig,
    cmp: &TokenComparison,
    gated: &ExperimentLog,
) -> Result<()> {
    prepare(dir, cfg)?;
    gated.write_timeline_csv(dir.join("timeline.csv"))?;
    let mut w = csv::Writer::from_path(dir.join("fig5_tokens.csv"))?;
    for (cycle, (g, u)) in cmp.gated.iter().zip(&cmp.ungated).enumerate() {
        w.serialize(TokenRow {
            cycle,
            gated_prompt: g.prompt,
            gated_completion: g.completion,
            gated_total: g.total(),
            ungated_prompt: u.prompt,
            ungated_completion: u.completion,
            ungated_total: u.total(),
        })?;
    }
    w.flush()?;
    write_json(&dir.join("summary.json"), cmp)
}

pub fn write_oracle_table(
    dir: &Path,
    cfg: &ExperimentConfig,
    result: &OptimizerResult,
) -> Result<()> {
    prepare(dir, cfg)?;
    result.write_table_csv(dir.join("oracle_table.csv"))?;
    #[derive(Serialize)]
    struct Summary<'a> {
        allocation: &'a AllocationRatio,
        rb_counts: &'a [u32],
        feasible: bool,
        objective: f64,
    }
    write_json(
        &dir.join("summary.json"),
        &Summary {
            allocation: &result.allocation,
            rb_counts: &result.rb_counts,
            feasible: result.feasible,
            objective: result.objective,
        },
    )
}
