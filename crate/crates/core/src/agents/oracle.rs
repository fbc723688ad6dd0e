//! Offline stand-in for the language model: scores every RB split with a
//! one-interval rollout and picks the best predicted compliance index.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{count_tokens, DecisionBackend, DecisionOutcome, DecisionRequest, TokenMode};
use crate::error::{Error, Result};
use crate::model::{ratio_to_rb_counts, AllocationRatio, SliceSpec};
use crate::predict::{enumerate_splits, rbs_moved, Prediction, Snapshot};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Candidates whose predicted sigma is within this distance of the best
    /// are treated as equally compliant and separated by the tie-breaks.
    pub sigma_band: f64,
    /// Intervals simulated per candidate. `None` covers one full control
    /// cycle (monitoring plus wait intervals), the span the choice stays in
    /// force.
    #[serde(default)]
    pub lookahead_intervals: Option<u64>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            sigma_band: 1e-3,
            lookahead_intervals: None,
        }
    }
}

/// Each candidate split is scored by its worst predicted interval over the
/// lookahead. Selection rule:
/// 1. keep candidates with sigma >= best - band and sigma >= the current split's sigma;
/// 2. maximize predicted throughput of throughput-constrained slices;
/// 3. minimize RBs moved from the current split;
/// 4. lexicographically smallest split.
pub fn heuristic_oracle_decide(
    snapshot: &Snapshot,
    specs: &[SliceSpec],
    theta: f64,
    current: &AllocationRatio,
    config: &OracleConfig,
) -> Result<AllocationRatio> {
    let radio = snapshot.sim.radio();
    let total = radio.total_rbs;
    let horizon = config
        .lookahead_intervals
        .unwrap_or(1 + radio.wait_intervals());
    if specs.len() > 3 {
        return Err(Error::UnsupportedScale(format!(
            "oracle enumerates at most 3 slices, got {}",
            specs.len()
        )));
    }
    let current_split = ratio_to_rb_counts(current, total)?;
    let splits = enumerate_splits(total, specs.len())?;
    let predictions = snapshot.predict_all_horizon(&splits, specs, theta, horizon)?;
    let chosen = select(&predictions, &current_split, config.sigma_band)?;
    AllocationRatio::from_rb_counts(&chosen.rb_counts)
}

pub(crate) fn select<'a>(
    predictions: &'a [Prediction],
    current: &[u32],
    band: f64,
) -> Result<&'a Prediction> {
    let sigma_of = |p: &Prediction| p.assessment.sigma;
    let best = predictions
        .iter()
        .map(sigma_of)
        .fold(f64::NEG_INFINITY, f64::max);
    let current_sigma = predictions
        .iter()
        .find(|p| p.rb_counts == current)
        .map(sigma_of)
        .ok_or_else(|| Error::InternalState("current split missing from candidates".into()))?;
    predictions
        .iter()
        .filter(|p| sigma_of(p) >= best - band && sigma_of(p) >= current_sigma)
        .max_by(|a, b| {
            a.objective
                .total_cmp(&b.objective)
                .then_with(|| {
                    rbs_moved(&b.rb_counts, current).cmp(&rbs_moved(&a.rb_counts, current))
                })
                .then_with(|| b.rb_counts.cmp(&a.rb_counts))
                .then(Ordering::Equal)
        })
        .ok_or_else(|| Error::InternalState("no candidate allocation".into()))
}

#[derive(Debug, Clone, Default)]
pub struct HeuristicOracle {
    config: OracleConfig,
}

impl HeuristicOracle {
    pub fn new(config: OracleConfig) -> Self {
        Self { config }
    }
}

impl DecisionBackend for HeuristicOracle {
    fn label(&self) -> &str {
        "oracle"
    }

    fn propose_allocation(&mut self, request: &DecisionRequest) -> Result<DecisionOutcome> {
        let allocation = heuristic_oracle_decide(
            &request.snapshot,
            &request.specs,
            request.theta,
            &request.current,
            &self.config,
        )?;
        let raw_response = serde_json::json!({ "shares": allocation.shares() }).to_string();
        Ok(DecisionOutcome {
            prompt_tokens: count_tokens(&request.prompt.rendered_text, TokenMode::Approximate),
            completion_tokens: count_tokens(&raw_response, TokenMode::Approximate),
            backend_label: self.label().to_string(),
            raw_response,
            allocation,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RadioConfig, SliceKind, ThroughputTarget};
    use crate::radio::{QueueConfig, RadioSim, UeChannelState};
    use proptest::prelude::*;

    fn specs() -> Vec<SliceSpec> {
        vec![
            SliceSpec::new(0, SliceKind::LatencyConstrained, 10.0, 2.0, 10.0, 0.2).unwrap(),
            SliceSpec::new(
                1,
                SliceKind::ThroughputConstrained,
                125.0,
                1.0,
                -400.0,
                -0.005,
            )
            .unwrap()
            .with_target_mode(ThroughputTarget::DemandCapped),
        ]
    }

    fn snapshot(total_rbs: u32, rb_bandwidth_hz: f64, rates: &[f64]) -> Snapshot {
        let radio = RadioConfig {
            total_rbs,
            rb_bandwidth_hz,
            ..RadioConfig::default()
        };
        let channels = vec![
            UeChannelState::uniform(0, 0, 5500.0),
            UeChannelState::uniform(1, 1, 5500.0),
        ];
        let sim = RadioSim::new(radio, QueueConfig::default(), channels, 2).unwrap();
        Snapshot {
            state: sim.initial_state(),
            sim,
            offered_mbps: rates.to_vec(),
        }
    }

    #[test]
    fn light_load_keeps_even_split() {
        let snap = snapshot(106, 180e3, &[20.0, 20.0]);
        let cur = AllocationRatio::equal(2);
        let next =
            heuristic_oracle_decide(&snap, &specs(), 0.7, &cur, &OracleConfig::default()).unwrap();
        assert_eq!(ratio_to_rb_counts(&next, 106).unwrap(), vec![53, 53]);
    }

    #[test]
    fn overloaded_latency_slice_gets_relief() {
        let snap = snapshot(10, 1.8e6, &[120.0, 80.0]);
        let cur = AllocationRatio::equal(2);
        let next =
            heuristic_oracle_decide(&snap, &specs(), 0.7, &cur, &OracleConfig::default()).unwrap();
        let counts = ratio_to_rb_counts(&next, 10).unwrap();
        let p = snap.predict(&counts, &specs(), 0.7).unwrap();
        assert!(counts[0] >= 6, "{counts:?}");
        assert!(p.kpm.slices[0].mean_latency_ms < 10.0);
    }

    #[test]
    fn symmetric_inputs_give_symmetric_choice() {
        // Two identical latency slices under identical load.
        let s = vec![
            SliceSpec::new(0, SliceKind::LatencyConstrained, 10.0, 1.0, 10.0, 0.2).unwrap(),
            SliceSpec::new(1, SliceKind::LatencyConstrained, 10.0, 1.0, 10.0, 0.2).unwrap(),
        ];
        let snap = snapshot(10, 1.8e6, &[90.0, 90.0]);
        let next = heuristic_oracle_decide(
            &snap,
            &s,
            0.7,
            &AllocationRatio::equal(2),
            &OracleConfig::default(),
        )
        .unwrap();
        assert_eq!(ratio_to_rb_counts(&next, 10).unwrap(), vec![5, 5]);
    }

    #[test]
    fn rejects_more_than_three_slices() {
        let mut s = specs();
        s.push(SliceSpec::new(2, SliceKind::LatencyConstrained, 10.0, 1.0, 10.0, 0.2).unwrap());
        s.push(SliceSpec::new(3, SliceKind::LatencyConstrained, 10.0, 1.0, 10.0, 0.2).unwrap());
        let snap = snapshot(10, 1.8e6, &[1.0, 1.0]);
        let r = heuristic_oracle_decide(
            &snap,
            &s,
            0.7,
            &AllocationRatio::equal(4),
            &OracleConfig::default(),
        );
        assert!(matches!(r, Err(Error::UnsupportedScale(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn never_worse_than_current(r1 in 0.0f64..200.0, r2 in 0.0f64..200.0, cur in 1u32..20) {
            let snap = snapshot(20, 1.8e6, &[r1, r2]);
            let current = AllocationRatio::from_rb_counts(&[cur, 20 - cur]).unwrap();
            let next = heuristic_oracle_decide(&snap, &specs(), 0.7, &current, &OracleConfig::default()).unwrap();
            let a = snap.predict_horizon(&ratio_to_rb_counts(&next, 20).unwrap(), &specs(), 0.7, 6).unwrap();
            let b = snap.predict_horizon(&[cur, 20 - cur], &specs(), 0.7, 6).unwrap();
            prop_assert!(a.assessment.sigma >= b.assessment.sigma);
        }
    }
}
