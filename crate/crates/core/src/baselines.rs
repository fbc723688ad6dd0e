//! Fixed-ratio baselines and the exhaustive small-instance optimizer.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AllocationRatio, SliceSpec};
use crate::predict::{enumerate_splits, Prediction, Snapshot};

/// Returns the same shares every cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPolicy {
    shares: AllocationRatio,
}

impl FixedPolicy {
    pub fn new(shares: AllocationRatio) -> Self {
        Self { shares }
    }

    pub fn allocation(&self, _cycle: u64) -> &AllocationRatio {
        &self.shares
    }

    /// Label such as `70-30`.
    pub fn label(&self) -> String {
        self.shares
            .shares()
            .iter()
            .map(|s| format!("{:.0}", s * 100.0))
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// The 50-50, 60-40 and 70-30 splits.
pub fn standard_baselines() -> Vec<FixedPolicy> {
    [[0.5, 0.5], [0.6, 0.4], [0.7, 0.3]]
        .iter()
        .map(|s| FixedPolicy::new(AllocationRatio::new(s.to_vec()).expect("valid baseline")))
        .collect()
}

/// One scored candidate split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateRow {
    pub rb_counts: Vec<u32>,
    pub latency_ms: Vec<f64>,
    pub throughput_mbps: Vec<f64>,
    pub drop_ratio: Vec<f64>,
    pub sigma: f64,
    pub objective: f64,
    pub feasible: bool,
}

impl From<&Prediction> for CandidateRow {
    fn from(p: &Prediction) -> Self {
        Self {
            rb_counts: p.rb_counts.clone(),
            latency_ms: p.kpm.slices.iter().map(|k| k.mean_latency_ms).collect(),
            throughput_mbps: p
                .kpm
                .slices
                .iter()
                .map(|k| k.mean_throughput_mbps)
                .collect(),
            drop_ratio: p.kpm.slices.iter().map(|k| k.drop_ratio).collect(),
            sigma: p.assessment.sigma,
            objective: p.objective,
            feasible: p.feasible,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerResult {
    pub allocation: AllocationRatio,
    pub rb_counts: Vec<u32>,
    pub feasible: bool,
    /// Predicted total throughput of throughput-constrained slices (Mbps).
    pub objective: f64,
    /// Every enumerated split in lexicographic order.
    pub table: Vec<CandidateRow>,
}

impl OptimizerResult {
    pub fn write_table_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let n = self.rb_counts.len();
        let mut header = vec!["split".to_string()];
        for i in 0..n {
            header.push(format!("rb_{i}"));
        }
        for i in 0..n {
            header.extend([
                format!("latency_ms_{i}"),
                format!("throughput_mbps_{i}"),
                format!("drop_ratio_{i}"),
            ]);
        }
        header.extend(["sigma".into(), "objective_mbps".into(), "feasible".into()]);
        w.write_record(&header)?;
        for row in &self.table {
            let split: Vec<String> = row.rb_counts.iter().map(u32::to_string).collect();
            let mut rec = vec![split.join("/")];
            rec.extend(split);
            for i in 0..n {
                rec.extend([
                    format!("{:.6}", row.latency_ms[i]),
                    format!("{:.6}", row.throughput_mbps[i]),
                    format!("{:.6}", row.drop_ratio[i]),
                ]);
            }
            rec.extend([
                format!("{:.9}", row.sigma),
                format!("{:.6}", row.objective),
                row.feasible.to_string(),
            ]);
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Enumerates every integer split (each slice at least one RB) and predicts
/// one interval for each. Among splits meeting every latency target and
/// every fixed throughput floor, returns the one with the highest predicted
/// throughput-slice total. If none qualifies, returns the split with the
/// highest compliance index and `feasible = false`. Ties go to fewer RBs on
/// latency slices, then to the lower slice-0 count.
pub fn brute_force_optimal(
    snapshot: &Snapshot,
    specs: &[SliceSpec],
    theta: f64,
) -> Result<OptimizerResult> {
    if !(2..=3).contains(&specs.len()) {
        return Err(Error::UnsupportedScale(format!(
            "exhaustive search supports 2 or 3 slices, got {}",
            specs.len()
        )));
    }
    let total = snapshot.sim.radio().total_rbs;
    let splits = enumerate_splits(total, specs.len())?;
    let predictions = snapshot.predict_all(&splits, specs, theta)?;

    let latency_rbs = |p: &Prediction| -> u32 {
        specs
            .iter()
            .zip(&p.rb_counts)
            .filter(|(s, _)| s.is_latency())
            .map(|(_, &c)| c)
            .sum()
    };
    // Lower key wins on ties.
    let tie_key = |p: &Prediction| (latency_rbs(p), p.rb_counts[0]);
    let feasible = predictions.iter().any(|p| p.feasible);
    let best = predictions
        .iter()
        .filter(|p| p.feasible || !feasible)
        .reduce(|best, p| {
            let score = |q: &Prediction| {
                if feasible {
                    q.objective
                } else {
                    q.assessment.sigma
                }
            };
            match score(p).total_cmp(&score(best)) {
                std::cmp::Ordering::Greater => p,
                std::cmp::Ordering::Less => best,
                std::cmp::Ordering::Equal => {
                    if tie_key(p) < tie_key(best) {
                        p
                    } else {
                        best
                    }
                }
            }
        })
        .ok_or_else(|| Error::InternalState("no candidate splits".into()))?;

    Ok(OptimizerResult {
        allocation: AllocationRatio::from_rb_counts(&best.rb_counts)?,
        rb_counts: best.rb_counts.clone(),
        feasible,
        objective: best.objective,
        table: predictions.iter().map(CandidateRow::from).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RadioConfig, SliceKind, ThroughputTarget};
    use crate::radio::{QueueConfig, RadioSim, UeChannelState};

    const SINR: f64 = 5500.0;

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
            UeChannelState::uniform(0, 0, SINR),
            UeChannelState::uniform(1, 1, SINR),
        ];
        let sim = RadioSim::new(radio, QueueConfig::default(), channels, 2).unwrap();
        Snapshot {
            state: sim.initial_state(),
            sim,
            offered_mbps: rates.to_vec(),
        }
    }

    /// Event-by-event FIFO with evenly spaced arrivals, constant service rate
    /// and a finite buffer, starting empty. Returns (delivered, dropped,
    /// offered, mean latency ms) over `horizon_ms`.
    fn lindley(
        rate_mbps: f64,
        service_bps: f64,
        packet_bits: f64,
        buffer: usize,
        horizon_ms: f64,
    ) -> (u64, u64, u64, f64) {
        if rate_mbps == 0.0 {
            return (0, 0, 0, 0.0);
        }
        let gap = packet_bits / (rate_mbps * 1000.0);
        let service = packet_bits / (service_bps / 1000.0);
        let mut in_flight: std::collections::VecDeque<f64> = std::collections::VecDeque::new();
        let (mut delivered, mut dropped, mut latency) = (0u64, 0u64, 0.0);
        let mut last_finish = 0.0f64;
        let mut i = 1u64;
        loop {
            let at = i as f64 * gap;
            if at > horizon_ms + 1e-9 {
                break;
            }
            i += 1;
            while in_flight.front().is_some_and(|&f| f <= at) {
                in_flight.pop_front();
            }
            if in_flight.len() >= buffer {
                dropped += 1;
                continue;
            }
            let finish = at.max(last_finish) + service;
            last_finish = finish;
            in_flight.push_back(finish);
            if finish <= horizon_ms {
                delivered += 1;
                latency += finish - at;
            }
        }
        let mean = if delivered == 0 {
            0.0
        } else {
            latency / delivered as f64
        };
        (delivered, dropped, i - 1, mean)
    }

    #[test]
    fn fixed_policies_are_constant() {
        let b = standard_baselines();
        assert_eq!(b.len(), 3);
        for (p, want) in b.iter().zip([[0.5, 0.5], [0.6, 0.4], [0.7, 0.3]]) {
            for cycle in [0, 7, 1000] {
                assert_eq!(p.allocation(cycle).shares(), &want);
            }
        }
        assert_eq!(b[2].label(), "70-30");
    }

    #[test]
    fn ten_rb_table_matches_hand_enumeration() {
        // 1.8 MHz per RB: about 22.4 Mbps per RB at the default SINR.
        let bw = 1.8e6;
        let snap = snapshot(10, bw, &[120.0, 80.0]);
        let res = brute_force_optimal(&snap, &specs(), 0.7).unwrap();
        assert_eq!(res.table.len(), 9);
        let q = QueueConfig::default();
        let per_rb = bw * (1.0 + SINR).log2();
        for (x, row) in (1..=9u32).zip(&res.table) {
            assert_eq!(row.rb_counts, vec![x, 10 - x]);
            for (slice, (rate, rbs)) in [(120.0, x), (80.0, 10 - x)].into_iter().enumerate() {
                let (delivered, dropped, offered, mean) = lindley(
                    rate,
                    per_rb * rbs as f64,
                    q.packet_bits(),
                    q.buffer_capacity_packets as usize,
                    1000.0,
                );
                assert!(
                    (row.drop_ratio[slice] - dropped as f64 / offered as f64).abs() < 1e-9,
                    "x={x} slice={slice}"
                );
                let tput = delivered as f64 * q.packet_bits() / 1e6;
                assert!(
                    (row.throughput_mbps[slice] - tput).abs() < 1e-9,
                    "x={x} slice={slice}"
                );
                assert!(
                    (row.latency_ms[slice] - mean).abs() < 1e-6,
                    "x={x} slice={slice}"
                );
            }
        }
        // 5 RBs carry ~112 Mbps < 120; 6 RBs carry ~134 Mbps. S2 needs 4 RBs for 80 Mbps.
        assert!(!res.table[4].feasible);
        assert!(res.table[5].feasible);
        assert!(res.feasible);
        assert_eq!(res.rb_counts, vec![6, 4]);
        assert!((res.objective - res.table[5].objective).abs() < 1e-12);
    }

    #[test]
    fn idle_latency_slice_gets_one_rb() {
        let snap = snapshot(20, 180e3 * 5.0, &[0.0, 500.0]);
        let res = brute_force_optimal(&snap, &specs(), 0.7).unwrap();
        assert!(res.feasible);
        assert_eq!(res.rb_counts, vec![1, 19]);
    }

    #[test]
    fn symmetric_slack_picks_fewest_latency_rbs() {
        let snap = snapshot(12, 180e3 * 5.0, &[5.0, 5.0]);
        let res = brute_force_optimal(&snap, &specs(), 0.7).unwrap();
        assert!(res.feasible);
        // Every split that carries the load has the same objective; the
        // tie-break gives the latency slice as few RBs as still feasible.
        let first_ok = res.table.iter().find(|r| r.feasible).unwrap();
        assert_eq!(res.rb_counts, first_ok.rb_counts);
        let sym = res
            .table
            .iter()
            .find(|r| r.rb_counts == vec![6, 6])
            .unwrap();
        assert!((res.objective - sym.objective).abs() < 1e-9);
    }

    #[test]
    fn infeasible_falls_back_to_best_sigma() {
        let snap = snapshot(4, 180e3, &[500.0, 500.0]);
        let res = brute_force_optimal(&snap, &specs(), 0.7).unwrap();
        assert!(!res.feasible);
        let best = res
            .table
            .iter()
            .map(|r| r.sigma)
            .fold(f64::NEG_INFINITY, f64::max);
        let chosen = res
            .table
            .iter()
            .find(|r| r.rb_counts == res.rb_counts)
            .unwrap();
        assert_eq!(chosen.sigma, best);
    }

    #[test]
    fn four_slices_unsupported() {
        let snap = snapshot(10, 180e3, &[1.0, 1.0]);
        let mut s = specs();
        for id in 2..4 {
            s.push(
                SliceSpec::new(id, SliceKind::LatencyConstrained, 10.0, 1.0, 10.0, 0.2).unwrap(),
            );
        }
        assert!(matches!(
            brute_force_optimal(&snap, &s, 0.7),
            Err(Error::UnsupportedScale(_))
        ));
    }

    #[test]
    fn feasible_result_satisfies_constraints() {
        let snap = snapshot(10, 1.8e6, &[120.0, 80.0]);
        let res = brute_force_optimal(&snap, &specs(), 0.7).unwrap();
        let row = res
            .table
            .iter()
            .find(|r| r.rb_counts == res.rb_counts)
            .unwrap();
        assert!(row.latency_ms[0] < 10.0);
    }
}
