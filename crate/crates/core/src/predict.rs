//! One-interval lookahead on a cloned simulation state, shared by the
//! heuristic decision backend and the exhaustive optimizer.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{KpmSample, SliceKind, SliceSpec, ThroughputTarget};
use crate::radio::{RadioSim, SimState};
use crate::sla::{assess, RiskAssessment};

/// Frozen view of the live simulation, safe to roll forward without touching
/// the original.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub sim: RadioSim,
    pub state: SimState,
    pub offered_mbps: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub rb_counts: Vec<u32>,
    pub kpm: KpmSample,
    pub assessment: RiskAssessment,
    /// Total predicted throughput of throughput-constrained slices (Mbps).
    pub objective: f64,
    pub feasible: bool,
}

impl Snapshot {
    /// One-interval prediction.
    pub fn predict(
        &self,
        rb_counts: &[u32],
        specs: &[SliceSpec],
        theta: f64,
    ) -> Result<Prediction> {
        self.predict_horizon(rb_counts, specs, theta, 1)
    }

    /// Holds `rb_counts` and the current offered rates for `intervals`
    /// intervals. The reported KPMs and assessment are those of the interval
    /// with the lowest compliance index (the latest on ties); the objective is
    /// the mean over the horizon; feasibility must hold in every interval.
    pub fn predict_horizon(
        &self,
        rb_counts: &[u32],
        specs: &[SliceSpec],
        theta: f64,
        intervals: u64,
    ) -> Result<Prediction> {
        if intervals == 0 {
            return Err(Error::Argument(
                "prediction horizon must be at least one interval".into(),
            ));
        }
        let mut state = self.state.clone();
        let mut worst: Option<(KpmSample, RiskAssessment)> = None;
        let mut objective = 0.0;
        let mut feasible = true;
        for _ in 0..intervals {
            let kpm = self.sim.step(&mut state, &self.offered_mbps, rb_counts)?;
            let assessment = assess(std::slice::from_ref(&kpm), specs, theta)?;
            objective += specs
                .iter()
                .zip(&kpm.slices)
                .filter(|(s, _)| s.kind() == SliceKind::ThroughputConstrained)
                .map(|(_, k)| k.mean_throughput_mbps)
                .sum::<f64>();
            feasible &= meets_constraints(&kpm, specs);
            if worst
                .as_ref()
                .is_none_or(|(_, w)| assessment.sigma <= w.sigma)
            {
                worst = Some((kpm, assessment));
            }
        }
        let (kpm, assessment) = worst.expect("at least one interval");
        Ok(Prediction {
            rb_counts: rb_counts.to_vec(),
            kpm,
            assessment,
            objective: objective / intervals as f64,
            feasible,
        })
    }

    /// Predicts every split in `splits`, in parallel, preserving order.
    pub fn predict_all(
        &self,
        splits: &[Vec<u32>],
        specs: &[SliceSpec],
        theta: f64,
    ) -> Result<Vec<Prediction>> {
        self.predict_all_horizon(splits, specs, theta, 1)
    }

    pub fn predict_all_horizon(
        &self,
        splits: &[Vec<u32>],
        specs: &[SliceSpec],
        theta: f64,
        intervals: u64,
    ) -> Result<Vec<Prediction>> {
        splits
            .par_iter()
            .map(|s| self.predict_horizon(s, specs, theta, intervals))
            .collect()
    }
}

/// Latency below target for latency slices, throughput above a fixed floor
/// for throughput slices. Demand-capped slices carry no floor.
fn meets_constraints(kpm: &KpmSample, specs: &[SliceSpec]) -> bool {
    specs
        .iter()
        .zip(&kpm.slices)
        .all(|(spec, k)| match spec.kind() {
            SliceKind::LatencyConstrained => {
                !k.is_starved() && k.mean_latency_ms < spec.sla_target()
            }
            SliceKind::ThroughputConstrained => match spec.target_mode() {
                ThroughputTarget::Fixed => k.mean_throughput_mbps > spec.sla_target(),
                ThroughputTarget::DemandCapped => true,
            },
        })
}

/// Every split of `total` RBs over `slices` slices with at least one RB
/// each, in lexicographic order.
pub fn enumerate_splits(total: u32, slices: usize) -> Result<Vec<Vec<u32>>> {
    if slices == 0 || (total as usize) < slices {
        return Err(Error::InfeasibleAllocation(format!(
            "{total} RBs cannot cover {slices} slices"
        )));
    }
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(slices);
    fn rec(remaining: u32, left: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if left == 1 {
            current.push(remaining);
            out.push(current.clone());
            current.pop();
            return;
        }
        for c in 1..=remaining - (left as u32 - 1) {
            current.push(c);
            rec(remaining - c, left - 1, current, out);
            current.pop();
        }
    }
    rec(total, slices, &mut current, &mut out);
    Ok(out)
}

/// RBs that change hands between two splits.
pub fn rbs_moved(a: &[u32], b: &[u32]) -> u32 {
    a.iter().zip(b).map(|(x, y)| x.abs_diff(*y)).sum::<u32>() / 2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_cover_compositions() {
        assert_eq!(
            enumerate_splits(4, 2).unwrap(),
            vec![vec![1, 3], vec![2, 2], vec![3, 1]]
        );
        // C(9, 2) compositions of 10 into 3 positive parts.
        assert_eq!(enumerate_splits(10, 3).unwrap().len(), 36);
        assert!(enumerate_splits(2, 3).is_err());
        assert_eq!(enumerate_splits(5, 1).unwrap(), vec![vec![5]]);
    }

    #[test]
    fn moved_counts_each_rb_once() {
        assert_eq!(rbs_moved(&[53, 53], &[60, 46]), 7);
        assert_eq!(rbs_moved(&[5, 3, 2], &[3, 3, 4]), 2);
    }
}
