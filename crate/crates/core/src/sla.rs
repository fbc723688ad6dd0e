//! SLA violation level, sigmoid risk factor, compliance index and the
//! threshold-gated detection decision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{KpmSample, SliceKind, SliceKpm, SliceSpec, ThroughputTarget};

/// Risk assigned to a starved latency slice.
pub const MAX_RISK: f64 = 1.0 - f64::EPSILON;

/// Tolerance for treating the compliance index as zero at runtime.
pub const SIGMA_ZERO_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceRisk {
    pub slice_id: usize,
    /// `None` when the slice delivered nothing while traffic was waiting.
    pub epsilon: Option<f64>,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub interval_index: u64,
    pub slices: Vec<SliceRisk>,
    pub sigma: f64,
    pub violation_detected: bool,
}

impl RiskAssessment {
    pub fn max_rho(&self) -> f64 {
        self.slices
            .iter()
            .map(|s| s.rho)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn rhos(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.rho).collect()
    }

    pub fn is_fully_compliant(&self) -> bool {
        self.sigma.abs() <= SIGMA_ZERO_TOLERANCE
    }
}

/// Normalized SLA excess: `(L - target) / target` for latency slices and
/// `(R - target) / target` for throughput slices.
pub fn violation_level(kpm: &SliceKpm, spec: &SliceSpec) -> Result<f64> {
    match spec.kind() {
        SliceKind::LatencyConstrained => {
            if kpm.is_starved() {
                return Err(Error::NoData {
                    slice_id: spec.slice_id(),
                });
            }
            Ok((kpm.mean_latency_ms - spec.sla_target()) / spec.sla_target())
        }
        SliceKind::ThroughputConstrained => {
            let target = match spec.target_mode() {
                ThroughputTarget::Fixed => spec.sla_target(),
                ThroughputTarget::DemandCapped => {
                    if kpm.offered_load_mbps <= 0.0 {
                        // Nothing offered: nothing owed.
                        return Ok(0.0);
                    }
                    spec.sla_target().min(kpm.offered_load_mbps)
                }
            };
            Ok((kpm.mean_throughput_mbps - target) / target)
        }
    }
}

/// Logistic risk `1 / (1 + exp(-a (eps - b)))`, kept strictly inside (0, 1).
pub fn risk_factor(epsilon: f64, spec: &SliceSpec) -> f64 {
    let z = spec.shape_a() * (epsilon - spec.shape_b());
    let rho = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    rho.clamp(f64::MIN_POSITIVE, MAX_RISK)
}

/// `-sum_k w_k rho_k^2`.
pub fn compliance_index(rhos: &[f64], weights: &[f64]) -> Result<f64> {
    if rhos.len() != weights.len() {
        return Err(Error::Argument(format!(
            "{} risk factors but {} weights",
            rhos.len(),
            weights.len()
        )));
    }
    Ok(-rhos
        .iter()
        .zip(weights)
        .map(|(r, w)| w * r * r)
        .sum::<f64>())
}

/// Arithmetic mean of a window of samples, slice by slice. Packet counters
/// are summed so starvation over the whole window is still visible.
pub fn mean_sample(window: &[KpmSample]) -> Result<KpmSample> {
    let first = window
        .first()
        .ok_or_else(|| Error::Argument("empty KPM window".into()))?;
    let n = window.len() as f64;
    let mut slices = first.slices.clone();
    for s in &mut slices {
        s.mean_latency_ms = 0.0;
        s.mean_throughput_mbps = 0.0;
        s.drop_ratio = 0.0;
        s.offered_load_mbps = 0.0;
        s.offered_packets = 0;
        s.delivered_packets = 0;
        s.dropped_packets = 0;
    }
    for sample in window {
        if sample.slices.len() != slices.len() {
            return Err(Error::Argument("KPM window mixes slice counts".into()));
        }
        for (acc, s) in slices.iter_mut().zip(&sample.slices) {
            acc.mean_latency_ms += s.mean_latency_ms / n;
            acc.mean_throughput_mbps += s.mean_throughput_mbps / n;
            acc.drop_ratio += s.drop_ratio / n;
            acc.offered_load_mbps += s.offered_load_mbps / n;
            acc.offered_packets += s.offered_packets;
            acc.delivered_packets += s.delivered_packets;
            acc.dropped_packets += s.dropped_packets;
        }
    }
    if let Some(last) = window.last() {
        for (acc, s) in slices.iter_mut().zip(&last.slices) {
            acc.queued_end = s.queued_end;
            acc.rb_count = s.rb_count;
        }
    }
    Ok(KpmSample {
        interval_index: window
            .last()
            .map_or(first.interval_index, |s| s.interval_index),
        slices,
    })
}

/// Detection step: average the window, score every slice and gate on theta.
pub fn assess(window: &[KpmSample], specs: &[SliceSpec], theta: f64) -> Result<RiskAssessment> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Argument(format!("threshold {theta} outside (0,1)")));
    }
    let mean = mean_sample(window)?;
    if mean.slices.len() != specs.len() {
        return Err(Error::Argument(format!(
            "{} slice measurements for {} slice specs",
            mean.slices.len(),
            specs.len()
        )));
    }
    let mut slices = Vec::with_capacity(specs.len());
    for (kpm, spec) in mean.slices.iter().zip(specs) {
        let risk = match violation_level(kpm, spec) {
            Ok(epsilon) => SliceRisk {
                slice_id: spec.slice_id(),
                epsilon: Some(epsilon),
                rho: risk_factor(epsilon, spec),
            },
            Err(Error::NoData { .. }) => SliceRisk {
                slice_id: spec.slice_id(),
                epsilon: None,
                rho: MAX_RISK,
            },
            Err(e) => return Err(e),
        };
        slices.push(risk);
    }
    let rhos: Vec<f64> = slices.iter().map(|s| s.rho).collect();
    let weights: Vec<f64> = specs.iter().map(SliceSpec::weight).collect();
    let sigma = compliance_index(&rhos, &weights)?;
    let violation_detected = rhos.iter().any(|&r| r > theta);
    Ok(RiskAssessment {
        interval_index: mean.interval_index,
        slices,
        sigma,
        violation_detected,
    })
}
