use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::model::{AllocationRatio, KpmSample, SliceKind, SliceSpec};
use crate::rag::ExperienceRecord;
use crate::sla::RiskAssessment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSlice {
    pub slice_id: usize,
    pub kind: SliceKind,
    pub sla_target: f64,
    pub weight: f64,
    /// Measured latency for latency slices, throughput for throughput slices.
    pub measured: f64,
    pub drop_ratio: f64,
    pub offered_mbps: f64,
    pub rho: f64,
    pub share: f64,
    pub rb_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptExample {
    pub rates: Vec<f64>,
    pub shares: Vec<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptPayload {
    pub interval_index: u64,
    pub total_rbs: u32,
    pub sigma: f64,
    pub slices: Vec<PromptSlice>,
    pub examples: Vec<PromptExample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaPrompt {
    pub rendered_text: String,
    pub payload: PromptPayload,
}

impl MetaPrompt {
    pub fn from_payload(payload: PromptPayload) -> Self {
        Self {
            rendered_text: render(&payload),
            payload,
        }
    }
}

pub fn build_meta_prompt(
    assessment: &RiskAssessment,
    kpms: &KpmSample,
    current_allocation: &AllocationRatio,
    retrieved: &[ExperienceRecord],
    specs: &[SliceSpec],
    total_rbs: u32,
) -> MetaPrompt {
    let slices = specs
        .iter()
        .zip(&kpms.slices)
        .zip(&assessment.slices)
        .zip(current_allocation.shares())
        .map(|(((spec, kpm), risk), &share)| PromptSlice {
            slice_id: spec.slice_id(),
            kind: spec.kind(),
            sla_target: spec.sla_target(),
            weight: spec.weight(),
            measured: match spec.kind() {
                SliceKind::LatencyConstrained => kpm.mean_latency_ms,
                SliceKind::ThroughputConstrained => kpm.mean_throughput_mbps,
            },
            drop_ratio: kpm.drop_ratio,
            offered_mbps: kpm.offered_load_mbps,
            rho: risk.rho,
            share,
            rb_count: kpm.rb_count,
        })
        .collect();
    let examples = retrieved
        .iter()
        .map(|r| PromptExample {
            rates: r.arrival_rates_mbps.clone(),
            shares: r.allocation.shares().to_vec(),
            sigma: r.resulting_sigma,
        })
        .collect();
    MetaPrompt::from_payload(PromptPayload {
        interval_index: assessment.interval_index,
        total_rbs,
        sigma: assessment.sigma,
        slices,
        examples,
    })
}

fn list(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

fn render(p: &PromptPayload) -> String {
    let mut out = String::new();
    // Writing into a String cannot fail.
    let _ = writeln!(
        out,
        "You are the resource allocation agent of a RAN slicing controller. \
         Split {} resource blocks among {} slices so that every slice meets its SLA; \
         prefer the highest throughput for throughput-constrained slices once latency \
         targets are met.",
        p.total_rbs,
        p.slices.len()
    );
    out.push_str("\nSLA targets:\n");
    for s in &p.slices {
        let _ = match s.kind {
            SliceKind::LatencyConstrained => writeln!(
                out,
                "- slice {}: latency-constrained, mean latency below {:.3} ms, priority weight {:.3}",
                s.slice_id, s.sla_target, s.weight
            ),
            SliceKind::ThroughputConstrained => writeln!(
                out,
                "- slice {}: throughput-constrained, throughput target {:.3} Mbps, priority weight {:.3}",
                s.slice_id, s.sla_target, s.weight
            ),
        };
    }
    let _ = writeln!(
        out,
        "\nCurrent measurements (interval {}):",
        p.interval_index
    );
    for s in &p.slices {
        let (label, unit) = match s.kind {
            SliceKind::LatencyConstrained => ("latency", "ms"),
            SliceKind::ThroughputConstrained => ("throughput", "Mbps"),
        };
        let _ = writeln!(
            out,
            "- slice {}: offered {:.3} Mbps, {label} {:.3} {unit}, drop ratio {:.3}, risk {:.3}, share {:.3} ({} RBs)",
            s.slice_id, s.offered_mbps, s.measured, s.drop_ratio, s.rho, s.share, s.rb_count
        );
    }
    let _ = writeln!(out, "\nSLA compliance index: {:.3} (0 is best)", p.sigma);
    out.push_str("\nHistorical examples at similar arrival rates:\n");
    if p.examples.is_empty() {
        out.push_str("- no historical examples available\n");
    }
    for e in &p.examples {
        let _ = writeln!(
            out,
            "- rates {} Mbps -> shares {} -> compliance {:.3}",
            list(&e.rates),
            list(&e.shares),
            e.sigma
        );
    }
    let _ = write!(
        out,
        "\nRespond with a single JSON object {{\"shares\": [..]}} holding one share per slice in \
         slice order. Shares must lie in [0,1] and sum to 1."
    );
    out
}

/// Short prompt for the optional prompted detection mode.
pub fn build_detection_prompt(kpms: &KpmSample, specs: &[SliceSpec], theta: f64) -> String {
    let mut out = String::from(
        "You are the SLA violation detection agent. Decide whether any slice risks violating its SLA.\n",
    );
    for (spec, k) in specs.iter().zip(&kpms.slices) {
        let _ = writeln!(
            out,
            "- slice {}: target {:.3}, latency {:.3} ms, throughput {:.3} Mbps, offered {:.3} Mbps, drop {:.3}",
            spec.slice_id(),
            spec.sla_target(),
            k.mean_latency_ms,
            k.mean_throughput_mbps,
            k.offered_load_mbps,
            k.drop_ratio
        );
    }
    let _ = write!(
        out,
        "Threshold {theta:.3}. Answer {{\"violation\": true|false}}."
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SliceKpm, SliceSpec};
    use crate::rag::KpmSummary;
    use crate::sla::SliceRisk;

    fn fixture(sigma: f64) -> (RiskAssessment, KpmSample, Vec<SliceSpec>) {
        let specs = vec![
            SliceSpec::new(0, SliceKind::LatencyConstrained, 10.0, 2.0, 10.0, 0.2).unwrap(),
            SliceSpec::new(1, SliceKind::ThroughputConstrained, 50.0, 1.0, -10.0, -0.2).unwrap(),
        ];
        let kpm = |id, lat, tput| SliceKpm {
            slice_id: id,
            mean_latency_ms: lat,
            mean_throughput_mbps: tput,
            drop_ratio: 0.0,
            offered_load_mbps: 80.0,
            rb_count: 53,
            offered_packets: 10,
            delivered_packets: 10,
            dropped_packets: 0,
            queued_start: 0,
            queued_end: 0,
        };
        let sample = KpmSample {
            interval_index: 4,
            slices: vec![kpm(0, 14.2, 79.0), kpm(1, 0.1, 80.0)],
        };
        let a = RiskAssessment {
            interval_index: 4,
            slices: vec![
                SliceRisk {
                    slice_id: 0,
                    epsilon: Some(0.42),
                    rho: 0.9,
                },
                SliceRisk {
                    slice_id: 1,
                    epsilon: Some(0.6),
                    rho: 0.1,
                },
            ],
            sigma,
            violation_detected: true,
        };
        (a, sample, specs)
    }

    fn record() -> ExperienceRecord {
        ExperienceRecord {
            record_id: 3,
            arrival_rates_mbps: vec![120.0, 80.0],
            allocation: AllocationRatio::new(vec![0.6, 0.4]).unwrap(),
            resulting_sigma: -0.0125,
            kpm_summary: vec![
                KpmSummary {
                    latency_ms: 1.0,
                    throughput_mbps: 1.0,
                    drop_ratio: 0.0
                };
                2
            ],
            created_at_interval: 9,
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let (a, k, specs) = fixture(-0.5);
        let cur = AllocationRatio::equal(2);
        let p1 = build_meta_prompt(&a, &k, &cur, &[record()], &specs, 106);
        let p2 = build_meta_prompt(&a, &k, &cur, &[record()], &specs, 106);
        assert_eq!(p1.rendered_text, p2.rendered_text);
        assert_eq!(MetaPrompt::from_payload(p1.payload.clone()), p1);
        assert!(p1.rendered_text.contains("-0.500"));
        assert!(p1
            .rendered_text
            .contains("rates [120.000, 80.000] Mbps -> shares [0.600, 0.400]"));
        assert!(p1.rendered_text.contains("{\"shares\": [..]}"));
    }

    #[test]
    fn empty_history_is_stated() {
        let (a, k, specs) = fixture(-0.2);
        let p = build_meta_prompt(&a, &k, &AllocationRatio::equal(2), &[], &specs, 106);
        assert!(p.rendered_text.contains("no historical examples"));
        assert!(p.payload.examples.is_empty());
    }

    #[test]
    fn numbers_use_three_decimals() {
        let (a, k, specs) = fixture(-0.123456);
        let p = build_meta_prompt(&a, &k, &AllocationRatio::equal(2), &[], &specs, 106);
        assert!(p.rendered_text.contains("-0.123 (0 is best)"));
        assert!(p.rendered_text.contains("latency 14.200 ms"));
        assert!(!p.rendered_text.contains("0.123456"));
    }
}
