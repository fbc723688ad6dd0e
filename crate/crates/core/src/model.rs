//! Shared domain types: slices, radio configuration, allocation ratios and
//! per-interval KPM samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the sum of allocation shares.
pub const SHARE_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceKind {
    LatencyConstrained,
    ThroughputConstrained,
}

/// How the throughput target of a throughput-constrained slice is applied.
///
/// `Fixed` uses the declared floor as-is. `DemandCapped` uses
/// `min(floor, offered load)`, so a best-effort slice is judged on how much
/// of its offered traffic it actually delivered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThroughputTarget {
    #[default]
    Fixed,
    DemandCapped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSliceSpec", into = "RawSliceSpec")]
pub struct SliceSpec {
    slice_id: usize,
    kind: SliceKind,
    sla_target: f64,
    weight: f64,
    shape_a: f64,
    shape_b: f64,
    target_mode: ThroughputTarget,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawSliceSpec {
    slice_id: usize,
    kind: SliceKind,
    sla_target: f64,
    weight: f64,
    shape_a: f64,
    shape_b: f64,
    #[serde(default)]
    target_mode: ThroughputTarget,
}

impl TryFrom<RawSliceSpec> for SliceSpec {
    type Error = Error;

    fn try_from(raw: RawSliceSpec) -> Result<Self> {
        SliceSpec::new(
            raw.slice_id,
            raw.kind,
            raw.sla_target,
            raw.weight,
            raw.shape_a,
            raw.shape_b,
        )
        .map(|s| s.with_target_mode(raw.target_mode))
    }
}

impl From<SliceSpec> for RawSliceSpec {
    fn from(s: SliceSpec) -> Self {
        RawSliceSpec {
            slice_id: s.slice_id,
            kind: s.kind,
            sla_target: s.sla_target,
            weight: s.weight,
            shape_a: s.shape_a,
            shape_b: s.shape_b,
            target_mode: s.target_mode,
        }
    }
}

impl SliceSpec {
    pub fn new(
        slice_id: usize,
        kind: SliceKind,
        sla_target: f64,
        weight: f64,
        shape_a: f64,
        shape_b: f64,
    ) -> Result<Self> {
        if !(sla_target.is_finite() && sla_target > 0.0) {
            return Err(Error::InvalidSlice(format!(
                "slice {slice_id}: sla_target must be positive, got {sla_target}"
            )));
        }
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::InvalidSlice(format!(
                "slice {slice_id}: weight must be nonnegative, got {weight}"
            )));
        }
        if !shape_a.is_finite() || shape_a == 0.0 {
            return Err(Error::InvalidSlice(format!(
                "slice {slice_id}: shape_a must be finite and nonzero"
            )));
        }
        if !shape_b.is_finite() {
            return Err(Error::InvalidSlice(format!(
                "slice {slice_id}: shape_b must be finite"
            )));
        }
        Ok(Self {
            slice_id,
            kind,
            sla_target,
            weight,
            shape_a,
            shape_b,
            target_mode: ThroughputTarget::Fixed,
        })
    }

    pub fn with_target_mode(mut self, mode: ThroughputTarget) -> Self {
        self.target_mode = mode;
        self
    }

    pub fn slice_id(&self) -> usize {
        self.slice_id
    }

    pub fn kind(&self) -> SliceKind {
        self.kind
    }

    /// Milliseconds for latency slices, Mbps for throughput slices.
    pub fn sla_target(&self) -> f64 {
        self.sla_target
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn shape_a(&self) -> f64 {
        self.shape_a
    }

    pub fn shape_b(&self) -> f64 {
        self.shape_b
    }

    pub fn target_mode(&self) -> ThroughputTarget {
        self.target_mode
    }

    pub fn is_latency(&self) -> bool {
        self.kind == SliceKind::LatencyConstrained
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioConfig {
    pub total_rbs: u32,
    pub rb_bandwidth_hz: f64,
    /// Scheduling interval over which one service budget is granted.
    pub interval_duration_s: f64,
    pub monitoring_interval_s: f64,
    pub wait_period_s: f64,
    pub violation_threshold: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            total_rbs: 106,
            rb_bandwidth_hz: 180_000.0,
            interval_duration_s: 0.001,
            monitoring_interval_s: 1.0,
            wait_period_s: 5.0,
            violation_threshold: 0.7,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self, slice_count: usize) -> Result<()> {
        if self.total_rbs == 0 || (self.total_rbs as usize) < slice_count {
            return Err(Error::Config(format!(
                "total_rbs {} must be at least the slice count {slice_count}",
                self.total_rbs
            )));
        }
        let positive = [
            ("rb_bandwidth_hz", self.rb_bandwidth_hz),
            ("interval_duration_s", self.interval_duration_s),
            ("monitoring_interval_s", self.monitoring_interval_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.wait_period_s.is_finite() && self.wait_period_s >= 0.0) {
            return Err(Error::Config("wait_period_s must be nonnegative".into()));
        }
        if !(self.violation_threshold > 0.0 && self.violation_threshold < 1.0) {
            return Err(Error::Config(format!(
                "violation_threshold must lie in (0,1), got {}",
                self.violation_threshold
            )));
        }
        Ok(())
    }

    /// Monitoring intervals skipped while waiting after a cycle.
    pub fn wait_intervals(&self) -> u64 {
        (self.wait_period_s / self.monitoring_interval_s - 1e-9)
            .ceil()
            .max(0.0) as u64
    }
}

/// Fractional share of the RB pool per slice, indexed by slice id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AllocationRatio {
    shares: Vec<f64>,
}

impl TryFrom<Vec<f64>> for AllocationRatio {
    type Error = Error;

    fn try_from(shares: Vec<f64>) -> Result<Self> {
        AllocationRatio::new(shares)
    }
}

impl From<AllocationRatio> for Vec<f64> {
    fn from(r: AllocationRatio) -> Self {
        r.shares
    }
}

impl AllocationRatio {
    pub fn new(shares: Vec<f64>) -> Result<Self> {
        if shares.is_empty() {
            return Err(Error::InvalidRatio("no shares".into()));
        }
        if let Some(bad) = shares
            .iter()
            .find(|s| !(s.is_finite() && (0.0..=1.0).contains(*s)))
        {
            return Err(Error::InvalidRatio(format!("share {bad} outside [0,1]")));
        }
        let sum: f64 = shares.iter().sum();
        if (sum - 1.0).abs() > SHARE_SUM_TOLERANCE {
            return Err(Error::InvalidRatio(format!(
                "shares sum to {sum}, expected 1"
            )));
        }
        Ok(Self { shares })
    }

    /// Equal split across `slices` slices.
    pub fn equal(slices: usize) -> Self {
        Self {
            shares: vec![1.0 / slices as f64; slices],
        }
    }

    /// Exact ratio for an integer RB split.
    pub fn from_rb_counts(counts: &[u32]) -> Result<Self> {
        let total: u32 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidRatio("empty RB split".into()));
        }
        Self::new(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    pub fn shares(&self) -> &[f64] {
        &self.shares
    }

    pub fn len(&self) -> usize {
        self.shares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shares.is_empty()
    }

    /// Checks that every slice is entitled to at least one of `total_rbs` blocks.
    pub fn check_min_share(&self, total_rbs: u32) -> Result<()> {
        let min = 1.0 / total_rbs as f64;
        match self
            .shares
            .iter()
            .position(|&s| s < min - SHARE_SUM_TOLERANCE)
        {
            Some(i) => Err(Error::InvalidRatio(format!(
                "slice {i} share {} is below one RB ({min}) of {total_rbs}",
                self.shares[i]
            ))),
            None => Ok(()),
        }
    }
}

/// Converts fractional shares to integer RB counts by the largest-remainder
/// method. Counts sum to `total_rbs` and every slice receives at least one RB;
/// equal remainders go to the lower slice id.
pub fn ratio_to_rb_counts(ratio: &AllocationRatio, total_rbs: u32) -> Result<Vec<u32>> {
    let n = ratio.len();
    if (total_rbs as usize) < n {
        return Err(Error::InfeasibleAllocation(format!(
            "{total_rbs} RBs cannot cover {n} slices"
        )));
    }
    ratio.check_min_share(total_rbs)?;

    let quotas: Vec<f64> = ratio
        .shares()
        .iter()
        .map(|s| s * total_rbs as f64)
        .collect();
    let mut counts: Vec<u32> = quotas.iter().map(|q| q.floor() as u32).collect();
    let assigned: u32 = counts.iter().sum();
    let mut order: Vec<usize> = (0..n).collect();
    // Remainders are quantized so that float noise (1/3 vs 1 - 2/3) cannot
    // break a tie; the stable sort keeps lower ids first among equals.
    let remainder_key =
        |i: usize| ((quotas[i] - quotas[i].floor()) / SHARE_SUM_TOLERANCE).round() as i64;
    order.sort_by_key(|&i| std::cmp::Reverse(remainder_key(i)));
    for &i in order
        .iter()
        .take(total_rbs.saturating_sub(assigned) as usize)
    {
        counts[i] += 1;
    }

    // A share of exactly 1/N can floor to zero under rounding error; move one
    // RB from the richest slice in that case.
    while let Some(starved) = counts.iter().position(|&c| c == 0) {
        let richest = (0..n)
            .max_by_key(|&i| (counts[i], std::cmp::Reverse(i)))
            .unwrap();
        counts[richest] -= 1;
        counts[starved] += 1;
    }
    Ok(counts)
}

/// Per-slice measurements over one monitoring interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceKpm {
    pub slice_id: usize,
    pub mean_latency_ms: f64,
    pub mean_throughput_mbps: f64,
    pub drop_ratio: f64,
    pub offered_load_mbps: f64,
    pub rb_count: u32,
    pub offered_packets: u64,
    pub delivered_packets: u64,
    pub dropped_packets: u64,
    pub queued_start: u64,
    pub queued_end: u64,
}

impl SliceKpm {
    /// Latency slices with traffic offered but nothing delivered are starved.
    pub fn is_starved(&self) -> bool {
        self.delivered_packets == 0 && (self.offered_load_mbps > 0.0 || self.queued_start > 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpmSample {
    pub interval_index: u64,
    pub slices: Vec<SliceKpm>,
}

impl KpmSample {
    pub fn validate(&self) -> Result<()> {
        for s in &self.slices {
            let fields = [
                s.mean_latency_ms,
                s.mean_throughput_mbps,
                s.offered_load_mbps,
            ];
            if fields.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Argument(format!(
                    "slice {}: KPM fields must be finite and nonnegative",
                    s.slice_id
                )));
            }
            if !(0.0..=1.0).contains(&s.drop_ratio) {
                return Err(Error::Argument(format!(
                    "slice {}: drop ratio {} outside [0,1]",
                    s.slice_id, s.drop_ratio
                )));
            }
            if s.queued_start + s.offered_packets
                != s.delivered_packets + s.dropped_packets + s.queued_end
            {
                return Err(Error::Argument(format!(
                    "slice {}: packet accounting does not balance",
                    s.slice_id
                )));
            }
        }
        Ok(())
    }

    /// Sum of throughput over the given slices (R_L or R_T style aggregates).
    pub fn aggregate_throughput(&self, slice_ids: impl IntoIterator<Item = usize>) -> f64 {
        slice_ids
            .into_iter()
            .filter_map(|id| self.slices.iter().find(|s| s.slice_id == id))
            .map(|s| s.mean_throughput_mbps)
            .sum()
    }
}
