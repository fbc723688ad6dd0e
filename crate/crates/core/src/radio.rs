//! Air-interface simulation: Shannon capacity per UE, slice service rates, and
//! per-slice finite FIFO queues advanced tick by tick.
//!
//! Within a tick, arrivals and departures are processed in time order, so the
//! queue behaves exactly like a work-conserving single server whose rate is
//! piecewise constant across ticks.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{KpmSample, RadioConfig, SliceKpm};

/// Linear-scale SINR, either one value for every RB or one value per RB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sinr {
    Uniform(f64),
    PerRb(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeChannelState {
    pub ue_id: u32,
    pub slice_id: usize,
    pub sinr: Sinr,
}

impl UeChannelState {
    pub fn uniform(ue_id: u32, slice_id: usize, sinr: f64) -> Self {
        Self {
            ue_id,
            slice_id,
            sinr: Sinr::Uniform(sinr),
        }
    }
}

/// `B * sum_{j=1..n} log2(1 + SINR_j)` in bits per second.
pub fn channel_capacity(
    ue: &UeChannelState,
    assigned_rbs: u32,
    rb_bandwidth_hz: f64,
) -> Result<f64> {
    let n = assigned_rbs as usize;
    let spectral: f64 = match &ue.sinr {
        Sinr::Uniform(s) => {
            check_sinr(*s, ue.ue_id)?;
            if n == 0 {
                return Ok(0.0);
            }
            n as f64 * (1.0 + s).log2()
        }
        Sinr::PerRb(values) => {
            if values.len() < n {
                return Err(Error::Argument(format!(
                    "UE {} has SINR for {} RBs but {n} were assigned",
                    ue.ue_id,
                    values.len()
                )));
            }
            let mut acc = 0.0;
            for &s in &values[..n] {
                check_sinr(s, ue.ue_id)?;
                acc += (1.0 + s).log2();
            }
            acc
        }
    };
    Ok(rb_bandwidth_hz * spectral)
}

fn check_sinr(s: f64, ue_id: u32) -> Result<()> {
    if s.is_finite() && s >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "UE {ue_id}: SINR must be finite and nonnegative, got {s}"
        )))
    }
}

/// Bits a user can move in one scheduling interval.
pub fn user_throughput(capacity_bps: f64, interval_duration_s: f64) -> f64 {
    capacity_bps * interval_duration_s
}

pub fn slice_throughput(user_throughputs: &[f64]) -> f64 {
    user_throughputs.iter().sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueConfig {
    pub packet_size_bytes: u32,
    pub buffer_capacity_packets: u32,
    pub tick_duration_ms: f64,
    /// Fraction of the inter-arrival gap by which each arrival may be
    /// delayed at random. Zero gives evenly spaced arrivals.
    #[serde(default)]
    pub arrival_jitter: f64,
    #[serde(default)]
    pub jitter_seed: u64,
}

impl Default for QueueConfig {
    fn default() -> Self {
        Self {
            packet_size_bytes: 1500,
            buffer_capacity_packets: 256,
            tick_duration_ms: 1.0,
            arrival_jitter: 0.0,
            jitter_seed: 0,
        }
    }
}

impl QueueConfig {
    pub fn validate(&self) -> Result<()> {
        if self.packet_size_bytes == 0 || self.buffer_capacity_packets == 0 {
            return Err(Error::Config(
                "packet size and buffer capacity must be positive".into(),
            ));
        }
        if !(self.tick_duration_ms.is_finite() && self.tick_duration_ms > 0.0) {
            return Err(Error::Config("tick_duration_ms must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.arrival_jitter) {
            return Err(Error::Config("arrival_jitter must lie in [0,1)".into()));
        }
        Ok(())
    }

    pub fn packet_bits(&self) -> f64 {
        self.packet_size_bytes as f64 * 8.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficStep {
    pub start_interval: u64,
    pub rate_mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TrafficProfile {
    /// One step timeline per slice.
    Steps { slices: Vec<Vec<TrafficStep>> },
    /// Independent uniform draws from `values_mbps` per slice and interval.
    RandomGrid { values_mbps: Vec<f64>, seed: u64 },
}

impl TrafficProfile {
    /// Constant offered load per slice.
    pub fn constant(rates: &[f64]) -> Self {
        TrafficProfile::Steps {
            slices: rates
                .iter()
                .map(|&r| {
                    vec![TrafficStep {
                        start_interval: 0,
                        rate_mbps: r,
                    }]
                })
                .collect(),
        }
    }

    pub fn validate(&self, slice_count: usize) -> Result<()> {
        match self {
            TrafficProfile::Steps { slices } => {
                if slices.len() != slice_count {
                    return Err(Error::Config(format!(
                        "traffic profile has {} slices, expected {slice_count}",
                        slices.len()
                    )));
                }
                for (id, steps) in slices.iter().enumerate() {
                    if steps
                        .iter()
                        .any(|s| !(s.rate_mbps.is_finite() && s.rate_mbps >= 0.0))
                    {
                        return Err(Error::Config(format!("slice {id}: negative traffic rate")));
                    }
                    if steps
                        .windows(2)
                        .any(|w| w[1].start_interval <= w[0].start_interval)
                    {
                        return Err(Error::Config(format!(
                            "slice {id}: step intervals must be strictly increasing"
                        )));
                    }
                }
            }
            TrafficProfile::RandomGrid { values_mbps, .. } => {
                if values_mbps.is_empty() {
                    return Err(Error::Config("random grid has no values".into()));
                }
                if values_mbps.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::Config("random grid has a negative rate".into()));
                }
            }
        }
        Ok(())
    }

    /// Interval indices at which any slice's step timeline changes rate.
    pub fn step_starts(&self) -> Vec<u64> {
        match self {
            TrafficProfile::Steps { slices } => {
                let mut starts: Vec<u64> =
                    slices.iter().flatten().map(|s| s.start_interval).collect();
                starts.sort_unstable();
                starts.dedup();
                starts
            }
            TrafficProfile::RandomGrid { .. } => Vec::new(),
        }
    }
}

/// Offered load per slice (Mbps) for one monitoring interval.
pub fn generate_traffic(
    profile: &TrafficProfile,
    interval_index: u64,
    slice_count: usize,
) -> Vec<f64> {
    match profile {
        TrafficProfile::Steps { slices } => slices
            .iter()
            .map(|steps| {
                steps
                    .iter()
                    .take_while(|s| s.start_interval <= interval_index)
                    .last()
                    .map_or(0.0, |s| s.rate_mbps)
            })
            .collect(),
        TrafficProfile::RandomGrid { values_mbps, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            rng.set_stream(interval_index);
            (0..slice_count)
                .map(|_| values_mbps[rng.random_range(0..values_mbps.len())])
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct SliceQueue {
    /// Arrival times (ms) of queued packets, head first.
    arrivals: VecDeque<f64>,
    head_remaining_bits: f64,
    server_cursor_ms: f64,
    arrival_progress_bits: f64,
}

#[derive(Default)]
struct IntervalTally {
    offered: u64,
    delivered: u64,
    dropped: u64,
    latency_sum_ms: f64,
}

impl SliceQueue {
    fn new(packet_bits: f64) -> Self {
        Self {
            arrivals: VecDeque::new(),
            head_remaining_bits: packet_bits,
            server_cursor_ms: 0.0,
            arrival_progress_bits: 0.0,
        }
    }

    /// Serves queued packets up to time `until` at `rate` bits per ms.
    fn advance(&mut self, until: f64, rate: f64, packet_bits: f64, tally: &mut IntervalTally) {
        while let Some(&arrival) = self.arrivals.front() {
            let start = self.server_cursor_ms.max(arrival);
            if rate <= 0.0 || start >= until {
                break;
            }
            let finish = start + self.head_remaining_bits / rate;
            if finish <= until {
                self.arrivals.pop_front();
                tally.delivered += 1;
                tally.latency_sum_ms += finish - arrival;
                self.server_cursor_ms = finish;
                self.head_remaining_bits = packet_bits;
            } else {
                self.head_remaining_bits -= (until - start) * rate;
                self.server_cursor_ms = until;
                return;
            }
        }
        self.server_cursor_ms = self.server_cursor_ms.max(until);
    }
}

/// Carried simulation state: queue contents and simulated clock.
#[derive(Debug, Clone)]
pub struct SimState {
    queues: Vec<SliceQueue>,
    elapsed_ticks: u64,
    next_interval: u64,
    rng: ChaCha8Rng,
}

impl SimState {
    pub fn next_interval(&self) -> u64 {
        self.next_interval
    }

    pub fn elapsed_ms(&self, tick_ms: f64) -> f64 {
        self.elapsed_ticks as f64 * tick_ms
    }

    pub fn queued_packets(&self) -> Vec<u64> {
        self.queues
            .iter()
            .map(|q| q.arrivals.len() as u64)
            .collect()
    }
}

/// The gNB side of the simulation: radio numerology, queues and channels.
#[derive(Debug, Clone)]
pub struct RadioSim {
    radio: RadioConfig,
    queue: QueueConfig,
    channels: Vec<UeChannelState>,
    slice_count: usize,
    ticks_per_interval: u64,
}

impl RadioSim {
    pub fn new(
        radio: RadioConfig,
        queue: QueueConfig,
        channels: Vec<UeChannelState>,
        slice_count: usize,
    ) -> Result<Self> {
        radio.validate(slice_count)?;
        queue.validate()?;
        if (radio.interval_duration_s * 1000.0 - queue.tick_duration_ms).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "tick_duration_ms {} must equal the scheduling interval {} s",
                queue.tick_duration_ms, radio.interval_duration_s
            )));
        }
        let ticks = radio.monitoring_interval_s * 1000.0 / queue.tick_duration_ms;
        if (ticks - ticks.round()).abs() > 1e-6 || ticks.round() < 1.0 {
            return Err(Error::Config(
                "monitoring interval must be a whole number of ticks".into(),
            ));
        }
        if let Some(ue) = channels.iter().find(|u| u.slice_id >= slice_count) {
            return Err(Error::Config(format!(
                "UE {} belongs to unknown slice {}",
                ue.ue_id, ue.slice_id
            )));
        }
        for ue in &channels {
            if let Sinr::Uniform(s) = ue.sinr {
                check_sinr(s, ue.ue_id)?;
            }
        }
        Ok(Self {
            ticks_per_interval: ticks.round() as u64,
            radio,
            queue,
            channels,
            slice_count,
        })
    }

    pub fn radio(&self) -> &RadioConfig {
        &self.radio
    }

    pub fn queue_config(&self) -> &QueueConfig {
        &self.queue
    }

    pub fn channels(&self) -> &[UeChannelState] {
        &self.channels
    }

    pub fn slice_count(&self) -> usize {
        self.slice_count
    }

    pub fn initial_state(&self) -> SimState {
        let bits = self.queue.packet_bits();
        SimState {
            queues: (0..self.slice_count)
                .map(|_| SliceQueue::new(bits))
                .collect(),
            elapsed_ticks: 0,
            next_interval: 0,
            rng: ChaCha8Rng::seed_from_u64(self.queue.jitter_seed),
        }
    }

    /// Aggregate service rate (bps) of each slice for a given RB split. A
    /// slice's RBs are divided evenly among its UEs, lower UE order first.
    pub fn slice_capacities(&self, rb_counts: &[u32]) -> Result<Vec<f64>> {
        if rb_counts.len() != self.slice_count {
            return Err(Error::Argument(format!(
                "{} RB counts for {} slices",
                rb_counts.len(),
                self.slice_count
            )));
        }
        let mut rates = vec![0.0; self.slice_count];
        for (slice, &rbs) in rb_counts.iter().enumerate() {
            let ues: Vec<&UeChannelState> = self
                .channels
                .iter()
                .filter(|u| u.slice_id == slice)
                .collect();
            if ues.is_empty() {
                continue;
            }
            let base = rbs / ues.len() as u32;
            let extra = (rbs % ues.len() as u32) as usize;
            let per_user: Vec<f64> = ues
                .iter()
                .enumerate()
                .map(|(i, ue)| {
                    let n = base + u32::from(i < extra);
                    channel_capacity(ue, n, self.radio.rb_bandwidth_hz)
                })
                .collect::<Result<_>>()?;
            rates[slice] = slice_throughput(&per_user);
        }
        Ok(rates)
    }

    /// Advances one monitoring interval and returns its KPMs with the new state.
    pub fn simulate_interval(
        &self,
        state: &SimState,
        offered_mbps: &[f64],
        rb_counts: &[u32],
    ) -> Result<(KpmSample, SimState)> {
        let mut next = state.clone();
        let sample = self.step(&mut next, offered_mbps, rb_counts)?;
        Ok((sample, next))
    }

    /// In-place variant of [`RadioSim::simulate_interval`].
    pub fn step(
        &self,
        state: &mut SimState,
        offered_mbps: &[f64],
        rb_counts: &[u32],
    ) -> Result<KpmSample> {
        self.check_state(state)?;
        if offered_mbps.len() != self.slice_count {
            return Err(Error::Argument(format!(
                "{} offered rates for {} slices",
                offered_mbps.len(),
                self.slice_count
            )));
        }
        if let Some(r) = offered_mbps.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::Argument(format!(
                "offered rate {r} must be nonnegative"
            )));
        }
        let total: u32 = rb_counts.iter().sum();
        if total != self.radio.total_rbs {
            return Err(Error::Argument(format!(
                "RB counts sum to {total}, expected {}",
                self.radio.total_rbs
            )));
        }
        let capacities = self.slice_capacities(rb_counts)?;

        let packet_bits = self.queue.packet_bits();
        let cap = self.queue.buffer_capacity_packets as usize;
        let tick = self.queue.tick_duration_ms;
        let jitter = self.queue.arrival_jitter;
        let interval_s = self.radio.monitoring_interval_s;

        let mut slices = Vec::with_capacity(self.slice_count);
        for (id, queue) in state.queues.iter_mut().enumerate() {
            // Mbps and bps both become bits per ms.
            let offered_rate = offered_mbps[id] * 1000.0;
            let service_rate = user_throughput(capacities[id], tick / 1000.0) / tick;
            let queued_start = queue.arrivals.len() as u64;
            let mut tally = IntervalTally::default();

            for k in 0..self.ticks_per_interval {
                let t0 = (state.elapsed_ticks + k) as f64 * tick;
                let t1 = t0 + tick;
                if offered_rate > 0.0 {
                    let tick_bits = offered_rate * tick;
                    let gap = packet_bits / offered_rate;
                    let mut consumed = 0.0;
                    loop {
                        let need = packet_bits - queue.arrival_progress_bits;
                        if consumed + need > tick_bits {
                            queue.arrival_progress_bits += tick_bits - consumed;
                            break;
                        }
                        consumed += need;
                        queue.arrival_progress_bits = 0.0;
                        let mut at = t0 + consumed / offered_rate;
                        if jitter > 0.0 {
                            at = (at + state.rng.random::<f64>() * jitter * gap).min(t1);
                        }
                        queue.advance(at, service_rate, packet_bits, &mut tally);
                        tally.offered += 1;
                        if queue.arrivals.len() < cap {
                            queue.arrivals.push_back(at);
                        } else {
                            tally.dropped += 1;
                        }
                    }
                }
                queue.advance(t1, service_rate, packet_bits, &mut tally);
            }

            let delivered_bits = tally.delivered as f64 * packet_bits;
            slices.push(SliceKpm {
                slice_id: id,
                mean_latency_ms: if tally.delivered == 0 {
                    0.0
                } else {
                    tally.latency_sum_ms / tally.delivered as f64
                },
                mean_throughput_mbps: delivered_bits / interval_s / 1e6,
                drop_ratio: if tally.offered == 0 {
                    0.0
                } else {
                    tally.dropped as f64 / tally.offered as f64
                },
                offered_load_mbps: offered_mbps[id],
                rb_count: rb_counts[id],
                offered_packets: tally.offered,
                delivered_packets: tally.delivered,
                dropped_packets: tally.dropped,
                queued_start,
                queued_end: queue.arrivals.len() as u64,
            });
        }

        let sample = KpmSample {
            interval_index: state.next_interval,
            slices,
        };
        state.elapsed_ticks += self.ticks_per_interval;
        state.next_interval += 1;
        Ok(sample)
    }

    fn check_state(&self, state: &SimState) -> Result<()> {
        if state.queues.len() != self.slice_count {
            return Err(Error::InternalState(format!(
                "state has {} queues for {} slices",
                state.queues.len(),
                self.slice_count
            )));
        }
        let bits = self.queue.packet_bits();
        for (id, q) in state.queues.iter().enumerate() {
            if q.arrivals.len() > self.queue.buffer_capacity_packets as usize {
                return Err(Error::InternalState(format!(
                    "slice {id}: queue exceeds buffer"
                )));
            }
            if !(q.head_remaining_bits > -1e-6 && q.head_remaining_bits <= bits + 1e-6) {
                return Err(Error::InternalState(format!(
                    "slice {id}: head packet has {} bits left",
                    q.head_remaining_bits
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sim_with(total_rbs: u32, sinr: f64, buffer: u32) -> RadioSim {
        let radio = RadioConfig {
            total_rbs,
            ..RadioConfig::default()
        };
        let queue = QueueConfig {
            buffer_capacity_packets: buffer,
            ..QueueConfig::default()
        };
        let channels = vec![
            UeChannelState::uniform(0, 0, sinr),
            UeChannelState::uniform(1, 1, sinr),
        ];
        RadioSim::new(radio, queue, channels, 2).unwrap()
    }

    #[test]
    fn capacity_examples() {
        let one = UeChannelState::uniform(0, 0, 1.0);
        assert_relative_eq!(channel_capacity(&one, 10, 180_000.0).unwrap(), 1_800_000.0);
        assert_eq!(channel_capacity(&one, 0, 180_000.0).unwrap(), 0.0);
        let three = UeChannelState::uniform(0, 0, 3.0);
        assert_relative_eq!(channel_capacity(&three, 5, 180_000.0).unwrap(), 1_800_000.0);
    }

    #[test]
    fn capacity_per_rb_list() {
        let ue = UeChannelState {
            ue_id: 7,
            slice_id: 0,
            sinr: Sinr::PerRb(vec![1.0, 3.0, 7.0]),
        };
        assert_relative_eq!(channel_capacity(&ue, 3, 1.0).unwrap(), 6.0);
        assert_relative_eq!(channel_capacity(&ue, 2, 1.0).unwrap(), 3.0);
        assert!(matches!(
            channel_capacity(&ue, 4, 1.0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn negative_sinr_is_a_domain_error() {
        let ue = UeChannelState::uniform(0, 0, -0.5);
        assert!(matches!(
            channel_capacity(&ue, 1, 1.0),
            Err(Error::Domain(_))
        ));
        let list = UeChannelState {
            ue_id: 1,
            slice_id: 0,
            sinr: Sinr::PerRb(vec![1.0, -1.0]),
        };
        assert!(matches!(
            channel_capacity(&list, 2, 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn throughput_scaling_and_sums() {
        assert_eq!(user_throughput(1_800_000.0, 1.0), 1_800_000.0);
        assert_eq!(user_throughput(0.0, 1.0), 0.0);
        assert_relative_eq!(user_throughput(1_800_000.0, 0.001), 1_800.0);
        assert_eq!(slice_throughput(&[100.0, 200.0, 300.0]), 600.0);
        assert_eq!(slice_throughput(&[]), 0.0);
        assert_eq!(slice_throughput(&[42.5]), 42.5);
    }

    #[test]
    fn step_profile_lookup() {
        let p = TrafficProfile::Steps {
            slices: vec![vec![
                TrafficStep {
                    start_interval: 0,
                    rate_mbps: 80.0,
                },
                TrafficStep {
                    start_interval: 10,
                    rate_mbps: 120.0,
                },
            ]],
        };
        assert_eq!(generate_traffic(&p, 5, 1), vec![80.0]);
        assert_eq!(generate_traffic(&p, 12, 1), vec![120.0]);
        assert_eq!(generate_traffic(&p, 10, 1), vec![120.0]);
    }

    #[test]
    fn grid_draws_are_members_and_repeatable() {
        let values: Vec<f64> = (0..10).map(|i| 80.0 + 5.0 * i as f64).collect();
        let p = TrafficProfile::RandomGrid {
            values_mbps: values.clone(),
            seed: 9,
        };
        for n in 0..200 {
            let draw = generate_traffic(&p, n, 2);
            assert!(draw.iter().all(|d| values.contains(d)));
            assert_eq!(draw, generate_traffic(&p, n, 2));
        }
    }

    #[test]
    fn profile_validation() {
        let bad = TrafficProfile::Steps {
            slices: vec![vec![
                TrafficStep {
                    start_interval: 3,
                    rate_mbps: 1.0,
                },
                TrafficStep {
                    start_interval: 3,
                    rate_mbps: 2.0,
                },
            ]],
        };
        assert!(bad.validate(1).is_err());
        assert!(TrafficProfile::constant(&[-1.0]).validate(1).is_err());
        assert!(TrafficProfile::constant(&[1.0, 2.0]).validate(1).is_err());
    }

    #[test]
    fn idle_system_reports_zeros() {
        let sim = sim_with(106, 5500.0, 256);
        let (k, _) = sim
            .simulate_interval(&sim.initial_state(), &[0.0, 0.0], &[53, 53])
            .unwrap();
        for s in &k.slices {
            assert_eq!(s.mean_latency_ms, 0.0);
            assert_eq!(s.drop_ratio, 0.0);
            assert_eq!(s.mean_throughput_mbps, 0.0);
            assert_eq!(s.delivered_packets, 0);
        }
    }

    /// 10-tick hand trace. SINR 1 gives 180 kbps per RB; with 100 RBs the
    /// slice serves 18 Mbps = 18000 bits/ms = 1.5 packets per tick. Offering
    /// the same rate yields one arrival every 2/3 ms, each served in 2/3 ms,
    /// so arrivals at 2/3, 4/3, ..., 10 ms, departures 2/3 ms later.
    #[test]
    fn matched_load_hand_trace() {
        let radio = RadioConfig {
            total_rbs: 101,
            monitoring_interval_s: 0.01,
            ..RadioConfig::default()
        };
        let channels = vec![
            UeChannelState::uniform(0, 0, 1.0),
            UeChannelState::uniform(1, 1, 1.0),
        ];
        let sim = RadioSim::new(radio, QueueConfig::default(), channels, 2).unwrap();
        let (k, state) = sim
            .simulate_interval(&sim.initial_state(), &[18.0, 0.0], &[100, 1])
            .unwrap();
        let s = &k.slices[0];
        // 15 arrivals in 10 ms; the one at t = 10 ms is still in service.
        assert_eq!(s.offered_packets, 15);
        assert_eq!(s.delivered_packets, 14);
        assert_eq!(s.dropped_packets, 0);
        assert_eq!(state.queued_packets()[0], 1);
        assert_relative_eq!(s.mean_latency_ms, 2.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn matched_load_long_interval() {
        let sim = sim_with(106, 1.0, 100_000);
        // 100 RBs at SINR 1 serve exactly 18 Mbps.
        let (k, _) = sim
            .simulate_interval(&sim.initial_state(), &[18.0, 0.0], &[100, 6])
            .unwrap();
        let s = &k.slices[0];
        assert_eq!(s.drop_ratio, 0.0);
        assert!((s.mean_throughput_mbps - 18.0).abs() / 18.0 < 0.01);
    }

    #[test]
    fn double_load_drops_half() {
        let sim = sim_with(106, 1.0, 256);
        let mut state = sim.initial_state();
        let mut offered = 0;
        let mut dropped = 0;
        for _ in 0..10 {
            let k = sim.step(&mut state, &[36.0, 0.0], &[100, 6]).unwrap();
            offered += k.slices[0].offered_packets;
            dropped += k.slices[0].dropped_packets;
        }
        let ratio = dropped as f64 / offered as f64;
        assert!((ratio - 0.5).abs() <= 0.05, "drop ratio {ratio}");
    }

    #[test]
    fn rejects_inconsistent_inputs() {
        let sim = sim_with(106, 10.0, 256);
        let st = sim.initial_state();
        assert!(sim.simulate_interval(&st, &[1.0, 1.0], &[50, 50]).is_err());
        assert!(sim.simulate_interval(&st, &[1.0], &[53, 53]).is_err());
        assert!(sim.simulate_interval(&st, &[-1.0, 1.0], &[53, 53]).is_err());
        let three = RadioSim::new(
            RadioConfig::default(),
            QueueConfig::default(),
            vec![UeChannelState::uniform(0, 0, 1.0)],
            3,
        )
        .unwrap();
        assert!(matches!(
            three.step(&mut st.clone(), &[0.0; 3], &[100, 3, 3]),
            Err(Error::InternalState(_))
        ));
    }

    #[test]
    fn config_mismatches_are_rejected() {
        let bad_tick = QueueConfig {
            tick_duration_ms: 2.0,
            ..QueueConfig::default()
        };
        assert!(RadioSim::new(RadioConfig::default(), bad_tick, vec![], 2).is_err());
        let stray = vec![UeChannelState::uniform(0, 5, 1.0)];
        assert!(RadioSim::new(RadioConfig::default(), QueueConfig::default(), stray, 2).is_err());
    }

    #[test]
    fn multiple_ues_split_slice_rbs() {
        let channels = vec![
            UeChannelState::uniform(0, 0, 1.0),
            UeChannelState::uniform(1, 0, 3.0),
            UeChannelState::uniform(2, 1, 1.0),
        ];
        let sim =
            RadioSim::new(RadioConfig::default(), QueueConfig::default(), channels, 2).unwrap();
        let caps = sim.slice_capacities(&[5, 101]).unwrap();
        // UE 0 gets 3 RBs at 1 bit/Hz, UE 1 gets 2 RBs at 2 bits/Hz.
        assert_relative_eq!(caps[0], 180_000.0 * (3.0 + 4.0));
        assert_relative_eq!(caps[1], 180_000.0 * 101.0);
    }

    #[test]
    fn jitter_is_seeded() {
        let queue = QueueConfig {
            arrival_jitter: 0.5,
            jitter_seed: 4,
            ..QueueConfig::default()
        };
        let channels = vec![
            UeChannelState::uniform(0, 0, 1000.0),
            UeChannelState::uniform(1, 1, 1000.0),
        ];
        let sim = RadioSim::new(RadioConfig::default(), queue, channels, 2).unwrap();
        let run = || {
            let mut st = sim.initial_state();
            (0..3)
                .map(|_| sim.step(&mut st, &[90.0, 60.0], &[53, 53]).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn capacity_monotone(sinr in 0.0f64..1e4, bump in 0.0f64..100.0, rbs in 0u32..200) {
            let ue = UeChannelState::uniform(0, 0, sinr);
            let c = channel_capacity(&ue, rbs, 180e3).unwrap();
            prop_assert!(channel_capacity(&ue, rbs + 1, 180e3).unwrap() >= c);
            let better = UeChannelState::uniform(0, 0, sinr + bump);
            prop_assert!(channel_capacity(&better, rbs, 180e3).unwrap() >= c);
        }

        #[test]
        fn latency_nonincreasing_in_rbs(rate in 10.0f64..200.0, x in 1u32..104) {
            let sim = sim_with(106, 2000.0, 256);
            let st = sim.initial_state();
            let (a, _) = sim.simulate_interval(&st, &[rate, 50.0], &[x, 106 - x]).unwrap();
            let (b, _) = sim.simulate_interval(&st, &[rate, 50.0], &[x + 1, 105 - x]).unwrap();
            prop_assert!(b.slices[0].mean_latency_ms <= a.slices[0].mean_latency_ms + 1e-9,
                "{} RBs: {} ms, {} RBs: {} ms", x, a.slices[0].mean_latency_ms, x + 1, b.slices[0].mean_latency_ms);
        }

        #[test]
        fn no_drops_below_capacity(x in 1u32..106, frac in 0.0f64..1.0) {
            let sim = sim_with(106, 2000.0, 256);
            let cap = sim.slice_capacities(&[x, 106 - x]).unwrap()[0] / 1e6;
            let (k, _) = sim.simulate_interval(&sim.initial_state(), &[cap * frac, 0.0], &[x, 106 - x]).unwrap();
            prop_assert_eq!(k.slices[0].dropped_packets, 0);
        }
    }
}
