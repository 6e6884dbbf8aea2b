//! Cycle-level simulation of packet flow over a built fabric.
//!
//! Timing model per channel traversal: one reservation cycle, then the
//! data slot serializes `packet_bits` over the data wavelengths at one
//! bit per wavelength per cycle, then the tail bit propagates for the
//! channel's traversal cycles. Each channel grants at most one reservation
//! per cycle; the next reservation may run concurrently with a granted
//! data slot, and the wire itself is busy only for the serialization
//! window.
//!
//! Encipherment adds one encrypt stage at injection and one decrypt stage
//! at delivery (two cycles per secured traversal). Both are pipeline
//! stages outside the channel: they extend packet latency but never wire
//! occupancy, so the grant schedule of a run is identical with security
//! on or off, and the latency delta is exactly two cycles per secured
//! traversal even under contention.
//!
//! Measurement: packets created during warmup are never measured; the
//! first `measured_packets` created afterwards are. The run ends once all
//! measured packets deliver (or the trace drains). Dynamic energy counts
//! measured packets only; static energy integrates the standing-power
//! breakdown over the measurement window.

use crate::attacks::{AttackScenario, AttackState, LegView, SecurityReport};
use crate::bits::Bits512;
use crate::cipher::{decrypt, encrypt, select_key, CommType, Metadata, Packet};
use crate::error::{Error, Result};
use crate::fabric::Fabric;
use crate::ids::{ChannelId, GatewayId};
use crate::keyforge::{KeyStoreSet, Role};
use crate::photonics::{
    electrical_energy, packet_energy_breakdown, static_power, EnergyParams, LossParams,
    StaticPowerBreakdown,
};
use crate::traffic::{Leg, TrafficGen, TrafficMode, TrafficSpec};
use crate::{domains, mix_seed};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

/// Distinguishes the payload stream from the injection-decision stream so
/// payload draws never perturb traffic timing.
const PAYLOAD_STREAM: u64 = 0x7061_796c_6f61_6400;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub clock_ghz: f64,
    pub packet_bits: u64,
    /// Channels under PDES encipherment (when `pdes_enabled`).
    pub secured_channels: BTreeSet<ChannelId>,
    pub pdes_enabled: bool,
    /// Honor reservation waveguides for metadata protection.
    pub ramps_enabled: bool,
    pub traffic: TrafficSpec,
    pub warmup_cycles: u64,
    pub measured_packets: usize,
    pub seed: u64,
    /// No grant or delivery for this many cycles with packets in flight is
    /// reported as a deadlock.
    pub deadlock_cycle_budget: u64,
    /// Hard stop; a run that hits it reports whatever it measured.
    pub max_cycles: Option<u64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            clock_ghz: 5.0,
            packet_bits: 512,
            secured_channels: BTreeSet::new(),
            pdes_enabled: true,
            ramps_enabled: true,
            traffic: TrafficSpec::default(),
            warmup_cycles: 1000,
            measured_packets: 2000,
            seed: 42,
            deadlock_cycle_budget: 100_000,
            max_cycles: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, fabric: &Fabric) -> Result<()> {
        if !self.clock_ghz.is_finite() || self.clock_ghz <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "clock_ghz {} must be positive",
                self.clock_ghz
            )));
        }
        if self.packet_bits == 0 {
            return Err(Error::InvalidParameter("packet_bits must be positive".into()));
        }
        for id in &self.secured_channels {
            if id.index() >= fabric.channels.len() {
                return Err(Error::InvalidParameter(format!(
                    "secured channel {id} does not exist"
                )));
            }
        }
        self.traffic.validate()
    }
}

/// Latency statistics for packets sharing a photonic traversal count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraversalClass {
    pub packets: u64,
    /// Integer cycle sum, exact for cross-run deltas.
    pub total_latency_cycles: u64,
    pub avg_latency_cycles: f64,
}

/// Energy audit bucket: all measured packets with the same leg shape.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyClass {
    pub photonic_legs: u64,
    pub enciphered_legs: u64,
    pub electrical_hops: u64,
    pub packets: u64,
    pub energy_j: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub packets_injected: u64,
    pub packets_delivered: u64,
    pub measured_packets: u64,
    pub avg_latency_cycles: f64,
    pub latency_histogram: BTreeMap<u64, u64>,
    pub latency_by_traversals: BTreeMap<u64, TraversalClass>,
    pub dynamic_energy_j: f64,
    pub static_energy_j: f64,
    pub total_energy_j: f64,
    pub static_power: StaticPowerBreakdown,
    /// Total energy times mean packet latency in seconds.
    pub edp_js: f64,
    /// Warmup end to last measured delivery.
    pub window_cycles: u64,
    pub run_cycles: u64,
    /// True when the run produced no measured deliveries (for example at
    /// zero injection rate); energy and latency metrics are zero then.
    pub empty_measurement: bool,
    /// Wire-busy fraction per channel over the whole run.
    pub per_channel_utilization: Vec<f64>,
    pub energy_classes: Vec<EnergyClass>,
    pub enciphered_traversals: u64,
    /// Measured packets whose delivered payload failed verification.
    pub integrity_violations: u64,
    pub security: Option<SecurityReport>,
}

#[derive(Serialize, Deserialize)]
struct ReportFile {
    kind: String,
    version: u32,
    report: RunReport,
}

impl RunReport {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = ReportFile {
            kind: "report".into(),
            version: 1,
            report: self.clone(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ReportFile = serde_json::from_str(&text)?;
        if file.kind != "report" || file.version != 1 {
            return Err(Error::InvalidParameter(format!(
                "not a version-1 report artifact: kind {:?} version {}",
                file.kind, file.version
            )));
        }
        Ok(file.report)
    }
}

struct Flight {
    packet: Packet,
    original_payload: Bits512,
    legs: Vec<Leg>,
    current_leg: usize,
    /// Gateway that injects the current leg (the turn gateway after the
    /// first leg of a two-leg route).
    leg_src: GatewayId,
    electrical_hops: u64,
    security_delay: u64,
    enciphered_legs: u64,
    measured: bool,
}

struct ChannelState {
    queues: Vec<VecDeque<usize>>,
    rr: usize,
    queued: usize,
    wire_free_at: u64,
    next_grant_at: u64,
    busy_cycles: u64,
}

/// Runs one simulation. The result is a pure function of the arguments;
/// attack scenarios draw from their own random stream and cannot perturb
/// traffic, scheduling, or energy.
pub fn run(
    fabric: &Fabric,
    map: &crate::pvmap::PvMap,
    stores: &KeyStoreSet,
    loss: &LossParams,
    energy: &EnergyParams,
    cfg: &SimConfig,
    scenario: Option<&AttackScenario>,
) -> Result<RunReport> {
    cfg.validate(fabric)?;
    if cfg.pdes_enabled {
        for id in &cfg.secured_channels {
            let channel = fabric.channel(*id);
            for &src in &channel.sources {
                if stores.get(src, *id, Role::Source).is_none() {
                    return Err(Error::Structural(format!(
                        "secured channel {id} has no source keystore for gateway {src}"
                    )));
                }
            }
            for &dst in &channel.destinations {
                if stores.get(dst, *id, Role::Destination).is_none() {
                    return Err(Error::Structural(format!(
                        "secured channel {id} has no destination keystore for gateway {dst}"
                    )));
                }
            }
        }
    }
    if let Some(s) = scenario {
        s.validate(fabric)?;
    }

    let static_breakdown = static_power(fabric, map, loss, energy)?;
    let mut gen = TrafficGen::new(&cfg.traffic, fabric, cfg.seed)?;
    let mut payload_rng =
        ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(cfg.seed, domains::TRAFFIC), PAYLOAD_STREAM));
    let mut attack = scenario.map(|s| AttackState::new(s, cfg.seed));

    let mut channels: Vec<ChannelState> = fabric
        .channels
        .iter()
        .map(|c| ChannelState {
            queues: vec![VecDeque::new(); c.sources.len()],
            rr: 0,
            queued: 0,
            wire_free_at: 0,
            next_grant_at: 0,
            busy_cycles: 0,
        })
        .collect();

    let mut flights: Vec<Flight> = Vec::new();
    let mut completes: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    let quota = cfg.measured_packets as u64;
    let mut assigned = 0u64;
    let mut delivered_measured = 0u64;
    let mut injected = 0u64;
    let mut delivered = 0u64;
    let mut in_flight = 0u64;
    let mut last_progress = 0u64;
    let mut window_end = cfg.warmup_cycles;
    let mut latency_sum = 0u64;
    let mut histogram: BTreeMap<u64, u64> = BTreeMap::new();
    let mut traversal_classes: BTreeMap<u64, TraversalClass> = BTreeMap::new();
    let mut energy_classes: BTreeMap<(u64, u64, u64), (u64, f64)> = BTreeMap::new();
    let mut dynamic_energy = 0.0f64;
    let mut enciphered_traversals = 0u64;
    let mut integrity_violations = 0u64;

    let synthetic_idle = cfg.traffic.mode != TrafficMode::TraceFile
        && (cfg.traffic.injection_rate == 0.0 || !fabric.gateways.iter().any(|g| g.is_source));
    let enciphered =
        |ch: ChannelId| cfg.pdes_enabled && cfg.secured_channels.contains(&ch);

    let mut cycle = 0u64;
    let mut run_cycles = 0u64;
    if quota > 0 && !synthetic_idle {
        loop {
            // 1. Wire completions: decrypt, advance multi-leg packets, or
            // deliver.
            if let Some(done) = completes.remove(&cycle) {
                for idx in done {
                    last_progress = cycle;
                    let flight = &mut flights[idx];
                    let is_photonic = !flight.legs.is_empty();
                    let mut next_leg_channel: Option<ChannelId> = None;
                    if is_photonic {
                        let leg = &flight.legs[flight.current_leg];
                        let leg_target = *leg.destinations.iter().next().unwrap();
                        if enciphered(leg.channel) {
                            let store = stores
                                .get(leg_target, leg.channel, Role::Destination)
                                .expect("validated above");
                            let meta = Metadata {
                                target: leg_target,
                                comm_type: flight.packet.comm_type,
                            };
                            let key = select_key(store, &meta)?;
                            flight.packet = decrypt(flight.packet.clone(), &key)?;
                        }
                        if flight.current_leg + 1 < flight.legs.len() {
                            flight.current_leg += 1;
                            flight.leg_src = leg_target;
                            next_leg_channel = Some(flight.legs[flight.current_leg].channel);
                        }
                    }
                    match next_leg_channel {
                        Some(ch) => {
                            let state = &mut channels[ch.index()];
                            let src_slot = fabric.channel(ch)
                                .sources
                                .iter()
                                .position(|s| *s == flights[idx].leg_src)
                                .ok_or_else(|| {
                                    Error::Structural(format!(
                                        "gateway {} cannot drive channel {ch}",
                                        flights[idx].leg_src
                                    ))
                                })?;
                            state.queues[src_slot].push_back(idx);
                            state.queued += 1;
                        }
                        None => {
                            let flight = &mut flights[idx];
                            let delivered_cycle = cycle + flight.security_delay;
                            flight.packet.delivered_cycle = Some(delivered_cycle);
                            delivered += 1;
                            in_flight -= 1;
                            if flight.measured
                                && (flight.packet.encrypted
                                    || flight.packet.payload != flight.original_payload)
                            {
                                integrity_violations += 1;
                            }
                            if flight.measured {
                                delivered_measured += 1;
                                window_end = window_end.max(delivered_cycle);
                                let latency = delivered_cycle - flight.packet.created_cycle;
                                latency_sum += latency;
                                *histogram.entry(latency).or_insert(0) += 1;
                                let class = traversal_classes
                                    .entry(flight.legs.len() as u64)
                                    .or_default();
                                class.packets += 1;
                                class.total_latency_cycles += latency;
                                enciphered_traversals += flight.enciphered_legs;

                                let mut joules = electrical_energy(
                                    cfg.packet_bits,
                                    energy,
                                    flight.electrical_hops as u32,
                                );
                                for li in 0..flight.legs.len() {
                                    let secured = enciphered(flight.legs[li].channel);
                                    joules += packet_energy_breakdown(
                                        cfg.packet_bits,
                                        energy,
                                        secured,
                                        0,
                                    )?
                                    .total_j();
                                }
                                dynamic_energy += joules;
                                let key = (
                                    flight.legs.len() as u64,
                                    flight.enciphered_legs,
                                    flight.electrical_hops,
                                );
                                let bucket = energy_classes.entry(key).or_insert((0, 0.0));
                                bucket.0 += 1;
                                bucket.1 += joules;
                            }
                        }
                    }
                }
            }

            // 2. Injections at this cycle.
            if !gen.exhausted() {
                for ip in gen.injections_at(cycle, fabric)? {
                    let payload = Bits512::random(&mut payload_rng);
                    let packet = match ip.comm_type {
                        CommType::Unicast => Packet::unicast(
                            ip.src,
                            *ip.dst_set.iter().next().unwrap(),
                            payload,
                            cycle,
                        ),
                        CommType::Multicast => {
                            Packet::multicast(ip.src, ip.dst_set.clone(), payload, cycle)?
                        }
                    };
                    let measured = cycle >= cfg.warmup_cycles && assigned < quota;
                    if measured {
                        assigned += 1;
                    }
                    let idx = flights.len();
                    let electrical = ip.legs.is_empty();
                    flights.push(Flight {
                        packet,
                        original_payload: payload,
                        legs: ip.legs,
                        current_leg: 0,
                        leg_src: ip.src,
                        electrical_hops: ip.electrical_hops,
                        security_delay: 0,
                        enciphered_legs: 0,
                        measured,
                    });
                    injected += 1;
                    in_flight += 1;
                    if electrical {
                        let done_at =
                            cycle + ip.electrical_hops * fabric.electrical_hop_cycles;
                        completes.entry(done_at).or_default().push(idx);
                    } else {
                        let ch = flights[idx].legs[0].channel;
                        let src_slot = fabric
                            .channel(ch)
                            .sources
                            .iter()
                            .position(|s| *s == ip.src)
                            .ok_or_else(|| {
                                Error::Structural(format!(
                                    "gateway {} cannot drive channel {ch}",
                                    ip.src
                                ))
                            })?;
                        let state = &mut channels[ch.index()];
                        state.queues[src_slot].push_back(idx);
                        state.queued += 1;
                    }
                }
            }

            // 3. One reservation grant per channel per cycle.
            for (ci, state) in channels.iter_mut().enumerate() {
                if state.queued == 0 || state.next_grant_at > cycle {
                    continue;
                }
                let n = state.queues.len();
                let Some(offset) = (0..n).find(|o| !state.queues[(state.rr + o) % n].is_empty())
                else {
                    continue;
                };
                let slot = (state.rr + offset) % n;
                let idx = state.queues[slot].pop_front().unwrap();
                state.rr = (slot + 1) % n;
                state.queued -= 1;
                last_progress = cycle;

                let channel = &fabric.channels[ci];
                let serialization = cfg.packet_bits.div_ceil(fabric.n_wavelengths as u64);
                let start = (cycle + 1).max(state.wire_free_at);
                state.wire_free_at = start + serialization;
                state.next_grant_at = start;
                state.busy_cycles += serialization;

                let flight = &mut flights[idx];
                let leg = flight.legs[flight.current_leg].clone();
                let leg_target = *leg.destinations.iter().next().unwrap();
                let is_enciphered = enciphered(leg.channel);
                let mut key_bits = None;
                if is_enciphered {
                    let store = stores
                        .get(flight.leg_src, leg.channel, Role::Source)
                        .expect("validated above");
                    let meta = Metadata {
                        target: leg_target,
                        comm_type: flight.packet.comm_type,
                    };
                    let key = select_key(store, &meta)?;
                    flight.packet = encrypt(flight.packet.clone(), &key)?;
                    flight.security_delay += 2;
                    flight.enciphered_legs += 1;
                    key_bits = Some(key);
                }
                if let Some(attack) = attack.as_mut() {
                    attack.observe(
                        stores,
                        &LegView {
                            channel,
                            announced: &leg.destinations,
                            comm_type: flight.packet.comm_type,
                            leg_target,
                            enciphered: is_enciphered,
                            metadata_protected: cfg.ramps_enabled && channel.ramps.is_some(),
                            key_bits,
                            measured: flight.measured,
                        },
                    );
                }
                let arrive = start + serialization + channel.traversal_cycles;
                completes.entry(arrive).or_default().push(idx);
            }

            run_cycles = cycle;

            // 4. Termination.
            let measured_done = assigned == quota && delivered_measured == assigned;
            if measured_done && in_flight == 0 {
                break;
            }
            if measured_done && cfg.traffic.mode != TrafficMode::TraceFile {
                // Background flights still in flight are abandoned; they
                // carry no measurements.
                break;
            }
            if gen.exhausted() && in_flight == 0 {
                break;
            }
            if let Some(max) = cfg.max_cycles {
                if cycle >= max {
                    break;
                }
            }
            if in_flight > 0 && cycle - last_progress > cfg.deadlock_cycle_budget {
                return Err(Error::Deadlock {
                    cycle,
                    budget: cfg.deadlock_cycle_budget,
                });
            }

            // Trace gaps with nothing in flight fast-forward to the next
            // event instead of idling cycle by cycle.
            cycle += 1;
            if in_flight == 0 {
                if let Some(next) = gen.next_trace_cycle() {
                    cycle = cycle.max(next);
                }
            }
        }
    }

    let empty_measurement = delivered_measured == 0;
    let window_cycles = window_end.saturating_sub(cfg.warmup_cycles);
    let clock_hz = cfg.clock_ghz * 1e9;
    let static_energy = static_breakdown.total_w * window_cycles as f64 / clock_hz;
    let (dynamic_energy, static_energy) = if empty_measurement {
        (0.0, 0.0)
    } else {
        (dynamic_energy, static_energy)
    };
    let total_energy = dynamic_energy + static_energy;
    let avg_latency = if empty_measurement {
        0.0
    } else {
        latency_sum as f64 / delivered_measured as f64
    };
    let edp = total_energy * (avg_latency / clock_hz);
    for class in traversal_classes.values_mut() {
        class.avg_latency_cycles = class.total_latency_cycles as f64 / class.packets as f64;
    }

    Ok(RunReport {
        packets_injected: injected,
        packets_delivered: delivered,
        measured_packets: delivered_measured,
        avg_latency_cycles: avg_latency,
        latency_histogram: histogram,
        latency_by_traversals: traversal_classes,
        dynamic_energy_j: dynamic_energy,
        static_energy_j: static_energy,
        total_energy_j: total_energy,
        static_power: static_breakdown,
        edp_js: edp,
        window_cycles,
        run_cycles,
        empty_measurement,
        per_channel_utilization: channels
            .iter()
            .map(|s| {
                if run_cycles == 0 {
                    0.0
                } else {
                    (s.busy_cycles.min(run_cycles)) as f64 / run_cycles as f64
                }
            })
            .collect(),
        energy_classes: energy_classes
            .into_iter()
            .map(|((legs, sec, hops), (packets, energy_j))| EnergyClass {
                photonic_legs: legs,
                enciphered_legs: sec,
                electrical_hops: hops,
                packets,
                energy_j,
            })
            .collect(),
        enciphered_traversals,
        integrity_violations,
        security: attack.map(AttackState::into_report),
    })
}
