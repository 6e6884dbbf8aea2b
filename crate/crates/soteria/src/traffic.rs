//! Workload generation: synthetic uniform and hotspot patterns plus a
//! line-oriented trace format, and routing of each request onto channel
//! legs.
//!
//! Trace lines are `<cycle> <src> {<dst>[,<dst>...]} <U|M>` with `#`
//! comments and non-decreasing cycles. Routing yields one leg per channel
//! traversal: direct where a channel connects the pair, two legs through
//! the turn tile on grid fabrics, and zero legs for same-gateway traffic
//! on clustered fabrics (which rides the electrical network).

use crate::cipher::CommType;
use crate::error::{Error, Result};
use crate::fabric::{Architecture, Fabric};
use crate::ids::{ChannelId, GatewayId};
use crate::{domains, mix_seed};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficMode {
    SyntheticUniform,
    SyntheticHotspot,
    TraceFile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficSpec {
    pub mode: TrafficMode,
    /// Per-gateway injection probability per cycle (synthetic modes).
    pub injection_rate: f64,
    /// Fraction of injected packets that become multicasts.
    pub multicast_fraction: f64,
    /// Favored destination (hotspot mode).
    pub hotspot: Option<GatewayId>,
    /// Hotspot draw weight relative to a weight of 1 per other gateway.
    pub hotspot_weight: f64,
    pub trace_path: Option<PathBuf>,
    /// Pre-parsed trace, taking precedence over `trace_path`.
    #[serde(skip)]
    pub trace_entries: Option<Vec<TraceEntry>>,
}

impl Default for TrafficSpec {
    fn default() -> Self {
        Self {
            mode: TrafficMode::SyntheticUniform,
            injection_rate: 0.02,
            multicast_fraction: 0.1,
            hotspot: None,
            hotspot_weight: 4.0,
            trace_path: None,
            trace_entries: None,
        }
    }
}

impl TrafficSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.injection_rate) {
            return Err(Error::InvalidParameter(format!(
                "injection_rate {} outside [0, 1]",
                self.injection_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.multicast_fraction) {
            return Err(Error::InvalidParameter(format!(
                "multicast_fraction {} outside [0, 1]",
                self.multicast_fraction
            )));
        }
        match self.mode {
            TrafficMode::SyntheticHotspot => {
                if self.hotspot.is_none() {
                    return Err(Error::InvalidParameter(
                        "hotspot mode requires a hotspot gateway".into(),
                    ));
                }
                if !self.hotspot_weight.is_finite() || self.hotspot_weight < 1.0 {
                    return Err(Error::InvalidParameter(format!(
                        "hotspot_weight {} must be >= 1",
                        self.hotspot_weight
                    )));
                }
            }
            TrafficMode::TraceFile => {
                if self.trace_path.is_none() && self.trace_entries.is_none() {
                    return Err(Error::InvalidParameter(
                        "trace mode requires trace_path or inline entries".into(),
                    ));
                }
            }
            TrafficMode::SyntheticUniform => {}
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub cycle: u64,
    pub src: GatewayId,
    pub destinations: BTreeSet<GatewayId>,
    pub comm_type: CommType,
}

/// Parses the trace format. Errors carry 1-based line numbers.
pub fn parse_trace(text: &str) -> Result<Vec<TraceEntry>> {
    let mut entries = Vec::new();
    let mut last_cycle = 0u64;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let fail = |msg: String| Error::TraceParse { line, msg };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(fail(format!(
                "expected `<cycle> <src> {{<dst>,...}} <U|M>`, got {} fields",
                fields.len()
            )));
        }
        let cycle: u64 = fields[0]
            .parse()
            .map_err(|_| fail(format!("bad cycle {:?}", fields[0])))?;
        if cycle < last_cycle {
            return Err(fail(format!(
                "cycle {cycle} decreases from previous {last_cycle}"
            )));
        }
        last_cycle = cycle;
        let src = GatewayId(
            fields[1]
                .parse()
                .map_err(|_| fail(format!("bad source {:?}", fields[1])))?,
        );
        let dst_field = fields[2];
        let inner = dst_field
            .strip_prefix('{')
            .and_then(|s| s.strip_suffix('}'))
            .ok_or_else(|| fail(format!("destinations {dst_field:?} must be brace-wrapped")))?;
        let mut destinations = BTreeSet::new();
        for part in inner.split(',') {
            let part = part.trim();
            if part.is_empty() {
                return Err(fail("empty destination entry".into()));
            }
            let id: u32 = part
                .parse()
                .map_err(|_| fail(format!("bad destination {part:?}")))?;
            if !destinations.insert(GatewayId(id)) {
                return Err(fail(format!("duplicate destination {id}")));
            }
        }
        let comm_type = match fields[3] {
            "U" => CommType::Unicast,
            "M" => CommType::Multicast,
            other => return Err(fail(format!("bad type {other:?}, expected U or M"))),
        };
        match comm_type {
            CommType::Unicast if destinations.len() != 1 => {
                return Err(fail(format!(
                    "unicast must name exactly 1 destination, got {}",
                    destinations.len()
                )));
            }
            CommType::Multicast if destinations.len() < 2 => {
                return Err(fail("multicast needs at least 2 destinations".into()));
            }
            _ => {}
        }
        entries.push(TraceEntry {
            cycle,
            src,
            destinations,
            comm_type,
        });
    }
    Ok(entries)
}

pub fn load_trace(path: &Path) -> Result<Vec<TraceEntry>> {
    parse_trace(&std::fs::read_to_string(path)?)
}

/// One channel traversal of a packet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Leg {
    pub channel: ChannelId,
    pub destinations: BTreeSet<GatewayId>,
}

/// A routed injection request. `legs` are traversed in order; an empty
/// list with `electrical_hops > 0` is intra-cluster electrical traffic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InjectedPacket {
    pub created_cycle: u64,
    pub src: GatewayId,
    pub dst_set: BTreeSet<GatewayId>,
    pub comm_type: CommType,
    pub legs: Vec<Leg>,
    pub electrical_hops: u64,
}

/// Routes src -> dst onto channel legs. Grid fabrics turn once: a row leg
/// to the tile sharing the source's row and the destination's column, then
/// a column leg. The channel among parallel candidates is drawn uniformly.
pub fn route_unicast<R: Rng + ?Sized>(
    fabric: &Fabric,
    src: GatewayId,
    dst: GatewayId,
    rng: &mut R,
) -> Result<Vec<Leg>> {
    if src == dst {
        if fabric.arch == Architecture::Firefly {
            return Ok(Vec::new());
        }
        return Err(Error::Structural(format!(
            "gateway {src} cannot photonically target itself"
        )));
    }
    let direct = fabric.channels_between(src, dst);
    if !direct.is_empty() {
        let channel = direct[rng.random_range(0..direct.len())];
        return Ok(vec![Leg {
            channel,
            destinations: BTreeSet::from([dst]),
        }]);
    }
    if let Some(grid) = fabric.grid {
        let (sr, _) = fabric.tile_of(src).unwrap();
        let (_, dc) = fabric.tile_of(dst).unwrap();
        let turn = GatewayId((sr * grid + dc) as u32);
        let first = fabric
            .row_channel(sr)
            .ok_or_else(|| Error::Structural(format!("no row channel for gateway {src}")))?;
        let second = fabric
            .col_channel(dc)
            .ok_or_else(|| Error::Structural(format!("no column channel for gateway {dst}")))?;
        return Ok(vec![
            Leg {
                channel: first,
                destinations: BTreeSet::from([turn]),
            },
            Leg {
                channel: second,
                destinations: BTreeSet::from([dst]),
            },
        ]);
    }
    Err(Error::Structural(format!("no route from {src} to {dst}")))
}

/// Routes a multicast: the destination set must share one channel reachable
/// from the source. Grid fabrics therefore multicast within a row or column.
pub fn route_multicast(
    fabric: &Fabric,
    src: GatewayId,
    destinations: &BTreeSet<GatewayId>,
) -> Result<Vec<Leg>> {
    if destinations.len() < 2 {
        return Err(Error::Structural(
            "multicast needs at least 2 destinations".into(),
        ));
    }
    if destinations.contains(&src) {
        return Err(Error::Structural(format!(
            "multicast from {src} includes itself"
        )));
    }
    let channel = fabric
        .channels
        .iter()
        .find(|c| {
            c.sources.contains(&src) && destinations.iter().all(|d| c.destinations.contains(d))
        })
        .ok_or_else(|| {
            Error::Structural(format!(
                "no single channel carries the multicast group from {src}"
            ))
        })?;
    Ok(vec![Leg {
        channel: channel.id,
        destinations: destinations.clone(),
    }])
}

pub struct TrafficGen {
    spec: TrafficSpec,
    rng: ChaCha8Rng,
    trace: Vec<TraceEntry>,
    cursor: usize,
}

impl TrafficGen {
    pub fn new(spec: &TrafficSpec, fabric: &Fabric, seed: u64) -> Result<Self> {
        spec.validate()?;
        if let Some(h) = spec.hotspot {
            if h.index() >= fabric.gateways.len() || !fabric.gateway(h).is_destination {
                return Err(Error::InvalidParameter(format!(
                    "hotspot gateway {h} is not a destination on this fabric"
                )));
            }
        }
        let trace = match spec.mode {
            TrafficMode::TraceFile => match &spec.trace_entries {
                Some(entries) => entries.clone(),
                None => load_trace(spec.trace_path.as_ref().unwrap())?,
            },
            _ => Vec::new(),
        };
        for (i, e) in trace.iter().enumerate() {
            let bad_gateway = |id: GatewayId| Error::InvalidSpec(format!(
                "trace entry {} references gateway {id} outside the {}-gateway fabric",
                i + 1,
                fabric.gateways.len()
            ));
            if e.src.index() >= fabric.gateways.len() {
                return Err(bad_gateway(e.src));
            }
            for &d in &e.destinations {
                if d.index() >= fabric.gateways.len() {
                    return Err(bad_gateway(d));
                }
            }
        }
        Ok(Self {
            spec: spec.clone(),
            rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, domains::TRAFFIC)),
            trace,
            cursor: 0,
        })
    }

    /// Trace mode has a finite horizon; synthetic modes never exhaust.
    pub fn exhausted(&self) -> bool {
        self.spec.mode == TrafficMode::TraceFile && self.cursor >= self.trace.len()
    }

    pub fn next_trace_cycle(&self) -> Option<u64> {
        self.trace.get(self.cursor).map(|e| e.cycle)
    }

    /// All packets injected at `cycle`, routed. Gateways draw in ascending
    /// id order so a run is a pure function of (spec, fabric, seed).
    pub fn injections_at(&mut self, cycle: u64, fabric: &Fabric) -> Result<Vec<InjectedPacket>> {
        match self.spec.mode {
            TrafficMode::TraceFile => self.trace_injections(cycle, fabric),
            _ => self.synthetic_injections(cycle, fabric),
        }
    }

    fn trace_injections(&mut self, cycle: u64, fabric: &Fabric) -> Result<Vec<InjectedPacket>> {
        let mut out = Vec::new();
        while self.cursor < self.trace.len() && self.trace[self.cursor].cycle == cycle {
            let e = self.trace[self.cursor].clone();
            self.cursor += 1;
            let packet = match e.comm_type {
                CommType::Unicast => {
                    let dst = *e.destinations.iter().next().unwrap();
                    let legs = route_unicast(fabric, e.src, dst, &mut self.rng)?;
                    let electrical_hops = if legs.is_empty() { 1 } else { 0 };
                    InjectedPacket {
                        created_cycle: cycle,
                        src: e.src,
                        dst_set: e.destinations,
                        comm_type: CommType::Unicast,
                        legs,
                        electrical_hops,
                    }
                }
                CommType::Multicast => InjectedPacket {
                    created_cycle: cycle,
                    src: e.src,
                    legs: route_multicast(fabric, e.src, &e.destinations)?,
                    dst_set: e.destinations,
                    comm_type: CommType::Multicast,
                    electrical_hops: 0,
                },
            };
            out.push(packet);
        }
        Ok(out)
    }

    fn synthetic_injections(&mut self, cycle: u64, fabric: &Fabric) -> Result<Vec<InjectedPacket>> {
        let mut out = Vec::new();
        let sources: Vec<GatewayId> = fabric
            .gateways
            .iter()
            .filter(|g| g.is_source)
            .map(|g| g.id)
            .collect();
        for src in sources {
            if !self.rng.random_bool(self.spec.injection_rate) {
                continue;
            }
            let multicast = self.spec.multicast_fraction > 0.0
                && self.rng.random_bool(self.spec.multicast_fraction);
            let packet = if multicast {
                self.draw_multicast(cycle, src, fabric)?
            } else {
                self.draw_unicast(cycle, src, fabric)?
            };
            if let Some(p) = packet {
                out.push(p);
            }
        }
        Ok(out)
    }

    fn draw_unicast(
        &mut self,
        cycle: u64,
        src: GatewayId,
        fabric: &Fabric,
    ) -> Result<Option<InjectedPacket>> {
        // Clustered fabrics keep same-cluster traffic on the electrical
        // network, so the pool includes the source itself there.
        let include_self = fabric.arch == Architecture::Firefly;
        let pool: Vec<GatewayId> = fabric
            .gateways
            .iter()
            .filter(|g| g.is_destination && (include_self || g.id != src))
            .map(|g| g.id)
            .collect();
        if pool.is_empty() {
            return Ok(None);
        }
        let dst = match (self.spec.mode, self.spec.hotspot) {
            (TrafficMode::SyntheticHotspot, Some(h)) if pool.contains(&h) => {
                let total = self.spec.hotspot_weight + (pool.len() - 1) as f64;
                let mut u = self.rng.random_range(0.0..total);
                let mut picked = h;
                for &g in &pool {
                    let w = if g == h { self.spec.hotspot_weight } else { 1.0 };
                    if u < w {
                        picked = g;
                        break;
                    }
                    u -= w;
                }
                picked
            }
            _ => pool[self.rng.random_range(0..pool.len())],
        };
        let legs = route_unicast(fabric, src, dst, &mut self.rng)?;
        let electrical_hops = if legs.is_empty() { 1 } else { 0 };
        Ok(Some(InjectedPacket {
            created_cycle: cycle,
            src,
            dst_set: BTreeSet::from([dst]),
            comm_type: CommType::Unicast,
            legs,
            electrical_hops,
        }))
    }

    fn draw_multicast(
        &mut self,
        cycle: u64,
        src: GatewayId,
        fabric: &Fabric,
    ) -> Result<Option<InjectedPacket>> {
        // Groups live on one channel: pick a channel this source drives
        // with at least 2 other destinations, then 2-4 members on it.
        let candidates: Vec<(ChannelId, Vec<GatewayId>)> = fabric
            .channels
            .iter()
            .filter(|c| c.sources.contains(&src))
            .map(|c| {
                (
                    c.id,
                    c.destinations
                        .iter()
                        .copied()
                        .filter(|d| *d != src)
                        .collect::<Vec<_>>(),
                )
            })
            .filter(|(_, pool)| pool.len() >= 2)
            .collect();
        if candidates.is_empty() {
            // Fall back to a unicast rather than silently dropping the slot.
            return self.draw_unicast(cycle, src, fabric);
        }
        let (channel, pool) = &candidates[self.rng.random_range(0..candidates.len())];
        let k = self.rng.random_range(2..=pool.len().min(4));
        let destinations: BTreeSet<GatewayId> =
            rand::seq::index::sample(&mut self.rng, pool.len(), k)
                .iter()
                .map(|i| pool[i])
                .collect();
        Ok(Some(InjectedPacket {
            created_cycle: cycle,
            src,
            dst_set: destinations.clone(),
            comm_type: CommType::Multicast,
            legs: vec![Leg {
                channel: *channel,
                destinations,
            }],
            electrical_hops: 0,
        }))
    }
}
