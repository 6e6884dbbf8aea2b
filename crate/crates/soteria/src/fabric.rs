//! Topology construction: gateway interfaces, channels, waveguide
//! geometry, MR placements, and reservation waveguides.
//!
//! Three named architectures are provided plus a generic single-channel
//! fabric. Builders take a scale parameter because the acceptance suite
//! exercises 2-16 gateway variants; the full-scale defaults are Firefly 8
//! clusters, SwiftNoC 32 gateways, LumiNoC 8x8 tiles.
//!
//! Geometry is deliberately coarse: banks sit at their gateway's position,
//! serpentine routing is approximated by Manhattan segments for bend
//! counting, and end-to-end waveguide length is derived from the pinned
//! propagation cycle count at the configured clock.

use crate::error::{Error, Result};
use crate::ids::{ChannelId, GatewayId};
use crate::photonics::PathDescriptor;
use crate::pvmap::DieSpec;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Group velocity divisor for silicon waveguides.
pub const GROUP_INDEX: f64 = 4.0;
pub const LIGHT_SPEED_CM_PER_S: f64 = 2.997_924_58e10;
/// Ring-to-ring pitch inside a bank.
pub const MR_PITCH_MM: f64 = 0.01;
/// End-to-end propagation cycles at the reference clock.
pub const TRAVERSAL_CYCLES_CROSSBAR: u64 = 8;
pub const TRAVERSAL_CYCLES_LUMINOC: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Firefly,
    SwiftNoc,
    LumiNoc,
    Generic,
}

impl Architecture {
    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "firefly" => Ok(Self::Firefly),
            "swiftnoc" => Ok(Self::SwiftNoc),
            "luminoc" => Ok(Self::LumiNoc),
            "generic" => Ok(Self::Generic),
            other => Err(Error::InvalidParameter(format!(
                "unknown architecture {other:?} (expected firefly | swiftnoc | luminoc | generic)"
            ))),
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Self::Firefly => "firefly",
            Self::SwiftNoc => "swiftnoc",
            Self::LumiNoc => "luminoc",
            Self::Generic => "generic",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MrPlacement {
    pub x_mm: f64,
    pub y_mm: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GatewayInterface {
    pub id: GatewayId,
    pub cluster: u32,
    pub position_mm: (f64, f64),
    pub is_source: bool,
    pub is_destination: bool,
    pub modulator_bank: Vec<MrPlacement>,
    pub detector_bank: Vec<MrPlacement>,
    /// Two per reservation waveguide this gateway listens on.
    pub metadata_detectors: Vec<MrPlacement>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Swmr,
    Mwmr,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waveguide {
    pub n_wavelengths: usize,
    pub length_cm: f64,
}

/// Per-destination metadata wavelength pair on a reservation waveguide:
/// the selection wavelength announces the destination, the type wavelength
/// (asserted only for multicast) announces the communication type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataPair {
    pub destination: GatewayId,
    pub selection_lambda: usize,
    pub type_lambda: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReservationWaveguide {
    /// Direction-preserving switch pairs diverting reservation slots; one
    /// per data wavelength, clustered at the source end of the channel.
    pub double_mr_count: usize,
    pub metadata_pairs: Vec<MetadataPair>,
    pub metadata_detector_count: usize,
    /// Ring placements for power accounting: two rings per switch.
    pub double_mr_ring_placements: Vec<MrPlacement>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Channel {
    pub id: ChannelId,
    pub kind: ChannelKind,
    pub waveguides: Vec<Waveguide>,
    pub sources: Vec<GatewayId>,
    pub destinations: Vec<GatewayId>,
    pub ramps: Option<ReservationWaveguide>,
    pub secured: bool,
    pub length_cm: f64,
    pub traversal_cycles: u64,
}

impl Channel {
    /// Cycles to serialize one packet over the data wavelengths at
    /// 1 bit/wavelength/cycle. Wavelengths beyond the fabric-wide data comb
    /// (SwiftNoC's 68-wavelength waveguide) carry arbitration overhead and
    /// are excluded.
    pub fn serialization_cycles(&self, packet_bits: u64, data_wavelengths: usize) -> u64 {
        packet_bits.div_ceil(data_wavelengths as u64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FabricParams {
    pub n_wavelengths: usize,
    pub die: DieSpec,
    /// Clock used to convert pinned traversal cycles into waveguide length.
    pub clock_ghz: f64,
    /// Mark every channel secured (PDES encipherment) at build time.
    pub secured: bool,
    /// Attach a reservation waveguide to every channel at build time.
    pub ramps: bool,
    pub channel_length_cm: Option<f64>,
    /// Geometry sanity bound: channel length may not exceed this multiple
    /// of the die perimeter.
    pub max_length_perimeters: f64,
    /// Latency of one intra-cluster electrical hop (Firefly hybrid paths).
    pub electrical_hop_cycles: u64,
}

impl Default for FabricParams {
    fn default() -> Self {
        Self {
            n_wavelengths: 64,
            die: DieSpec::default(),
            clock_ghz: 5.0,
            secured: false,
            ramps: false,
            channel_length_cm: None,
            max_length_perimeters: 2.0,
            electrical_hop_cycles: 8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Fabric {
    pub arch: Architecture,
    pub die: DieSpec,
    pub n_wavelengths: usize,
    pub gateways: Vec<GatewayInterface>,
    pub channels: Vec<Channel>,
    /// Tiles per edge for LumiNoC; `None` elsewhere.
    pub grid: Option<usize>,
    pub electrical_hop_cycles: u64,
}

#[derive(Serialize, Deserialize)]
struct FabricFile {
    kind: String,
    version: u32,
    fabric: Fabric,
}

impl Fabric {
    pub fn gateway(&self, id: GatewayId) -> &GatewayInterface {
        &self.gateways[id.index()]
    }

    pub fn channel(&self, id: ChannelId) -> &Channel {
        &self.channels[id.index()]
    }

    /// Channels that carry src -> dst directly.
    pub fn channels_between(&self, src: GatewayId, dst: GatewayId) -> Vec<ChannelId> {
        self.channels
            .iter()
            .filter(|c| c.sources.contains(&src) && c.destinations.contains(&dst))
            .map(|c| c.id)
            .collect()
    }

    pub fn data_waveguide_count(&self) -> usize {
        self.channels.iter().map(|c| c.waveguides.len()).sum()
    }

    /// LumiNoC tile coordinates of a gateway.
    pub fn tile_of(&self, id: GatewayId) -> Option<(usize, usize)> {
        let g = self.grid?;
        let i = id.index();
        Some((i / g, i % g))
    }

    pub fn row_channel(&self, row: usize) -> Option<ChannelId> {
        let g = self.grid?;
        (row < g).then_some(ChannelId(row as u32))
    }

    pub fn col_channel(&self, col: usize) -> Option<ChannelId> {
        let g = self.grid?;
        (col < g).then(|| ChannelId((g + col) as u32))
    }

    /// Marks channels as PDES-secured.
    pub fn secure_channels(&mut self, ids: &[ChannelId]) -> Result<()> {
        for id in ids {
            if id.index() >= self.channels.len() {
                return Err(Error::InvalidParameter(format!(
                    "cannot secure unknown channel {id}"
                )));
            }
        }
        for id in ids {
            self.channels[id.index()].secured = true;
        }
        Ok(())
    }

    /// Adds a reservation waveguide to one channel: disjoint
    /// (selection, type) wavelength pairs in destination order, metadata
    /// detectors at each destination, and one double-MR switch per data
    /// wavelength. Attaching twice is an error, never silent duplication.
    pub fn attach_ramps(&mut self, id: ChannelId) -> Result<()> {
        if id.index() >= self.channels.len() {
            return Err(Error::InvalidParameter(format!(
                "cannot attach RAMPS to unknown channel {id}"
            )));
        }
        let n_wavelengths = self.n_wavelengths;
        let channel = &self.channels[id.index()];
        if channel.ramps.is_some() {
            return Err(Error::Structural(format!(
                "channel {id} already has a reservation waveguide"
            )));
        }
        if channel.destinations.is_empty() {
            return Err(Error::Structural(format!(
                "channel {id} has no destinations to reserve for"
            )));
        }
        if 2 * channel.destinations.len() > n_wavelengths {
            return Err(Error::Scalability(format!(
                "channel {id} has {} destinations but a reservation waveguide carries \
                 at most {} (2 metadata wavelengths per destination over {} wavelengths)",
                channel.destinations.len(),
                n_wavelengths / 2,
                n_wavelengths
            )));
        }

        let destinations = channel.destinations.clone();
        let metadata_pairs: Vec<MetadataPair> = destinations
            .iter()
            .enumerate()
            .map(|(i, &destination)| MetadataPair {
                destination,
                selection_lambda: 2 * i,
                type_lambda: 2 * i + 1,
            })
            .collect();

        // Metadata detectors live at each destination gateway.
        for &dst in &destinations {
            let gi = &mut self.gateways[dst.index()];
            let pair_index = gi.metadata_detectors.len() / 2;
            let (x, y) = gi.position_mm;
            let base_x = x + pair_index as f64 * 2.0 * MR_PITCH_MM;
            gi.metadata_detectors.push(MrPlacement {
                x_mm: base_x,
                y_mm: y + 0.10,
            });
            gi.metadata_detectors.push(MrPlacement {
                x_mm: base_x + MR_PITCH_MM,
                y_mm: y + 0.10,
            });
        }

        // Switches cluster at the source end of the data waveguide, so every
        // detector path passes all of them in the through state.
        let channel = &self.channels[id.index()];
        let head = self.gateways[channel.sources[0].index()].position_mm;
        let mut double_mr_ring_placements = Vec::with_capacity(2 * n_wavelengths);
        for i in 0..n_wavelengths {
            let x = head.0 + i as f64 * MR_PITCH_MM;
            double_mr_ring_placements.push(MrPlacement {
                x_mm: x,
                y_mm: head.1 + 0.08,
            });
            double_mr_ring_placements.push(MrPlacement {
                x_mm: x,
                y_mm: head.1 + 0.09,
            });
        }

        let metadata_detector_count = 2 * destinations.len();
        self.channels[id.index()].ramps = Some(ReservationWaveguide {
            double_mr_count: n_wavelengths,
            metadata_pairs,
            metadata_detector_count,
            double_mr_ring_placements,
        });
        self.validate_geometry()
    }

    /// Every active ring on the die: modulator banks, detector banks,
    /// metadata detectors, and both rings of each double-MR switch.
    pub fn all_ring_placements(&self) -> impl Iterator<Item = MrPlacement> + '_ {
        let gateway_rings = self.gateways.iter().flat_map(|g| {
            g.modulator_bank
                .iter()
                .chain(&g.detector_bank)
                .chain(&g.metadata_detectors)
                .copied()
        });
        let switch_rings = self
            .channels
            .iter()
            .filter_map(|c| c.ramps.as_ref())
            .flat_map(|r| r.double_mr_ring_placements.iter().copied());
        gateway_rings.chain(switch_rings)
    }

    /// One source-to-detector path per (channel, destination), walked in
    /// destination order. Destination k passes k earlier detector banks in
    /// the through state, the full double-MR block when RAMPS is attached,
    /// and drops at its own ring.
    pub fn detector_paths(&self) -> Vec<(GatewayId, PathDescriptor)> {
        let edge_cm = self.die.edge_mm / 10.0;
        let mut out = Vec::new();
        for channel in &self.channels {
            let n_dest = channel.destinations.len();
            let splitters = splitter_stages(channel.waveguides.len());
            let doubles = channel
                .ramps
                .as_ref()
                .map(|r| r.double_mr_count as u32)
                .unwrap_or(0);
            for (k, &dst) in channel.destinations.iter().enumerate() {
                let length_cm = channel.length_cm * (k + 1) as f64 / n_dest as f64;
                let segments = (length_cm / edge_cm).ceil().max(1.0) as u32;
                out.push((
                    dst,
                    PathDescriptor {
                        length_cm,
                        bends_90: 2 * (segments - 1),
                        splitters,
                        through_mrs_single: k as u32,
                        through_mrs_double: doubles,
                        drop_mrs: 1,
                    },
                ));
            }
        }
        out
    }

    /// Exact structural counts for audit and inspection.
    pub fn structural_audit(&self) -> StructuralAudit {
        let channels = self
            .channels
            .iter()
            .map(|c| {
                let first_source = c.sources.first().copied();
                let source_rom_entries = c
                    .destinations
                    .iter()
                    .filter(|d| Some(**d) != first_source)
                    .count()
                    + 1;
                ChannelAudit {
                    channel: c.id,
                    kind: c.kind,
                    waveguides: c.waveguides.len(),
                    destinations: c.destinations.len(),
                    secured: c.secured,
                    metadata_detectors: c.ramps.as_ref().map(|r| r.metadata_detector_count),
                    double_mrs: c.ramps.as_ref().map(|r| r.double_mr_count),
                    source_rom_entries,
                    destination_rom_entries: 2,
                }
            })
            .collect();
        StructuralAudit {
            arch: self.arch,
            gateways: self.gateways.len(),
            n_wavelengths: self.n_wavelengths,
            banks_sized_to_comb: self
                .gateways
                .iter()
                .all(|g| {
                    g.modulator_bank.len() == self.n_wavelengths
                        && g.detector_bank.len() == self.n_wavelengths
                }),
            total_data_waveguides: self.data_waveguide_count(),
            channels,
        }
    }

    fn validate_geometry(&self) -> Result<()> {
        let edge = self.die.edge_mm;
        for p in self.all_ring_placements() {
            if !(0.0..=edge).contains(&p.x_mm) || !(0.0..=edge).contains(&p.y_mm) {
                return Err(Error::Structural(format!(
                    "MR placement ({}, {}) mm falls outside the {edge} mm die",
                    p.x_mm, p.y_mm
                )));
            }
        }
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = FabricFile {
            kind: "fabric".into(),
            version: 1,
            fabric: self.clone(),
        };
        std::fs::write(path, serde_json::to_string(&file)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: FabricFile = serde_json::from_str(&text)?;
        if file.kind != "fabric" || file.version != 1 {
            return Err(Error::InvalidParameter(format!(
                "not a version-1 fabric artifact: kind {:?} version {}",
                file.kind, file.version
            )));
        }
        Ok(file.fabric)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ChannelAudit {
    pub channel: ChannelId,
    pub kind: ChannelKind,
    pub waveguides: usize,
    pub destinations: usize,
    pub secured: bool,
    pub metadata_detectors: Option<usize>,
    pub double_mrs: Option<usize>,
    pub source_rom_entries: usize,
    pub destination_rom_entries: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StructuralAudit {
    pub arch: Architecture,
    pub gateways: usize,
    pub n_wavelengths: usize,
    pub banks_sized_to_comb: bool,
    pub total_data_waveguides: usize,
    pub channels: Vec<ChannelAudit>,
}

fn splitter_stages(waveguides: usize) -> u32 {
    // Broadcast tree fanning one modulated signal out to every waveguide.
    (waveguides.max(1) as f64).log2().ceil() as u32
}

/// Evenly spaced gateway positions on a square lattice with a 10% margin.
fn lattice_positions(count: usize, edge_mm: f64) -> Vec<(f64, f64)> {
    let k = (count as f64).sqrt().ceil().max(1.0) as usize;
    let margin = edge_mm * 0.1;
    let span = edge_mm - 2.0 * margin;
    let step = if k > 1 { span / (k - 1) as f64 } else { 0.0 };
    (0..count)
        .map(|i| {
            (
                margin + (i % k) as f64 * step,
                margin + (i / k) as f64 * step,
            )
        })
        .collect()
}

fn make_gateway(
    id: u32,
    cluster: u32,
    position: (f64, f64),
    n_wavelengths: usize,
    is_source: bool,
    is_destination: bool,
) -> GatewayInterface {
    let (x, y) = position;
    let bank = |y_off: f64| -> Vec<MrPlacement> {
        (0..n_wavelengths)
            .map(|i| MrPlacement {
                x_mm: x + i as f64 * MR_PITCH_MM,
                y_mm: y + y_off,
            })
            .collect()
    };
    GatewayInterface {
        id: GatewayId(id),
        cluster,
        position_mm: position,
        is_source,
        is_destination,
        modulator_bank: bank(0.0),
        detector_bank: bank(0.05),
        metadata_detectors: Vec::new(),
    }
}

fn channel_length_cm(traversal_cycles: u64, params: &FabricParams) -> f64 {
    params.channel_length_cm.unwrap_or_else(|| {
        traversal_cycles as f64 / (params.clock_ghz * 1e9) * (LIGHT_SPEED_CM_PER_S / GROUP_INDEX)
    })
}

fn finish_build(mut fabric: Fabric, params: &FabricParams) -> Result<Fabric> {
    let perimeter_cm = 4.0 * fabric.die.edge_mm / 10.0;
    for channel in &fabric.channels {
        if !channel.length_cm.is_finite() || channel.length_cm <= 0.0 {
            return Err(Error::Structural(format!(
                "channel {} has non-positive length",
                channel.id
            )));
        }
        if channel.length_cm > params.max_length_perimeters * perimeter_cm {
            return Err(Error::Structural(format!(
                "channel {} length {:.2} cm exceeds {} die perimeters",
                channel.id, channel.length_cm, params.max_length_perimeters
            )));
        }
    }
    fabric.validate_geometry()?;
    if params.ramps {
        let ids: Vec<ChannelId> = fabric.channels.iter().map(|c| c.id).collect();
        for id in ids {
            fabric.attach_ramps(id)?;
        }
    }
    if params.secured {
        let ids: Vec<ChannelId> = fabric.channels.iter().map(|c| c.id).collect();
        fabric.secure_channels(&ids)?;
    }
    Ok(fabric)
}

/// SWMR crossbar of `scale` clusters: each cluster owns one channel that
/// reaches every other cluster. Intra-cluster traffic stays on an abstract
/// electrical network.
pub fn build_firefly(scale: usize, params: &FabricParams) -> Result<Fabric> {
    params.die.validate()?;
    if scale < 2 {
        return Err(Error::InvalidParameter(format!(
            "firefly needs at least 2 clusters, got {scale}"
        )));
    }
    let positions = lattice_positions(scale, params.die.edge_mm);
    let gateways: Vec<GatewayInterface> = (0..scale)
        .map(|i| {
            make_gateway(
                i as u32,
                i as u32,
                positions[i],
                params.n_wavelengths,
                true,
                true,
            )
        })
        .collect();
    let length_cm = channel_length_cm(TRAVERSAL_CYCLES_CROSSBAR, params);
    let channels: Vec<Channel> = (0..scale)
        .map(|i| Channel {
            id: ChannelId(i as u32),
            kind: ChannelKind::Swmr,
            waveguides: vec![
                Waveguide {
                    n_wavelengths: params.n_wavelengths,
                    length_cm,
                };
                scale
            ],
            sources: vec![GatewayId(i as u32)],
            destinations: (0..scale)
                .filter(|j| *j != i)
                .map(|j| GatewayId(j as u32))
                .collect(),
            ramps: None,
            secured: false,
            length_cm,
            traversal_cycles: TRAVERSAL_CYCLES_CROSSBAR,
        })
        .collect();
    finish_build(
        Fabric {
            arch: Architecture::Firefly,
            die: params.die,
            n_wavelengths: params.n_wavelengths,
            gateways,
            channels,
            grid: None,
            electrical_hop_cycles: params.electrical_hop_cycles,
        },
        params,
    )
}

/// MWMR crossbar of `scale` gateways sharing `scale / 2` channels; every
/// gateway is a source and a destination on every channel.
pub fn build_swiftnoc(scale: usize, params: &FabricParams) -> Result<Fabric> {
    params.die.validate()?;
    if scale < 2 {
        return Err(Error::InvalidParameter(format!(
            "swiftnoc needs at least 2 gateways, got {scale}"
        )));
    }
    let positions = lattice_positions(scale, params.die.edge_mm);
    let gateways: Vec<GatewayInterface> = (0..scale)
        .map(|i| {
            make_gateway(
                i as u32,
                i as u32,
                positions[i],
                params.n_wavelengths,
                true,
                true,
            )
        })
        .collect();
    let n_channels = (scale / 2).max(1);
    let length_cm = channel_length_cm(TRAVERSAL_CYCLES_CROSSBAR, params);
    let all: Vec<GatewayId> = (0..scale).map(|i| GatewayId(i as u32)).collect();
    let channels: Vec<Channel> = (0..n_channels)
        .map(|i| Channel {
            id: ChannelId(i as u32),
            kind: ChannelKind::Mwmr,
            // Three data waveguides plus one widened by 4 arbitration
            // wavelengths that carry no packet bits.
            waveguides: vec![
                Waveguide {
                    n_wavelengths: params.n_wavelengths,
                    length_cm,
                },
                Waveguide {
                    n_wavelengths: params.n_wavelengths,
                    length_cm,
                },
                Waveguide {
                    n_wavelengths: params.n_wavelengths,
                    length_cm,
                },
                Waveguide {
                    n_wavelengths: params.n_wavelengths + 4,
                    length_cm,
                },
            ],
            sources: all.clone(),
            destinations: all.clone(),
            ramps: None,
            secured: false,
            length_cm,
            traversal_cycles: TRAVERSAL_CYCLES_CROSSBAR,
        })
        .collect();
    finish_build(
        Fabric {
            arch: Architecture::SwiftNoc,
            die: params.die,
            n_wavelengths: params.n_wavelengths,
            gateways,
            channels,
            grid: None,
            electrical_hop_cycles: params.electrical_hop_cycles,
        },
        params,
    )
}

/// `grid x grid` tiles with one MWMR channel per row and one per column.
/// Cross traffic re-enters a second channel at the turn tile.
pub fn build_luminoc(grid: usize, params: &FabricParams) -> Result<Fabric> {
    params.die.validate()?;
    if grid < 2 {
        return Err(Error::InvalidParameter(format!(
            "luminoc needs at least a 2x2 grid, got {grid}"
        )));
    }
    let count = grid * grid;
    let margin = params.die.edge_mm * 0.1;
    let span = params.die.edge_mm - 2.0 * margin;
    let step = span / (grid - 1) as f64;
    let gateways: Vec<GatewayInterface> = (0..count)
        .map(|i| {
            let (r, c) = (i / grid, i % grid);
            make_gateway(
                i as u32,
                r as u32,
                (margin + c as f64 * step, margin + r as f64 * step),
                params.n_wavelengths,
                true,
                true,
            )
        })
        .collect();
    let length_cm = channel_length_cm(TRAVERSAL_CYCLES_LUMINOC, params);
    let mut channels = Vec::with_capacity(2 * grid);
    let make_channel = |id: usize, members: Vec<GatewayId>| Channel {
        id: ChannelId(id as u32),
        kind: ChannelKind::Mwmr,
        waveguides: vec![
            Waveguide {
                n_wavelengths: params.n_wavelengths,
                length_cm,
            };
            4
        ],
        sources: members.clone(),
        destinations: members,
        ramps: None,
        secured: false,
        length_cm,
        traversal_cycles: TRAVERSAL_CYCLES_LUMINOC,
    };
    for r in 0..grid {
        let members = (0..grid).map(|c| GatewayId((r * grid + c) as u32)).collect();
        channels.push(make_channel(r, members));
    }
    for c in 0..grid {
        let members = (0..grid).map(|r| GatewayId((r * grid + c) as u32)).collect();
        channels.push(make_channel(grid + c, members));
    }
    finish_build(
        Fabric {
            arch: Architecture::LumiNoc,
            die: params.die,
            n_wavelengths: params.n_wavelengths,
            gateways,
            channels,
            grid: Some(grid),
            electrical_hop_cycles: params.electrical_hop_cycles,
        },
        params,
    )
}

/// One MWMR channel with disjoint source and destination gateway sets;
/// the smallest fabric that exercises every protocol path.
pub fn build_generic(n_sources: usize, n_destinations: usize, params: &FabricParams) -> Result<Fabric> {
    params.die.validate()?;
    if n_sources == 0 || n_destinations == 0 {
        return Err(Error::InvalidParameter(
            "generic fabric needs at least one source and one destination".into(),
        ));
    }
    let count = n_sources + n_destinations;
    let positions = lattice_positions(count, params.die.edge_mm);
    let gateways: Vec<GatewayInterface> = (0..count)
        .map(|i| {
            make_gateway(
                i as u32,
                0,
                positions[i],
                params.n_wavelengths,
                i < n_sources,
                i >= n_sources,
            )
        })
        .collect();
    let length_cm = channel_length_cm(TRAVERSAL_CYCLES_CROSSBAR, params);
    let channels = vec![Channel {
        id: ChannelId(0),
        kind: ChannelKind::Mwmr,
        waveguides: vec![Waveguide {
            n_wavelengths: params.n_wavelengths,
            length_cm,
        }],
        sources: (0..n_sources).map(|i| GatewayId(i as u32)).collect(),
        destinations: (n_sources..count).map(|i| GatewayId(i as u32)).collect(),
        ramps: None,
        secured: false,
        length_cm,
        traversal_cycles: TRAVERSAL_CYCLES_CROSSBAR,
    }];
    finish_build(
        Fabric {
            arch: Architecture::Generic,
            die: params.die,
            n_wavelengths: params.n_wavelengths,
            gateways,
            channels,
            grid: None,
            electrical_hop_cycles: params.electrical_hop_cycles,
        },
        params,
    )
}

/// Builds an architecture by name at the given scale (clusters, gateways,
/// or grid edge depending on the architecture).
pub fn build_by_name(arch: &str, scale: usize, params: &FabricParams) -> Result<Fabric> {
    match Architecture::from_name(arch)? {
        Architecture::Firefly => build_firefly(scale, params),
        Architecture::SwiftNoc => build_swiftnoc(scale, params),
        Architecture::LumiNoc => build_luminoc(scale, params),
        Architecture::Generic => build_generic(scale, scale, params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn firefly_full_scale_structure() {
        let params = FabricParams {
            ramps: true,
            ..Default::default()
        };
        let f = build_firefly(8, &params).unwrap();
        assert_eq!(f.channels.len(), 8);
        for c in &f.channels {
            assert_eq!(c.kind, ChannelKind::Swmr);
            assert_eq!(c.sources.len(), 1);
            assert_eq!(c.destinations.len(), 7);
            assert_eq!(c.waveguides.len(), 8);
            let r = c.ramps.as_ref().unwrap();
            assert_eq!(r.metadata_detector_count, 14);
            assert_eq!(r.double_mr_count, 64);
        }
        let audit = f.structural_audit();
        assert!(audit.banks_sized_to_comb);
        assert!(audit.channels.iter().all(|c| c.source_rom_entries == 8));
    }

    #[test]
    fn swiftnoc_full_scale_structure() {
        let params = FabricParams {
            ramps: true,
            ..Default::default()
        };
        let f = build_swiftnoc(32, &params).unwrap();
        assert_eq!(f.channels.len(), 16);
        for c in &f.channels {
            assert_eq!(c.sources.len(), 32);
            assert_eq!(c.destinations.len(), 32);
            assert_eq!(c.waveguides.len(), 4);
            assert_eq!(c.waveguides[3].n_wavelengths, 68);
            let r = c.ramps.as_ref().unwrap();
            assert_eq!(r.metadata_detector_count, 64);
        }
        let audit = f.structural_audit();
        assert!(audit.channels.iter().all(|c| c.source_rom_entries == 32));
    }

    #[test]
    fn luminoc_grid_structure_and_helpers() {
        let params = FabricParams {
            ramps: true,
            ..Default::default()
        };
        let f = build_luminoc(8, &params).unwrap();
        assert_eq!(f.channels.len(), 16);
        for c in &f.channels {
            assert_eq!(c.destinations.len(), 8);
            assert_eq!(c.traversal_cycles, TRAVERSAL_CYCLES_LUMINOC);
            assert_eq!(c.ramps.as_ref().unwrap().metadata_detector_count, 16);
        }
        // Tile (2, 5) sits on row channel 2 and column channel 8 + 5.
        let id = GatewayId(2 * 8 + 5);
        assert_eq!(f.tile_of(id), Some((2, 5)));
        assert_eq!(f.row_channel(2), Some(ChannelId(2)));
        assert_eq!(f.col_channel(5), Some(ChannelId(13)));
        let small = build_luminoc(2, &FabricParams { ramps: true, ..Default::default() }).unwrap();
        assert_eq!(small.channels.len(), 4);
        assert!(small
            .channels
            .iter()
            .all(|c| c.ramps.as_ref().unwrap().metadata_detector_count == 4));
    }

    #[test]
    fn ramps_bound_and_idempotence() {
        // 33 destinations on a 64-wavelength comb: one too many.
        let mut f = build_generic(1, 33, &FabricParams::default()).unwrap();
        let err = f.attach_ramps(ChannelId(0)).unwrap_err();
        assert!(matches!(err, Error::Scalability(_)));

        let mut ok = build_generic(1, 2, &FabricParams::default()).unwrap();
        ok.attach_ramps(ChannelId(0)).unwrap();
        let pairs = &ok.channels[0].ramps.as_ref().unwrap().metadata_pairs;
        assert_eq!(
            (pairs[0].selection_lambda, pairs[0].type_lambda),
            (0, 1)
        );
        assert_eq!(
            (pairs[1].selection_lambda, pairs[1].type_lambda),
            (2, 3)
        );
        let again = ok.attach_ramps(ChannelId(0)).unwrap_err();
        assert!(matches!(again, Error::Structural(_)));
    }

    #[test]
    fn swiftnoc_exceeding_comb_bound_is_rejected_with_ramps() {
        let params = FabricParams {
            ramps: true,
            ..Default::default()
        };
        assert!(matches!(
            build_swiftnoc(34, &params),
            Err(Error::Scalability(_))
        ));
        // Exactly at the bound (2 x 32 = 64) is allowed.
        assert!(build_swiftnoc(32, &params).is_ok());
    }

    #[test]
    fn geometry_stays_on_die_and_lengths_are_pinned() {
        let f = build_firefly(8, &FabricParams::default()).unwrap();
        let edge = f.die.edge_mm;
        for p in f.all_ring_placements() {
            assert!((0.0..=edge).contains(&p.x_mm) && (0.0..=edge).contains(&p.y_mm));
        }
        // 8 cycles at 5 GHz over c / 4: just under 12 cm.
        assert!((f.channels[0].length_cm - 11.99).abs() < 0.02);
        let l = build_luminoc(4, &FabricParams::default()).unwrap();
        assert!((l.channels[0].length_cm / f.channels[0].length_cm - 0.5).abs() < 1e-9);
    }

    #[test]
    fn detector_paths_worsen_with_distance() {
        let f = build_generic(1, 4, &FabricParams::default()).unwrap();
        let paths = f.detector_paths();
        assert_eq!(paths.len(), 4);
        for w in paths.windows(2) {
            assert!(w[1].1.length_cm > w[0].1.length_cm);
            assert!(w[1].1.through_mrs_single > w[0].1.through_mrs_single);
        }
        assert!(paths.iter().all(|(_, p)| p.drop_mrs == 1));
    }

    #[test]
    fn channels_between_reflects_membership() {
        let f = build_firefly(4, &FabricParams::default()).unwrap();
        assert_eq!(
            f.channels_between(GatewayId(1), GatewayId(3)),
            vec![ChannelId(1)]
        );
        assert!(f.channels_between(GatewayId(1), GatewayId(1)).is_empty());

        let l = build_luminoc(4, &FabricParams::default()).unwrap();
        // Same row: one channel. Cross: none direct.
        assert_eq!(f.grid, None);
        assert_eq!(
            l.channels_between(GatewayId(0), GatewayId(3)),
            vec![ChannelId(0)]
        );
        assert!(l.channels_between(GatewayId(0), GatewayId(7)).is_empty());
    }

    #[test]
    fn serialization_cycles_cover_packet() {
        let f = build_swiftnoc(8, &FabricParams::default()).unwrap();
        let c = &f.channels[0];
        assert_eq!(c.serialization_cycles(512, 64), 8);
        assert_eq!(c.serialization_cycles(513, 64), 9);
        assert_eq!(c.serialization_cycles(1, 64), 1);
    }
}
