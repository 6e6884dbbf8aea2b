//! Analytical link-budget, laser-power, and energy models.
//!
//! Loss coefficients are stored as positive dB magnitudes; a path's loss is
//! the plain sum of its component contributions. The laser is provisioned
//! for the worst-case detector path: per-wavelength launch power equals the
//! detector sensitivity plus that loss.

use crate::error::{Error, Result};
use crate::fabric::Fabric;
use crate::ids::GatewayId;
use crate::pvmap::{remedy_tuning, PvMap};
use serde::{Deserialize, Serialize};

/// Optical loss coefficients, detector floor, and laser conversion
/// efficiency. The per-MR through/drop terms are calibration knobs: the
/// waveguide-level coefficients are published values, the MR-level ones are
/// chosen so full-scale builds land in the reported loss envelope.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct LossParams {
    pub propagation_db_per_cm: f64,
    pub bending_db_per_90deg: f64,
    pub splitter_db: f64,
    pub through_loss_single_mr_db: f64,
    pub drop_loss_mr_db: f64,
    pub through_loss_double_mr_db: f64,
    pub detector_sensitivity_dbm: f64,
    pub wallplug_efficiency: f64,
    /// Recorded for completeness; no implemented equation consumes it.
    pub mr_q_factor: f64,
    /// Recorded for completeness; no implemented equation consumes it.
    pub detector_responsivity_a_per_w: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            propagation_db_per_cm: 0.274,
            bending_db_per_90deg: 0.0085,
            splitter_db: 0.2,
            through_loss_single_mr_db: 0.02,
            drop_loss_mr_db: 0.5,
            through_loss_double_mr_db: 0.025,
            detector_sensitivity_dbm: -26.0,
            wallplug_efficiency: 0.03,
            mr_q_factor: 9000.0,
            detector_responsivity_a_per_w: 0.8,
        }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        let magnitudes = [
            self.propagation_db_per_cm,
            self.bending_db_per_90deg,
            self.splitter_db,
            self.through_loss_single_mr_db,
            self.drop_loss_mr_db,
            self.through_loss_double_mr_db,
        ];
        if magnitudes.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::InvalidParameter(
                "loss magnitudes must be finite and non-negative".into(),
            ));
        }
        if !(self.wallplug_efficiency > 0.0 && self.wallplug_efficiency <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "wall-plug efficiency must lie in (0, 1], got {}",
                self.wallplug_efficiency
            )));
        }
        Ok(())
    }
}

/// Per-bit and per-device energy coefficients.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct EnergyParams {
    pub mod_det_pj_per_bit: f64,
    pub tuning_circuit_pj_per_bit: f64,
    pub serdes_pj_per_bit: f64,
    pub receiver_pj_per_bit: f64,
    pub mod_driver_pj_per_bit: f64,
    pub dithering_uw_per_mr: f64,
    /// Electrical router+link energy per bit per hop; a configured constant
    /// standing in for gate-level electrical modeling.
    pub electrical_router_pj_per_bit: f64,
    /// One 512-bit XOR pass (encrypt or decrypt).
    pub xor_pj_per_op: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            mod_det_pj_per_bit: 0.42,
            tuning_circuit_pj_per_bit: 0.18,
            serdes_pj_per_bit: 0.5,
            receiver_pj_per_bit: 0.075,
            mod_driver_pj_per_bit: 0.154,
            dithering_uw_per_mr: 385.0,
            electrical_router_pj_per_bit: 0.6,
            xor_pj_per_op: 0.241,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.mod_det_pj_per_bit,
            self.tuning_circuit_pj_per_bit,
            self.serdes_pj_per_bit,
            self.receiver_pj_per_bit,
            self.mod_driver_pj_per_bit,
            self.dithering_uw_per_mr,
            self.electrical_router_pj_per_bit,
            self.xor_pj_per_op,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(
                "energy coefficients must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Dynamic photonic energy per bit: modulation/detection, tuning
    /// circuits, SerDes, receiver, and modulator driver.
    pub fn photonic_pj_per_bit(&self) -> f64 {
        self.mod_det_pj_per_bit
            + self.tuning_circuit_pj_per_bit
            + self.serdes_pj_per_bit
            + self.receiver_pj_per_bit
            + self.mod_driver_pj_per_bit
    }
}

/// A named (loss, energy) parameter pairing selectable from experiment
/// specs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Profile {
    pub name: String,
    pub description: String,
    pub loss: LossParams,
    pub energy: EnergyParams,
}

/// Profiles shipped with the crate. `table3_default` is the overall
/// default; `table2_default` swaps in the 10% wall-plug laser variant.
pub fn builtin_profiles() -> Vec<Profile> {
    vec![
        Profile {
            name: "table3_default".into(),
            description: "default calibration: 3% wall-plug laser, published loss and energy coefficients".into(),
            loss: LossParams::default(),
            energy: EnergyParams::default(),
        },
        Profile {
            name: "table2_default".into(),
            description: "10% wall-plug laser variant; all other coefficients as table3_default"
                .into(),
            loss: LossParams {
                wallplug_efficiency: 0.10,
                ..LossParams::default()
            },
            energy: EnergyParams::default(),
        },
    ]
}

pub fn profile_by_name(name: &str) -> Option<Profile> {
    builtin_profiles().into_iter().find(|p| p.name == name)
}

/// Everything a detector path accumulates between laser and photodiode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PathDescriptor {
    pub length_cm: f64,
    pub bends_90: u32,
    pub splitters: u32,
    pub through_mrs_single: u32,
    pub through_mrs_double: u32,
    pub drop_mrs: u32,
}

/// Total loss of one path in dB (positive = attenuation).
pub fn path_loss_db(path: &PathDescriptor, lp: &LossParams) -> f64 {
    path.length_cm * lp.propagation_db_per_cm
        + f64::from(path.bends_90) * lp.bending_db_per_90deg
        + f64::from(path.splitters) * lp.splitter_db
        + f64::from(path.through_mrs_single) * lp.through_loss_single_mr_db
        + f64::from(path.through_mrs_double) * lp.through_loss_double_mr_db
        + f64::from(path.drop_mrs) * lp.drop_loss_mr_db
}

/// The destination whose detector path accumulates the most loss, and that
/// loss. This node sizes the laser.
pub fn worst_case_loss(fabric: &Fabric, lp: &LossParams) -> Result<(GatewayId, f64)> {
    let mut worst: Option<(GatewayId, f64)> = None;
    for (gateway, path) in fabric.detector_paths() {
        let loss = path_loss_db(&path, lp);
        let replace = match worst {
            None => true,
            Some((_, best)) => loss > best,
        };
        if replace {
            worst = Some((gateway, loss));
        }
    }
    worst.ok_or_else(|| Error::Structural("fabric has no detector paths".into()))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct LaserPower {
    pub photonic_w: f64,
    pub electrical_w: f64,
}

/// Laser provisioning at the worst-case loss: launch power per wavelength
/// is sensitivity + loss, summed over every wavelength of every data
/// waveguide, then scaled by wall-plug efficiency for the electrical draw.
pub fn laser_power(
    worst_loss_db: f64,
    lp: &LossParams,
    n_wavelengths: usize,
    n_waveguides: usize,
) -> LaserPower {
    let launch_dbm = lp.detector_sensitivity_dbm + worst_loss_db;
    let per_wavelength_w = 10f64.powf((launch_dbm - 30.0) / 10.0);
    let photonic_w = (n_wavelengths * n_waveguides) as f64 * per_wavelength_w;
    LaserPower {
        photonic_w,
        electrical_w: photonic_w / lp.wallplug_efficiency,
    }
}

/// Dynamic energy of one packet traversal, split by component (pJ).
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct PacketEnergyBreakdown {
    pub photonic_pj: f64,
    pub electrical_pj: f64,
    pub cipher_pj: f64,
}

impl PacketEnergyBreakdown {
    pub fn total_j(&self) -> f64 {
        (self.photonic_pj + self.electrical_pj + self.cipher_pj) * 1e-12
    }
}

/// Component view of [`packet_energy`]; the cipher term is exactly
/// 2 x xor_pj_per_op when secured.
pub fn packet_energy_breakdown(
    bits: u64,
    ep: &EnergyParams,
    secured: bool,
    hops_electrical: u32,
) -> Result<PacketEnergyBreakdown> {
    if bits == 0 {
        return Err(Error::InvalidParameter(
            "packet energy of a 0-bit packet is undefined".into(),
        ));
    }
    let bits_f = bits as f64;
    Ok(PacketEnergyBreakdown {
        photonic_pj: bits_f * ep.photonic_pj_per_bit(),
        electrical_pj: bits_f * ep.electrical_router_pj_per_bit * f64::from(hops_electrical),
        cipher_pj: if secured { 2.0 * ep.xor_pj_per_op } else { 0.0 },
    })
}

/// Dynamic energy (J) of one photonic packet traversal plus any electrical
/// hops; a secured traversal pays one encrypt and one decrypt XOR pass.
pub fn packet_energy(bits: u64, ep: &EnergyParams, secured: bool, hops_electrical: u32) -> Result<f64> {
    Ok(packet_energy_breakdown(bits, ep, secured, hops_electrical)?.total_j())
}

/// Energy of a purely electrical transfer (no photonic per-bit terms).
pub fn electrical_energy(bits: u64, ep: &EnergyParams, hops: u32) -> f64 {
    bits as f64 * ep.electrical_router_pj_per_bit * f64::from(hops) * 1e-12
}

/// Standing power of a built fabric on a given die.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct StaticPowerBreakdown {
    pub mr_count: usize,
    pub dithering_w: f64,
    pub tuning_w: f64,
    pub photonic_laser_w: f64,
    pub electrical_laser_w: f64,
    pub worst_loss_db: f64,
    pub worst_loss_gateway: GatewayId,
    pub total_w: f64,
}

/// Sums dithering control and PV-remedy tuning power over every active
/// ring, plus the electrical laser draw at worst-case provisioning. Double
/// MR switches contribute two rings each.
pub fn static_power(
    fabric: &Fabric,
    map: &PvMap,
    lp: &LossParams,
    ep: &EnergyParams,
) -> Result<StaticPowerBreakdown> {
    let mut mr_count = 0usize;
    let mut tuning_uw = 0.0f64;
    for placement in fabric.all_ring_placements() {
        let shift = map.sample_shift(placement.x_mm, placement.y_mm)?;
        tuning_uw += remedy_tuning(shift, &map.params).power_uw;
        mr_count += 1;
    }
    let dithering_w = mr_count as f64 * ep.dithering_uw_per_mr * 1e-6;
    let tuning_w = tuning_uw * 1e-6;
    let (worst_gateway, worst_loss_db) = worst_case_loss(fabric, lp)?;
    let laser = laser_power(
        worst_loss_db,
        lp,
        fabric.n_wavelengths,
        fabric.data_waveguide_count(),
    );
    Ok(StaticPowerBreakdown {
        mr_count,
        dithering_w,
        tuning_w,
        photonic_laser_w: laser.photonic_w,
        electrical_laser_w: laser.electrical_w,
        worst_loss_db,
        worst_loss_gateway: worst_gateway,
        total_w: dithering_w + tuning_w + laser.electrical_w,
    })
}
