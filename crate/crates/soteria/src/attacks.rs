//! Hardware-Trojan threat models and outcome accounting.
//!
//! A compromised gateway snoops a channel by partially detuning its
//! detector rings, copying any transmission it is not an announced
//! destination of. What the snooper recovers depends on the defenses:
//! cleartext reads directly; enciphered traffic needs the right 512-bit
//! key, obtained either by reading unprotected reservation metadata and
//! looking the target up in a stolen key ROM, or by guessing uniformly
//! over a stolen ROM's rows when metadata is hidden.

use crate::bits::Bits512;
use crate::cipher::CommType;
use crate::error::{Error, Result};
use crate::fabric::{Channel, Fabric};
use crate::ids::GatewayId;
use crate::keyforge::{KeyStoreSet, Role};
use crate::{domains, mix_seed};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackStrategy {
    /// Detune and copy; no metadata access, no stolen ROM.
    PassiveSnoop,
    /// Additionally reads reservation metadata where unprotected.
    MetadataTap,
    /// Metadata tap plus the contents of compromised source ROMs.
    CoordinatedRom,
}

impl std::fmt::Display for AttackStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Self::PassiveSnoop => "passive_snoop",
            Self::MetadataTap => "metadata_tap",
            Self::CoordinatedRom => "coordinated_rom",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackScenario {
    pub strategy: AttackStrategy,
    pub snooper_gateways: BTreeSet<GatewayId>,
    /// Gateways whose source ROMs the attacker has read out.
    #[serde(default)]
    pub compromised_source_roms: BTreeSet<GatewayId>,
    /// Whether reservation metadata is observable at all on channels
    /// without a protected reservation waveguide.
    #[serde(default = "default_true")]
    pub metadata_visible: bool,
}

fn default_true() -> bool {
    true
}

impl AttackScenario {
    pub fn validate(&self, fabric: &Fabric) -> Result<()> {
        for &g in self.snooper_gateways.iter().chain(&self.compromised_source_roms) {
            if g.index() >= fabric.gateways.len() {
                return Err(Error::InvalidSpec(format!(
                    "attack scenario references gateway {g} outside the {}-gateway fabric",
                    fabric.gateways.len()
                )));
            }
        }
        for &g in &self.snooper_gateways {
            if !fabric.gateway(g).is_destination {
                return Err(Error::InvalidSpec(format!(
                    "snooper gateway {g} has no detector bank to detune"
                )));
            }
        }
        for &g in &self.compromised_source_roms {
            if !fabric.gateway(g).is_source {
                return Err(Error::InvalidSpec(format!(
                    "gateway {g} has no source ROM to compromise"
                )));
            }
        }
        Ok(())
    }
}

/// One wire transmission as the attacker sees it.
pub struct LegView<'a> {
    pub channel: &'a Channel,
    /// Destinations announced in the reservation slot.
    pub announced: &'a BTreeSet<GatewayId>,
    pub comm_type: CommType,
    /// Announced target (the single destination, or any group member for
    /// multicast; the multicast key does not depend on which).
    pub leg_target: GatewayId,
    pub enciphered: bool,
    /// A reservation waveguide shields this leg's metadata.
    pub metadata_protected: bool,
    /// Key bits the source actually used, when enciphered.
    pub key_bits: Option<Bits512>,
    pub measured: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecurityReport {
    pub strategy: AttackStrategy,
    pub packets_snooped: u64,
    pub packets_deciphered: u64,
    /// Deciphered over snooped; 0 when nothing was snooped.
    pub decipher_rate: f64,
    /// Snoops where reservation metadata was readable.
    pub metadata_leaks: u64,
}

pub struct AttackState {
    scenario: AttackScenario,
    rng: ChaCha8Rng,
    snooped: u64,
    deciphered: u64,
    metadata_leaks: u64,
}

impl AttackState {
    /// The attacker's randomness is a separate stream from traffic and key
    /// generation, so enabling a scenario never perturbs the run itself.
    pub fn new(scenario: &AttackScenario, seed: u64) -> Self {
        Self {
            scenario: scenario.clone(),
            rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, domains::ATTACK)),
            snooped: 0,
            deciphered: 0,
            metadata_leaks: 0,
        }
    }

    /// Evaluates every snooper against one wire transmission. A snooper
    /// copies the leg if it listens on the channel and is not an announced
    /// destination (group members receive multicasts legitimately and are
    /// not snooping). Only measured packets are counted.
    pub fn observe(&mut self, stores: &KeyStoreSet, view: &LegView<'_>) {
        if !view.measured {
            return;
        }
        let snoopers: Vec<GatewayId> = self
            .scenario
            .snooper_gateways
            .iter()
            .copied()
            .filter(|s| view.channel.destinations.contains(s) && !view.announced.contains(s))
            .collect();
        for _snooper in snoopers {
            self.snooped += 1;
            let metadata_known = self.scenario.strategy != AttackStrategy::PassiveSnoop
                && self.scenario.metadata_visible
                && !view.metadata_protected;
            if metadata_known {
                self.metadata_leaks += 1;
            }
            if !view.enciphered {
                self.deciphered += 1;
                continue;
            }
            let key_bits = view.key_bits.expect("enciphered leg carries its key");
            if self.scenario.strategy != AttackStrategy::CoordinatedRom {
                continue;
            }
            // Source ROMs of this channel that the attacker holds, in
            // gateway order.
            let rom_stores: Vec<&crate::keyforge::KeyStore> = self
                .scenario
                .compromised_source_roms
                .iter()
                .copied()
                .filter(|g| view.channel.sources.contains(g))
                .filter_map(|g| stores.get(g, view.channel.id, Role::Source))
                .collect();
            if rom_stores.is_empty() {
                continue;
            }
            if metadata_known {
                // Metadata names the target and type; the key is a direct
                // ROM lookup if any stolen ROM carries that row.
                let found = match view.comm_type {
                    CommType::Multicast => {
                        rom_stores.iter().any(|s| s.multicast_entry.bits == key_bits)
                    }
                    CommType::Unicast => rom_stores
                        .iter()
                        .filter_map(|s| s.unicast_for(view.leg_target))
                        .any(|k| k.bits == key_bits),
                };
                if found {
                    self.deciphered += 1;
                }
            } else {
                // No metadata: guess uniformly over the first stolen ROM's
                // rows (every unicast entry plus the multicast entry).
                let rom = rom_stores[0];
                let pool = rom.entry_count();
                let pick = self.rng.random_range(0..pool);
                let guessed = if pick == rom.unicast_entries.len() {
                    rom.multicast_entry.bits
                } else {
                    rom.unicast_entries[pick].1.bits
                };
                if guessed == key_bits {
                    self.deciphered += 1;
                }
            }
        }
    }

    pub fn into_report(self) -> SecurityReport {
        SecurityReport {
            strategy: self.scenario.strategy,
            packets_snooped: self.snooped,
            packets_deciphered: self.deciphered,
            decipher_rate: if self.snooped == 0 {
                0.0
            } else {
                self.deciphered as f64 / self.snooped as f64
            },
            metadata_leaks: self.metadata_leaks,
        }
    }
}
