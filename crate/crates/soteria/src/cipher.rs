//! Whole-packet XOR encipherment with metadata-driven key selection.
//!
//! The cipher is deliberately the bare mechanism under evaluation: one
//! static 512-bit key per destination (or per waveguide for multicast),
//! XORed across the packet. No nonce, IV, or authentication is layered on
//! top, because the point of the toolkit is to measure exactly this scheme.

use crate::bits::Bits512;
use crate::error::{Error, Result};
use crate::ids::GatewayId;
use crate::keyforge::KeyStore;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommType {
    Unicast,
    Multicast,
}

/// Receiver-announcement content: who the data slot is for and whether the
/// transfer is unicast or multicast. This is what a reservation slot leaks
/// when it travels in-band.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub target: GatewayId,
    pub comm_type: CommType,
}

/// A 512-bit payload in flight.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub payload: Bits512,
    pub src: GatewayId,
    pub dst_set: BTreeSet<GatewayId>,
    pub comm_type: CommType,
    pub created_cycle: u64,
    pub delivered_cycle: Option<u64>,
    pub encrypted: bool,
}

impl Packet {
    pub fn unicast(src: GatewayId, dst: GatewayId, payload: Bits512, cycle: u64) -> Self {
        Self {
            payload,
            src,
            dst_set: BTreeSet::from([dst]),
            comm_type: CommType::Unicast,
            created_cycle: cycle,
            delivered_cycle: None,
            encrypted: false,
        }
    }

    pub fn multicast(
        src: GatewayId,
        dsts: BTreeSet<GatewayId>,
        payload: Bits512,
        cycle: u64,
    ) -> Result<Self> {
        if dsts.len() < 2 {
            return Err(Error::Structural(format!(
                "multicast needs at least 2 destinations, got {}",
                dsts.len()
            )));
        }
        Ok(Self {
            payload,
            src,
            dst_set: dsts,
            comm_type: CommType::Multicast,
            created_cycle: cycle,
            delivered_cycle: None,
            encrypted: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self.comm_type {
            CommType::Unicast if self.dst_set.len() != 1 => Err(Error::Structural(format!(
                "unicast packet with {} destinations",
                self.dst_set.len()
            ))),
            CommType::Multicast if self.dst_set.len() < 2 => Err(Error::Structural(format!(
                "multicast packet with {} destinations",
                self.dst_set.len()
            ))),
            _ => Ok(()),
        }
    }
}

/// Picks the ROM entry the metadata calls for: the target's unicast key, or
/// the waveguide's multicast key. A destination ROM only resolves its own
/// unicast key; asking it for another target is a miss.
pub fn select_key(store: &KeyStore, meta: &Metadata) -> Result<Bits512> {
    match meta.comm_type {
        CommType::Multicast => Ok(store.multicast_entry.bits),
        CommType::Unicast => store
            .unicast_for(meta.target)
            .map(|k| k.bits)
            .ok_or(Error::KeyNotFound {
                target: meta.target,
            }),
    }
}

/// XORs the key over the payload. The engine charges one cycle for this;
/// the flag is simulation bookkeeping, not an on-wire bit.
pub fn encrypt(mut p: Packet, key: &Bits512) -> Result<Packet> {
    if p.encrypted {
        return Err(Error::CipherState("packet is already encrypted"));
    }
    p.payload ^= *key;
    p.encrypted = true;
    Ok(p)
}

/// Inverse of [`encrypt`]; also one engine cycle.
pub fn decrypt(mut p: Packet, key: &Bits512) -> Result<Packet> {
    if !p.encrypted {
        return Err(Error::CipherState("packet is not encrypted"));
    }
    p.payload ^= *key;
    p.encrypted = false;
    Ok(p)
}
