//! Key derivation from per-die process variation.
//!
//! Each destination gateway reads its 64 detector rings' resonance error
//! signals off the shared variation map, quantizes them to signed 8-bit
//! codes, and concatenates the codes in a per-gateway secret order into a
//! 512-bit key. Keys are XOR-combined into one multicast key per channel.
//! ROMs hold exactly what each endpoint role needs: sources know every
//! reachable destination plus the channel multicast key, destinations know
//! only their own key plus the multicast key.

use crate::bits::Bits512;
use crate::error::{Error, Result};
use crate::fabric::Fabric;
use crate::ids::{ChannelId, GatewayId};
use crate::pvmap::PvMap;
use crate::{domains, mix_seed};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Detector rings per gateway bank; one quantized code per ring.
pub const DETECTORS_PER_BANK: usize = 64;
/// Full-scale quantizer input in nm; errors beyond this saturate.
pub const QUANTIZER_FULL_SCALE_NM: f64 = 3.2;

/// Signed 8-bit resonance error code from one detector ring.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorSignal {
    pub code: i8,
}

/// Maps a resonance shift in nm onto [-127, 127], saturating at full scale.
/// Rounding is to nearest with ties away from zero, so +1.6 nm lands on 64.
pub fn quantize_error(shift_nm: f64) -> ErrorSignal {
    let clamped = shift_nm.clamp(-QUANTIZER_FULL_SCALE_NM, QUANTIZER_FULL_SCALE_NM);
    ErrorSignal {
        code: (clamped / QUANTIZER_FULL_SCALE_NM * 127.0).round() as i8,
    }
}

/// Secret concatenation order over the 64 detector codes; a bijection on
/// 0..64 fixed per gateway at provisioning time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct Permutation(Vec<u8>);

impl Permutation {
    pub fn new(order: Vec<u8>) -> Result<Self> {
        if order.len() != DETECTORS_PER_BANK {
            return Err(Error::Structural(format!(
                "permutation has {} entries, expected {DETECTORS_PER_BANK}",
                order.len()
            )));
        }
        let mut seen = [false; DETECTORS_PER_BANK];
        for &i in &order {
            let slot = seen
                .get_mut(i as usize)
                .ok_or_else(|| Error::Structural(format!("permutation index {i} out of range")))?;
            if std::mem::replace(slot, true) {
                return Err(Error::Structural(format!(
                    "permutation repeats index {i}"
                )));
            }
        }
        Ok(Self(order))
    }

    pub fn identity() -> Self {
        Self((0..DETECTORS_PER_BANK as u8).collect())
    }

    pub fn random<R: rand::Rng + ?Sized>(rng: &mut R) -> Self {
        let mut order: Vec<u8> = (0..DETECTORS_PER_BANK as u8).collect();
        order.shuffle(rng);
        Self(order)
    }

    pub fn indices(&self) -> &[u8] {
        &self.0
    }
}

impl TryFrom<Vec<u8>> for Permutation {
    type Error = Error;
    fn try_from(v: Vec<u8>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Permutation> for Vec<u8> {
    fn from(p: Permutation) -> Self {
        p.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnicastKey {
    pub bits: Bits512,
    /// Destination gateway whose detector bank produced this key.
    pub owner: GatewayId,
    pub permutation: Permutation,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MulticastKey {
    pub bits: Bits512,
    /// Channel whose destination keys were folded together.
    pub waveguide: ChannelId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Source,
    Destination,
}

/// One endpoint's key ROM for one channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyStore {
    pub role: Role,
    /// Unicast entries in channel destination order.
    pub unicast_entries: Vec<(GatewayId, UnicastKey)>,
    pub multicast_entry: MulticastKey,
}

impl KeyStore {
    pub fn unicast_for(&self, target: GatewayId) -> Option<&UnicastKey> {
        self.unicast_entries
            .iter()
            .find(|(owner, _)| *owner == target)
            .map(|(_, key)| key)
    }

    /// Unicast rows plus the single multicast row.
    pub fn entry_count(&self) -> usize {
        self.unicast_entries.len() + 1
    }
}

/// Concatenates the permuted codes MSB-first: the code selected by
/// `permutation[0]` becomes the most significant key byte.
pub fn derive_unicast_key(
    codes: &[ErrorSignal],
    permutation: &Permutation,
    owner: GatewayId,
) -> Result<UnicastKey> {
    if codes.len() != DETECTORS_PER_BANK {
        return Err(Error::Structural(format!(
            "gateway {owner} produced {} error codes, expected {DETECTORS_PER_BANK}",
            codes.len()
        )));
    }
    let mut bytes = [0u8; DETECTORS_PER_BANK];
    for (byte, &src) in bytes.iter_mut().zip(permutation.indices()) {
        *byte = codes[src as usize].code as u8;
    }
    Ok(UnicastKey {
        bits: Bits512::from_bytes(bytes),
        owner,
        permutation: permutation.clone(),
    })
}

/// XOR fold over every destination key of a channel. Any subset XOR of the
/// fold differs from every member key, so group traffic never exposes a
/// unicast key.
pub fn derive_multicast_key(keys: &[UnicastKey], waveguide: ChannelId) -> Result<MulticastKey> {
    if keys.is_empty() {
        return Err(Error::Structural(format!(
            "channel {waveguide} has no destination keys to fold"
        )));
    }
    let bits = keys.iter().fold(Bits512::ZERO, |acc, k| acc ^ k.bits);
    Ok(MulticastKey { bits, waveguide })
}

/// One key per destination-capable gateway: detector-bank shifts sampled
/// from the map, quantized, and concatenated under a per-gateway secret
/// permutation drawn from `seed`. The permutation stream is keyed by
/// gateway id so keys for different gateways never share an order, and
/// re-deriving with the same seed on a different map changes only the codes.
pub fn derive_gateway_keys(
    fabric: &Fabric,
    map: &PvMap,
    seed: u64,
) -> Result<Vec<(GatewayId, UnicastKey)>> {
    let base = mix_seed(seed, domains::KEYS);
    let mut out = Vec::new();
    for gateway in fabric.gateways.iter().filter(|g| g.is_destination) {
        if gateway.detector_bank.len() != DETECTORS_PER_BANK {
            return Err(Error::Structural(format!(
                "gateway {} has {} detector rings, expected {DETECTORS_PER_BANK}",
                gateway.id,
                gateway.detector_bank.len()
            )));
        }
        let codes: Vec<ErrorSignal> = gateway
            .detector_bank
            .iter()
            .map(|p| map.sample_shift(p.x_mm, p.y_mm).map(quantize_error))
            .collect::<Result<_>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(base, gateway.id.0 as u64));
        let permutation = Permutation::random(&mut rng);
        out.push((
            gateway.id,
            derive_unicast_key(&codes, &permutation, gateway.id)?,
        ));
    }
    Ok(out)
}

/// Key ROMs for every endpoint of every secured channel, keyed by
/// (gateway, channel, role).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct KeyStoreSet {
    #[serde(with = "entries_as_records")]
    pub entries: BTreeMap<(GatewayId, ChannelId, Role), KeyStore>,
}

/// JSON maps need string keys, so the entry map is written as a flat
/// record list and rebuilt on load.
mod entries_as_records {
    use super::*;
    use serde::{Deserializer, Serializer};

    type EntryMap = BTreeMap<(GatewayId, ChannelId, Role), KeyStore>;

    #[derive(Serialize, Deserialize)]
    struct Record {
        gateway: GatewayId,
        channel: ChannelId,
        role: Role,
        store: KeyStore,
    }

    pub fn serialize<S: Serializer>(
        entries: &EntryMap,
        ser: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let records: Vec<Record> = entries
            .iter()
            .map(|(&(gateway, channel, role), store)| Record {
                gateway,
                channel,
                role,
                store: store.clone(),
            })
            .collect();
        records.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        de: D,
    ) -> std::result::Result<EntryMap, D::Error> {
        let records = Vec::<Record>::deserialize(de)?;
        Ok(records
            .into_iter()
            .map(|r| ((r.gateway, r.channel, r.role), r.store))
            .collect())
    }
}

#[derive(Serialize, Deserialize)]
struct KeyStoreFile {
    kind: String,
    version: u32,
    stores: KeyStoreSet,
}

impl KeyStoreSet {
    pub fn get(&self, gateway: GatewayId, channel: ChannelId, role: Role) -> Option<&KeyStore> {
        self.entries.get(&(gateway, channel, role))
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = KeyStoreFile {
            kind: "keystores".into(),
            version: 1,
            stores: self.clone(),
        };
        std::fs::write(path, serde_json::to_string(&file)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: KeyStoreFile = serde_json::from_str(&text)?;
        if file.kind != "keystores" || file.version != 1 {
            return Err(Error::InvalidParameter(format!(
                "not a version-1 keystores artifact: kind {:?} version {}",
                file.kind, file.version
            )));
        }
        Ok(file.stores)
    }
}

/// Provisions ROMs for the secured channels of a fabric. Unsecured channels
/// get no stores; their traffic rides in cleartext.
pub fn build_keystores(fabric: &Fabric, map: &PvMap, seed: u64) -> Result<KeyStoreSet> {
    let gateway_keys: BTreeMap<GatewayId, UnicastKey> =
        derive_gateway_keys(fabric, map, seed)?.into_iter().collect();
    let mut set = KeyStoreSet::default();
    for channel in fabric.channels.iter().filter(|c| c.secured) {
        let dest_keys: Vec<UnicastKey> = channel
            .destinations
            .iter()
            .map(|d| {
                gateway_keys.get(d).cloned().ok_or_else(|| {
                    Error::Structural(format!(
                        "channel {} destination {d} has no derived key",
                        channel.id
                    ))
                })
            })
            .collect::<Result<_>>()?;
        let multicast = derive_multicast_key(&dest_keys, channel.id)?;

        for &src in &channel.sources {
            let unicast_entries: Vec<(GatewayId, UnicastKey)> = channel
                .destinations
                .iter()
                .zip(&dest_keys)
                .filter(|(d, _)| **d != src)
                .map(|(d, k)| (*d, k.clone()))
                .collect();
            set.entries.insert(
                (src, channel.id, Role::Source),
                KeyStore {
                    role: Role::Source,
                    unicast_entries,
                    multicast_entry: multicast,
                },
            );
        }
        for (d, k) in channel.destinations.iter().zip(&dest_keys) {
            set.entries.insert(
                (*d, channel.id, Role::Destination),
                KeyStore {
                    role: Role::Destination,
                    unicast_entries: vec![(*d, k.clone())],
                    multicast_entry: multicast,
                },
            );
        }
    }
    Ok(set)
}
