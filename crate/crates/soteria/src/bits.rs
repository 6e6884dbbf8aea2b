//! Fixed 512-bit block used for packet payloads and ROM keys.

use crate::error::{Error, Result};
use rand::RngCore;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::ops::{BitXor, BitXorAssign};

pub const BLOCK_BYTES: usize = 64;
pub const BLOCK_BITS: usize = BLOCK_BYTES * 8;

/// A 512-bit value. Byte 0 is the most-significant end; bit 7 of each byte
/// is that byte's most-significant bit. This fixes the packing order for
/// keys assembled from 8-bit error codes.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bits512([u8; BLOCK_BYTES]);

impl Bits512 {
    pub const ZERO: Self = Self([0u8; BLOCK_BYTES]);

    pub fn from_bytes(bytes: [u8; BLOCK_BYTES]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; BLOCK_BYTES] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&b| b == 0)
    }

    /// Uniformly random block from the given stream.
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; BLOCK_BYTES];
        rng.fill_bytes(&mut bytes);
        Self(bytes)
    }

    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(BLOCK_BYTES * 2);
        for b in &self.0 {
            use std::fmt::Write;
            write!(s, "{b:02x}").expect("writing to String cannot fail");
        }
        s
    }

    pub fn from_hex(hex: &str) -> Result<Self> {
        let hex = hex.trim();
        if hex.len() != BLOCK_BYTES * 2 {
            return Err(Error::InvalidParameter(format!(
                "hex key must be {} characters, got {}",
                BLOCK_BYTES * 2,
                hex.len()
            )));
        }
        let mut bytes = [0u8; BLOCK_BYTES];
        for (i, chunk) in hex.as_bytes().chunks_exact(2).enumerate() {
            let s = std::str::from_utf8(chunk)
                .map_err(|_| Error::InvalidParameter("non-ASCII hex key".into()))?;
            bytes[i] = u8::from_str_radix(s, 16)
                .map_err(|_| Error::InvalidParameter(format!("bad hex byte {s:?}")))?;
        }
        Ok(Self(bytes))
    }
}

impl BitXor for Bits512 {
    type Output = Bits512;

    fn bitxor(self, rhs: Self) -> Self {
        let mut out = [0u8; BLOCK_BYTES];
        for (o, (a, b)) in out.iter_mut().zip(self.0.iter().zip(rhs.0.iter())) {
            *o = a ^ b;
        }
        Self(out)
    }
}

impl BitXorAssign for Bits512 {
    fn bitxor_assign(&mut self, rhs: Self) {
        *self = *self ^ rhs;
    }
}

impl Default for Bits512 {
    fn default() -> Self {
        Self::ZERO
    }
}

impl fmt::Debug for Bits512 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Full hex would drown test output; the leading 8 bytes identify a key.
        let hex = self.to_hex();
        write!(f, "Bits512({}..)", &hex[..16])
    }
}

impl Serialize for Bits512 {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Bits512 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Bits512::from_hex(&s).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn xor_is_involutive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = Bits512::random(&mut rng);
        let k = Bits512::random(&mut rng);
        assert_eq!(a ^ k ^ k, a);
        assert_eq!(a ^ Bits512::ZERO, a);
        assert!((a ^ a).is_zero());
    }

    #[test]
    fn hex_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = Bits512::random(&mut rng);
        assert_eq!(Bits512::from_hex(&a.to_hex()).unwrap(), a);
        assert!(Bits512::from_hex("abc").is_err());
        assert!(Bits512::from_hex(&"zz".repeat(64)).is_err());
    }

    #[test]
    fn serde_uses_hex_strings() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = Bits512::random(&mut rng);
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, format!("\"{}\"", a.to_hex()));
        let back: Bits512 = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
    }
}
