//! Protocol data types and their canonical byte layouts.

use serde::{Deserialize, Serialize};

use crate::bits::BitVector;
use crate::field::{FieldElement, FieldParams};
use crate::{Error, Result};

use super::prims::{SigningKey, VerifyingKey};
use super::roles::REVOKED_FLAG;

/// Booking details occupy exactly six 128-bit blocks, padding included.
pub const BD_BLOCKS: usize = 6;
/// With the default 512-bit signature scheme the signed booking is exactly
/// ten 128-bit blocks, the benchmark-mode message size.
pub const BENCHMARK_M_BLOCKS: usize = 10;

const BD_BYTES: usize = BD_BLOCKS * 16;

/// The owner/consumer-agreed booking record.
///
/// Canonical packing, big-endian within fields, zero-padded to six blocks:
/// certificate hash (64 bytes), vehicle id (4), pick-up location (8),
/// conditions (start, end, flags; 4 each), access-rights mask (1),
/// booking id (4), padding (3).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookingDetails {
    #[serde(with = "hex_array64")]
    pub cert_hash: [u8; 64],
    pub vehicle_id: u32,
    pub location: u64,
    /// Window start, epoch seconds (inclusive).
    pub cd_start: u32,
    /// Window end, epoch seconds (exclusive).
    pub cd_end: u32,
    pub cd_flags: u32,
    /// Access-rights bitmask.
    pub access_rights: u8,
    pub booking_id: u32,
}

impl BookingDetails {
    pub fn validate(&self) -> Result<()> {
        let revoked = self.cd_flags & REVOKED_FLAG != 0;
        if !revoked && self.cd_start >= self.cd_end {
            return Err(Error::Validation(format!(
                "booking window start {} not before end {}",
                self.cd_start, self.cd_end
            )));
        }
        Ok(())
    }

    pub fn is_revocation(&self) -> bool {
        self.cd_flags & REVOKED_FLAG != 0
    }

    pub fn to_bytes(&self) -> [u8; BD_BYTES] {
        let mut out = [0u8; BD_BYTES];
        out[0..64].copy_from_slice(&self.cert_hash);
        out[64..68].copy_from_slice(&self.vehicle_id.to_be_bytes());
        out[68..76].copy_from_slice(&self.location.to_be_bytes());
        out[76..80].copy_from_slice(&self.cd_start.to_be_bytes());
        out[80..84].copy_from_slice(&self.cd_end.to_be_bytes());
        out[84..88].copy_from_slice(&self.cd_flags.to_be_bytes());
        out[88] = self.access_rights;
        out[89..93].copy_from_slice(&self.booking_id.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<BookingDetails> {
        if bytes.len() != BD_BYTES {
            return Err(Error::Encoding(format!(
                "booking details must be {BD_BYTES} bytes, got {}",
                bytes.len()
            )));
        }
        if bytes[93..96] != [0, 0, 0] {
            return Err(Error::Encoding("booking details padding not zero".into()));
        }
        let mut cert_hash = [0u8; 64];
        cert_hash.copy_from_slice(&bytes[0..64]);
        Ok(BookingDetails {
            cert_hash,
            vehicle_id: u32::from_be_bytes(bytes[64..68].try_into().unwrap()),
            location: u64::from_be_bytes(bytes[68..76].try_into().unwrap()),
            cd_start: u32::from_be_bytes(bytes[76..80].try_into().unwrap()),
            cd_end: u32::from_be_bytes(bytes[80..84].try_into().unwrap()),
            cd_flags: u32::from_be_bytes(bytes[84..88].try_into().unwrap()),
            access_rights: bytes[88],
            booking_id: u32::from_be_bytes(bytes[89..93].try_into().unwrap()),
        })
    }
}

/// Splits a byte string into 128-bit blocks as field elements (big-endian
/// block values; every 128-bit value fits below the production modulus).
pub fn bytes_to_field_blocks(field: &FieldParams, bytes: &[u8]) -> Vec<FieldElement> {
    assert_eq!(bytes.len() % 16, 0, "input not block aligned");
    bytes
        .chunks(16)
        .map(|c| field.element_from_u128(u128::from_be_bytes(c.try_into().unwrap())))
        .collect()
}

/// Inverse of [`bytes_to_field_blocks`]; fails if any block overflows 128
/// bits (which in honest runs never happens).
pub fn field_blocks_to_bytes(blocks: &[FieldElement]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(blocks.len() * 16);
    for b in blocks {
        let enc = b.encode();
        if enc.len() == 17 && enc[16] != 0 {
            return Err(Error::Encoding("plaintext block exceeds 128 bits".into()));
        }
        let mut le = [0u8; 16];
        le.copy_from_slice(&enc[..16]);
        let v = u128::from_le_bytes(le);
        out.extend_from_slice(&v.to_be_bytes());
    }
    Ok(out)
}

/// `M = {BD, sigma}`: the signed booking.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignedBooking {
    pub bd: BookingDetails,
    pub sigma: Vec<u8>,
}

impl SignedBooking {
    pub fn sign(bd: BookingDetails, key: &SigningKey) -> Result<SignedBooking> {
        bd.validate()?;
        let sigma = key.sign(&bd.to_bytes());
        Ok(SignedBooking { bd, sigma })
    }

    pub fn verify(&self, key: &VerifyingKey) -> bool {
        key.verify(&self.bd.to_bytes(), &self.sigma)
    }

    /// Canonical bytes: packed booking details followed by the signature.
    /// 160 bytes (10 blocks) in the default 512-bit-signature mode.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.bd.to_bytes().to_vec();
        out.extend_from_slice(&self.sigma);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<SignedBooking> {
        if bytes.len() < BD_BYTES || (bytes.len() - BD_BYTES) % 16 != 0 {
            return Err(Error::Encoding("signed booking not block aligned".into()));
        }
        Ok(SignedBooking {
            bd: BookingDetails::from_bytes(&bytes[..BD_BYTES])?,
            sigma: bytes[BD_BYTES..].to_vec(),
        })
    }

    pub fn num_blocks(&self) -> usize {
        (BD_BYTES + self.sigma.len()) / 16
    }

    pub fn to_field_blocks(&self, field: &FieldParams) -> Vec<FieldElement> {
        bytes_to_field_blocks(field, &self.to_bytes())
    }

    pub fn to_bits(&self) -> BitVector {
        BitVector::from_bytes_msb_first(&self.to_bytes())
    }
}

/// The vehicle-access confirmation signed by the on-board unit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AccessConfirmation {
    pub ts_access: u32,
    #[serde(with = "base64_bytes")]
    pub sigma: Vec<u8>,
}

impl AccessConfirmation {
    pub fn signed_payload(bd: &BookingDetails, ts_access: u32) -> Vec<u8> {
        let mut out = bd.to_bytes().to_vec();
        out.extend_from_slice(&ts_access.to_be_bytes());
        out
    }

    pub fn verify(&self, vehicle_key: &VerifyingKey, bd: &BookingDetails) -> bool {
        vehicle_key.verify(&Self::signed_payload(bd, self.ts_access), &self.sigma)
    }
}

/// One vehicle as provisioned by the manufacturer: the 128-bit long-term
/// key lives only here and inside the on-board unit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub owner_id: String,
    pub vehicle_id: u32,
    pub key: [u8; 16],
}

/// The manufacturer's cleartext key database.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct VmDatabase {
    pub rows: Vec<VehicleRecord>,
}

impl VmDatabase {
    pub fn lookup(&self, owner_id: &str, vehicle_id: u32) -> Option<&VehicleRecord> {
        self.rows
            .iter()
            .find(|r| r.owner_id == owner_id && r.vehicle_id == vehicle_id)
    }
}

/// One server's stored share row: the owner id in clear, the vehicle id and
/// key only as shares (both the field-element and bit-level forms, so either
/// backend can run against the same registration).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ServerRow {
    pub owner_id: String,
    /// Opaque per-owner registration index (reveals nothing about the
    /// vehicle); keys the embedded store and duplicate detection.
    pub row_id: u32,
    #[serde(with = "base64_bytes")]
    pub id_share_field: Vec<u8>,
    #[serde(with = "base64_bytes")]
    pub key_share_field: Vec<u8>,
    #[serde(with = "base64_bytes")]
    pub id_share_bits: Vec<u8>,
    #[serde(with = "base64_bytes")]
    pub key_share_bits: Vec<u8>,
}

/// Control-plane messages, JSON-encoded with a type tag. Every message
/// carries a booking or session identifier.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ProtocolMessage {
    #[serde(rename = "SES_K_GEN_REQ")]
    SesKeyGenReq { booking_id: u32 },
    #[serde(rename = "SES_K_GEN_ACK")]
    SesKeyGenAck {
        booking_id: u32,
        /// One KEM ciphertext per server, in party order.
        enc_bundles: Vec<String>,
    },
    #[serde(rename = "AT_GEN_REQ")]
    AtGenReq {
        session_id: String,
        owner_id: String,
        booking_id: u32,
        backend: String,
        /// This server's KEM-encrypted key-share bundle.
        enc_bundle: String,
        /// This server's share of the signed-booking blocks.
        m_shares: String,
        /// This server's share of the target vehicle id (field backend).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target_id_share: Option<String>,
    },
    #[serde(rename = "M_PUB_ACK")]
    MPubAck { session_id: String, ts: u64 },
    #[serde(rename = "AT_PUB_ACK")]
    AtPubAck { session_id: String, booking_id: u32, ts: u64 },
    #[serde(rename = "ACCESS_REQ")]
    AccessReq {
        booking_id: u32,
        vehicle_id: u32,
        at: String,
        cert: String,
        ledger_ts: u64,
    },
    #[serde(rename = "ACCESS_CONFIRM")]
    AccessConfirm { booking_id: u32, ts_access: u32, sigma: String },
}

impl ProtocolMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("message serialization")
    }

    pub fn from_json(text: &str) -> Result<ProtocolMessage> {
        serde_json::from_str(text)
            .map_err(|e| Error::Encoding(format!("bad protocol message: {e}")))
    }
}

pub(crate) mod hex_array64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8; 64], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 64], D::Error> {
        let s = String::deserialize(d)?;
        let v = hex::decode(s).map_err(serde::de::Error::custom)?;
        v.try_into()
            .map_err(|_| serde::de::Error::custom("expected 64 bytes"))
    }
}

pub(crate) mod base64_bytes {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &Vec<u8>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD.decode(s).map_err(serde::de::Error::custom)
    }
}
