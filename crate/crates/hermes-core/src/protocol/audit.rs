//! Threshold audit: any two of the three servers' per-session records
//! reconstruct the signed booking for that session, and only that session.

use serde::{Deserialize, Serialize};

use crate::field::FieldParams;
use crate::share::{reconstruct_bits_pair, reconstruct_pair, PartyId};
use crate::{Error, Result};

use super::step2::MShares;
use super::types::{base64_bytes, field_blocks_to_bytes, SignedBooking};

/// What one server persists after a token-generation session: shares and
/// metadata only, never cleartext booking material.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuditRecord {
    pub session_id: String,
    pub party: u8,
    #[serde(with = "base64_bytes")]
    pub m_share: Vec<u8>,
    /// Unix seconds at which the record was written.
    pub recorded_at: u64,
}

impl AuditRecord {
    pub fn new(session_id: [u8; 16], party: PartyId, m_shares: &MShares) -> AuditRecord {
        AuditRecord {
            session_id: hex::encode(session_id),
            party: party.0,
            m_share: m_shares.encode(),
            recorded_at: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("audit record serialization")
    }

    pub fn from_json(text: &str) -> Result<AuditRecord> {
        serde_json::from_str(text)
            .map_err(|e| Error::Audit(format!("bad audit record: {e}")))
    }
}

/// Reconstructs the signed booking from at least two servers' records for
/// one session. Verifying the owner signature is the caller's final step.
pub fn audit_reconstruct(field: &FieldParams, records: &[AuditRecord]) -> Result<SignedBooking> {
    if records.len() < 2 {
        return Err(Error::Audit(format!(
            "need records from at least 2 servers, got {}",
            records.len()
        )));
    }
    let session = &records[0].session_id;
    for r in records {
        if &r.session_id != session {
            return Err(Error::Audit(format!(
                "records span different sessions: {} vs {}",
                session, r.session_id
            )));
        }
        if r.party > 2 {
            return Err(Error::Audit(format!("bad party id {}", r.party)));
        }
    }
    let (a, b) = (&records[0], &records[1]);
    if a.party == b.party {
        return Err(Error::Audit("records come from the same server".into()));
    }
    let sa = MShares::decode(PartyId(a.party), field, &a.m_share)?;
    let sb = MShares::decode(PartyId(b.party), field, &b.m_share)?;
    let bytes = match (sa, sb) {
        (MShares::Field(fa), MShares::Field(fb)) => {
            if fa.len() != fb.len() {
                return Err(Error::Audit("share block counts differ".into()));
            }
            let blocks = fa
                .iter()
                .zip(&fb)
                .map(|(x, y)| reconstruct_pair(x, y))
                .collect::<Result<Vec<_>>>()?;
            field_blocks_to_bytes(&blocks)?
        }
        (MShares::Bits(ba), MShares::Bits(bb)) => {
            let bits = reconstruct_bits_pair(&ba, &bb)?;
            bits.to_bytes_msb_first()
        }
        _ => return Err(Error::Audit("records use different backends".into())),
    };
    SignedBooking::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::prims::{SignatureMode, SigningKey};
    use crate::protocol::roles::Backend;
    use crate::protocol::types::BookingDetails;
    use crate::share::share;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn sample_records(backend: Backend) -> (SignedBooking, [AuditRecord; 3]) {
        let f = FieldParams::production();
        let mut rng = ChaCha12Rng::seed_from_u64(95);
        let (sk, _) = SigningKey::generate(SignatureMode::Compact512, &mut rng);
        let bd = BookingDetails {
            cert_hash: [3u8; 64],
            vehicle_id: 11,
            location: 22,
            cd_start: 5,
            cd_end: 10,
            cd_flags: 0,
            access_rights: 1,
            booking_id: 77,
        };
        let m = SignedBooking::sign(bd, &sk).unwrap();
        let shares: [MShares; 3] = match backend {
            Backend::Mimc => {
                let blocks = m.to_field_blocks(&f);
                let mut pp: [Vec<crate::share::RepShare>; 3] = Default::default();
                for b in &blocks {
                    let s = share(b, &mut rng);
                    for i in 0..3 {
                        pp[i].push(s[i].clone());
                    }
                }
                let mut it = pp.into_iter().map(MShares::Field);
                std::array::from_fn(|_| it.next().unwrap())
            }
            Backend::Aes => {
                let bits = m.to_bits();
                let sh = crate::share::share_bits(&bits, &mut rng);
                let mut it = sh.into_iter().map(MShares::Bits);
                std::array::from_fn(|_| it.next().unwrap())
            }
        };
        let records =
            std::array::from_fn(|i| AuditRecord::new([5u8; 16], PartyId(i as u8), &shares[i]));
        (m, records)
    }

    #[test]
    fn two_of_three_reconstruct_exactly() {
        for backend in [Backend::Mimc, Backend::Aes] {
            let (m, records) = sample_records(backend);
            let f = FieldParams::production();
            for pair in [[0, 1], [1, 2], [0, 2], [2, 0]] {
                let got = audit_reconstruct(
                    &f,
                    &[records[pair[0]].clone(), records[pair[1]].clone()],
                )
                .unwrap();
                assert_eq!(got, m);
            }
        }
    }

    #[test]
    fn one_record_refused() {
        let (_, records) = sample_records(Backend::Mimc);
        let f = FieldParams::production();
        assert!(matches!(
            audit_reconstruct(&f, &records[..1]),
            Err(Error::Audit(_))
        ));
        // Same server twice is not a quorum either.
        assert!(audit_reconstruct(&f, &[records[1].clone(), records[1].clone()]).is_err());
    }

    #[test]
    fn mismatched_sessions_refused() {
        let (_, records) = sample_records(Backend::Mimc);
        let f = FieldParams::production();
        let mut other = records[1].clone();
        other.session_id = hex::encode([6u8; 16]);
        assert!(audit_reconstruct(&f, &[records[0].clone(), other]).is_err());
    }

    #[test]
    fn records_serialize_as_json() {
        let (_, records) = sample_records(Backend::Mimc);
        let json = records[0].to_json();
        let back = AuditRecord::from_json(&json).unwrap();
        assert_eq!(back.session_id, records[0].session_id);
        assert_eq!(back.m_share, records[0].m_share);
    }
}
