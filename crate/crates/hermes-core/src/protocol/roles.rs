//! Role state machines for the four online steps: the owner signs and
//! shares bookings, the consumer derives session keys and retrieves tokens
//! from the ledger, and the vehicle's on-board unit verifies and grants
//! access.

use rand::{CryptoRng, RngCore};
use sha3::{Digest, Sha3_256};

use crate::bits::BitVector;
use crate::boolcirc::{aes128_circuit, aes_ctr_clear, cbc_mac_clear};
use crate::field::{FieldElement, FieldParams};
use crate::mimc::{
    ctr_decrypt, kdf, mimc_encrypt, CounterWatermark, MimcParams, SessionKeys,
    TaggedCiphertext,
};
use crate::share::{share, share_bits, RepShare};
use crate::{Error, Result};

use super::prims::{kem_encrypt, Certificate, SignatureMode, SigningKey, VerifyingKey};
use super::step2::{KeyBundleShare, MShares};
use super::types::{
    bytes_to_field_blocks, field_blocks_to_bytes, AccessConfirmation, BookingDetails, ServerRow,
    SignedBooking, VehicleRecord,
};

/// Booking-condition flag marking a revocation record.
pub const REVOKED_FLAG: u32 = 1 << 31;

/// Which whole-pipeline instantiation a deployment runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Backend {
    /// Arithmetic circuits: MiMC-CTR with the Enc-then-Hash-then-MAC tag.
    Mimc,
    /// Binary circuits: AES-CTR with a CBC-MAC tag.
    Aes,
}

impl Backend {
    pub fn as_str(&self) -> &'static str {
        match self {
            Backend::Mimc => "mimc",
            Backend::Aes => "aes",
        }
    }

    pub fn parse(s: &str) -> Result<Backend> {
        match s {
            "mimc" => Ok(Backend::Mimc),
            "aes" => Ok(Backend::Aes),
            other => Err(Error::Parameter(format!("unknown backend {other}"))),
        }
    }
}

/// The vehicle's long-term key as a field element (big-endian value of the
/// 16 key bytes).
pub fn vehicle_key_field(field: &FieldParams, key: &[u8; 16]) -> FieldElement {
    field.element_from_u128(u128::from_be_bytes(*key))
}

pub fn vehicle_key_bits(key: &[u8; 16]) -> BitVector {
    BitVector::from_bytes_msb_first(key)
}

/// 128-bit AES session keys for the binary backend, derived from the field
/// session keys.
pub fn boolean_session_keys(keys: &SessionKeys) -> (BitVector, BitVector) {
    let derive = |fe: &FieldElement, tag: &[u8]| {
        let mut h = Sha3_256::new();
        h.update(fe.encode());
        h.update(tag);
        let d = h.finalize();
        BitVector::from_bytes_msb_first(&d[..16])
    };
    (derive(&keys.enc, b"aes-enc"), derive(&keys.tag_mac, b"aes-tag"))
}

/// Step A: splits one manufacturer record into the three servers' share
/// rows (both backend forms).
pub fn register_vehicle(
    field: &FieldParams,
    rec: &VehicleRecord,
    row_id: u32,
    rng: &mut (impl RngCore + CryptoRng),
) -> [ServerRow; 3] {
    let id_fe = field.element_from_u64(rec.vehicle_id as u64);
    let key_fe = vehicle_key_field(field, &rec.key);
    let id_f = share(&id_fe, rng);
    let key_f = share(&key_fe, rng);
    let id_b = share_bits(
        &BitVector::from_bytes_msb_first(&rec.vehicle_id.to_be_bytes()),
        rng,
    );
    let key_b = share_bits(&vehicle_key_bits(&rec.key), rng);
    std::array::from_fn(|i| ServerRow {
        owner_id: rec.owner_id.clone(),
        row_id,
        id_share_field: id_f[i].encode(),
        key_share_field: key_f[i].encode(),
        id_share_bits: id_b[i].encode(),
        key_share_bits: key_b[i].encode(),
    })
}

/// Session-key material holder: a master key plus the monotone counter
/// watermark. The consumer owns one; owners keep one of their own so forced
/// updates and revocations can run without the consumer.
#[derive(Clone, Debug)]
pub struct KeyStation {
    master: FieldElement,
    watermark: CounterWatermark,
    mimc: MimcParams,
}

impl KeyStation {
    pub fn new(field: &FieldParams, rng: &mut (impl RngCore + CryptoRng)) -> KeyStation {
        KeyStation {
            master: field.random(rng),
            watermark: CounterWatermark::default(),
            mimc: MimcParams::for_field(field),
        }
    }

    /// Derives fresh session keys, refusing counter reuse.
    pub fn derive(&mut self, counter: u64) -> Result<SessionKeys> {
        self.watermark.claim(counter)?;
        Ok(kdf(&self.mimc, &self.master, counter))
    }

    pub fn next_counter(&self) -> u64 {
        self.watermark.highest().map_or(1, |h| h + 1)
    }
}

/// Builds the three sealed key-share bundles for the servers. The two
/// session-layer CTR tweaks are computed here in the clear and shared with
/// the keys, so the servers never spend rounds on them.
pub fn make_sealed_bundles(
    backend: Backend,
    mimc: &MimcParams,
    keys: &SessionKeys,
    server_pubs: &[[u8; 32]; 3],
    rng: &mut (impl RngCore + CryptoRng),
) -> [Vec<u8>; 3] {
    let field = mimc.field();
    let bundles: [KeyBundleShare; 3] = match backend {
        Backend::Mimc => {
            let one = field.one();
            let tweak_c = mimc_encrypt(mimc, &keys.enc, &one);
            let tweak_tag = mimc_encrypt(mimc, &keys.tag_enc, &one);
            let k_enc = share(&keys.enc, rng);
            let k_tag_enc = share(&keys.tag_enc, rng);
            let k_tag_mac = share(&keys.tag_mac, rng);
            let t_c = share(&tweak_c, rng);
            let t_tag = share(&tweak_tag, rng);
            std::array::from_fn(|i| KeyBundleShare::Field {
                k_enc: k_enc[i].clone(),
                k_tag_enc: k_tag_enc[i].clone(),
                k_tag_mac: k_tag_mac[i].clone(),
                tweak_c: t_c[i].clone(),
                tweak_tag: t_tag[i].clone(),
            })
        }
        Backend::Aes => {
            let (enc_bits, tag_bits) = boolean_session_keys(keys);
            let e = share_bits(&enc_bits, rng);
            let t = share_bits(&tag_bits, rng);
            std::array::from_fn(|i| KeyBundleShare::Bits {
                k_enc: e[i].clone(),
                k_tag: t[i].clone(),
            })
        }
    };
    std::array::from_fn(|i| kem_encrypt(&server_pubs[i], &bundles[i].encode(), rng))
}

// ---------------------------------------------------------------------------
// Consumer
// ---------------------------------------------------------------------------

pub struct Consumer {
    pub cert: Certificate,
    challenge_key: SigningKey,
    pub keys: KeyStation,
    mimc: MimcParams,
    field: FieldParams,
}

impl Consumer {
    pub fn new(subject: &str, field: &FieldParams, rng: &mut (impl RngCore + CryptoRng)) -> Consumer {
        let (challenge_key, vk) = SigningKey::generate(SignatureMode::Compact512, rng);
        let cert = Certificate {
            subject: subject.into(),
            challenge_pubkey: vk.to_bytes().try_into().expect("ed25519 key is 32 bytes"),
        };
        Consumer {
            cert,
            challenge_key,
            keys: KeyStation::new(field, rng),
            mimc: MimcParams::for_field(field),
            field: field.clone(),
        }
    }

    /// Step 1, consumer side: derive session keys and seal the share
    /// bundles for the three servers.
    pub fn session_key_gen(
        &mut self,
        backend: Backend,
        counter: u64,
        server_pubs: &[[u8; 32]; 3],
        rng: &mut (impl RngCore + CryptoRng),
    ) -> Result<(SessionKeys, [Vec<u8>; 3])> {
        let keys = self.keys.derive(counter)?;
        let sealed = make_sealed_bundles(backend, &self.mimc, &keys, server_pubs, rng);
        Ok((keys, sealed))
    }

    /// The tag bytes this booking will carry on the ledger; used both to
    /// locate the entry and to verify it.
    pub fn expected_tag(&self, backend: Backend, keys: &SessionKeys, bd: &BookingDetails) -> Vec<u8> {
        expected_tag(backend, &self.mimc, keys, bd)
    }

    /// Step 3: verify a ledger entry against the agreed booking and decrypt
    /// the token.
    pub fn retrieve(
        &self,
        backend: Backend,
        keys: &SessionKeys,
        bd: &BookingDetails,
        c_uc: &[u8],
        auth_tag: &[u8],
    ) -> Result<ConsumerRetrieval> {
        retrieve_entry(backend, &self.field, keys, bd, c_uc, auth_tag)
    }

    /// Challenge-response: signs the vehicle's nonce under the certificate
    /// key.
    pub fn answer_challenge(&self, nonce: &[u8; 16]) -> Vec<u8> {
        self.challenge_key.sign(nonce)
    }
}

/// Verifies a ledger entry's tag against the agreed booking and decrypts
/// the token. Used by the consumer and by owners running forced updates.
pub fn retrieve_entry(
    backend: Backend,
    field: &FieldParams,
    keys: &SessionKeys,
    bd: &BookingDetails,
    c_uc: &[u8],
    auth_tag: &[u8],
) -> Result<ConsumerRetrieval> {
    let mimc = MimcParams::for_field(field);
    if expected_tag(backend, &mimc, keys, bd) != auth_tag {
        return Err(Error::TagInvalid);
    }
    match backend {
        Backend::Mimc => {
            let ct = TaggedCiphertext::decode(field, c_uc)?;
            let blocks = ctr_decrypt(&mimc, &keys.enc, &ct);
            if blocks.len() < 2 {
                return Err(Error::Encoding("consumer ciphertext too short".into()));
            }
            let id_value = blocks.last().unwrap().encode();
            // The id element must fit 32 bits.
            if id_value[4..].iter().any(|&b| b != 0) {
                return Err(Error::Encoding("vehicle id block out of range".into()));
            }
            let vehicle_id = u32::from_le_bytes(id_value[..4].try_into().unwrap());
            // Consistency with the agreed booking: a corrupted id hint is
            // rejected here rather than sending the holder to a wrong car.
            if vehicle_id != bd.vehicle_id {
                return Err(Error::Validation(format!(
                    "retrieved vehicle id {vehicle_id} does not match the booking"
                )));
            }
            let at = TaggedCiphertext {
                nonce: field.element_from_u64(bd.booking_id as u64),
                blocks: blocks[..blocks.len() - 1].to_vec(),
            };
            Ok(ConsumerRetrieval { at: AtWire::Field(at), vehicle_id })
        }
        Backend::Aes => {
            if c_uc.len() % 16 != 0 || c_uc.len() < 32 {
                return Err(Error::Encoding("consumer ciphertext not block aligned".into()));
            }
            let c_blocks: Vec<BitVector> =
                c_uc.chunks(16).map(BitVector::from_bytes_msb_first).collect();
            let (enc_bits, _) = boolean_session_keys(keys);
            let circuit = aes128_circuit()?;
            let plain = aes_ctr_clear(&circuit, &enc_bits, 1, &c_blocks)?;
            let id_bytes = plain.last().unwrap().to_bytes_msb_first();
            if id_bytes[..12].iter().any(|&b| b != 0) {
                return Err(Error::Encoding("vehicle id block out of range".into()));
            }
            let vehicle_id = u32::from_be_bytes(id_bytes[12..16].try_into().unwrap());
            if vehicle_id != bd.vehicle_id {
                return Err(Error::Validation(format!(
                    "retrieved vehicle id {vehicle_id} does not match the booking"
                )));
            }
            let at_blocks = plain[..plain.len() - 1].to_vec();
            Ok(ConsumerRetrieval {
                at: AtWire::Bits { booking_id: bd.booking_id, blocks: at_blocks },
                vehicle_id,
            })
        }
    }
}

/// Tag recomputation shared by the consumer and the cleartext oracle.
pub fn expected_tag(
    backend: Backend,
    mimc: &MimcParams,
    keys: &SessionKeys,
    bd: &BookingDetails,
) -> Vec<u8> {
    match backend {
        Backend::Mimc => {
            let blocks = bytes_to_field_blocks(mimc.field(), &bd.to_bytes());
            let (tag, _) = crate::mimc::htmac_tag(mimc, &keys.tag_enc, &keys.tag_mac, &blocks);
            tag.encode()
        }
        Backend::Aes => {
            let (_, tag_bits) = boolean_session_keys(keys);
            let circuit = aes128_circuit().expect("vendored circuit");
            let blocks: Vec<BitVector> = bd
                .to_bytes()
                .chunks(16)
                .map(BitVector::from_bytes_msb_first)
                .collect();
            cbc_mac_clear(&circuit, &tag_bits, &blocks)
                .expect("cbc-mac")
                .to_bytes_msb_first()
        }
    }
}

/// The decrypted result of step 3.
pub struct ConsumerRetrieval {
    pub at: AtWire,
    pub vehicle_id: u32,
}

/// An access token in transit to the vehicle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AtWire {
    Field(TaggedCiphertext),
    Bits { booking_id: u32, blocks: Vec<BitVector> },
}

impl AtWire {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            AtWire::Field(ct) => {
                let mut out = vec![0u8];
                out.extend_from_slice(&ct.encode());
                out
            }
            AtWire::Bits { booking_id, blocks } => {
                let mut out = vec![1u8];
                out.extend_from_slice(&booking_id.to_be_bytes());
                out.push(blocks.len() as u8);
                for b in blocks {
                    out.extend_from_slice(&b.to_bytes_msb_first());
                }
                out
            }
        }
    }

    pub fn decode(field: &FieldParams, bytes: &[u8]) -> Result<AtWire> {
        if bytes.is_empty() {
            return Err(Error::Encoding("empty token".into()));
        }
        match bytes[0] {
            0 => Ok(AtWire::Field(TaggedCiphertext::decode(field, &bytes[1..])?)),
            1 => {
                if bytes.len() < 6 {
                    return Err(Error::Encoding("truncated token".into()));
                }
                let booking_id = u32::from_be_bytes(bytes[1..5].try_into().unwrap());
                let count = bytes[5] as usize;
                if bytes.len() != 6 + 16 * count {
                    return Err(Error::Encoding("token length mismatch".into()));
                }
                let blocks = bytes[6..]
                    .chunks(16)
                    .map(BitVector::from_bytes_msb_first)
                    .collect();
                Ok(AtWire::Bits { booking_id, blocks })
            }
            other => Err(Error::Encoding(format!("unknown token mode {other}"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Owner
// ---------------------------------------------------------------------------

pub struct Owner {
    pub id: String,
    pub signing: SigningKey,
    pub verifying: VerifyingKey,
    /// Session-key material for owner-forced update and revocation.
    pub keys: KeyStation,
}

impl Owner {
    pub fn new(
        id: &str,
        mode: SignatureMode,
        field: &FieldParams,
        rng: &mut (impl RngCore + CryptoRng),
    ) -> Owner {
        let (signing, verifying) = SigningKey::generate(mode, rng);
        Owner {
            id: id.into(),
            signing,
            verifying,
            keys: KeyStation::new(field, rng),
        }
    }

    /// Step 1, owner side: sign the booking and split the message into the
    /// three servers' shares (plus the target-id share the field pipeline
    /// compares against).
    pub fn share_signed_booking(
        &self,
        backend: Backend,
        field: &FieldParams,
        m: &SignedBooking,
        rng: &mut (impl RngCore + CryptoRng),
    ) -> ([MShares; 3], [Option<RepShare>; 3]) {
        match backend {
            Backend::Mimc => {
                let blocks = m.to_field_blocks(field);
                let mut per_party: [Vec<RepShare>; 3] = Default::default();
                for b in &blocks {
                    let s = share(b, rng);
                    for i in 0..3 {
                        per_party[i].push(s[i].clone());
                    }
                }
                let id_fe = field.element_from_u64(m.bd.vehicle_id as u64);
                let id_shares = share(&id_fe, rng);
                let mut m_out = per_party.into_iter().map(MShares::Field);
                (
                    std::array::from_fn(|_| m_out.next().unwrap()),
                    id_shares.map(Some),
                )
            }
            Backend::Aes => {
                let bits = m.to_bits();
                let shares = share_bits(&bits, rng);
                let mut m_out = shares.into_iter().map(MShares::Bits);
                (std::array::from_fn(|_| m_out.next().unwrap()), [None, None, None])
            }
        }
    }

    /// Fresh 16-byte session identifier for one generation attempt.
    pub fn new_session_id(&self, rng: &mut impl RngCore) -> [u8; 16] {
        let mut id = [0u8; 16];
        rng.fill_bytes(&mut id);
        id
    }

    /// The three wire-level token-generation requests (one per server).
    /// Generation, update and revocation all use this same schema, so the
    /// operation type is indistinguishable to servers and ledger.
    pub fn at_gen_messages(
        &self,
        backend: Backend,
        session_id: [u8; 16],
        booking_id: u32,
        sealed_bundles: &[Vec<u8>; 3],
        m_shares: &[MShares; 3],
        target_shares: &[Option<RepShare>; 3],
    ) -> [super::types::ProtocolMessage; 3] {
        use base64::engine::general_purpose::STANDARD as B64;
        use base64::Engine;
        std::array::from_fn(|i| super::types::ProtocolMessage::AtGenReq {
            session_id: hex::encode(session_id),
            owner_id: self.id.clone(),
            booking_id,
            backend: backend.as_str().into(),
            enc_bundle: B64.encode(&sealed_bundles[i]),
            m_shares: B64.encode(m_shares[i].encode()),
            target_id_share: target_shares[i].as_ref().map(|t| B64.encode(t.encode())),
        })
    }
}

// ---------------------------------------------------------------------------
// Vehicle (on-board unit)
// ---------------------------------------------------------------------------

pub struct Vehicle {
    pub vehicle_id: u32,
    key: [u8; 16],
    owner_pub: VerifyingKey,
    pub signing: SigningKey,
    pub verifying: VerifyingKey,
    /// Injected clock, epoch seconds; no wall-clock reads in protocol logic.
    pub clock: u32,
    /// Highest ledger timestamp accepted per booking (supersession).
    watermarks: std::collections::HashMap<u32, u64>,
    field: FieldParams,
    mimc: MimcParams,
}

/// What the consumer presents over the short-range channel.
pub struct AccessRequest {
    pub at: AtWire,
    pub vehicle_id: u32,
    pub cert: Certificate,
    /// Publication timestamp of the token's ledger entry.
    pub ledger_ts: u64,
    /// Requested action bit (must be inside the booking's rights mask).
    pub action: u8,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RejectionReason {
    ChallengeFailed,
    WrongVehicle,
    MalformedToken,
    BadOwnerSignature,
    CertMismatch,
    OutsideWindow,
    ActionNotPermitted,
    Superseded,
    Revoked,
}

#[derive(Debug)]
pub enum AccessDecision {
    Granted(AccessConfirmation),
    Rejected(RejectionReason),
}

impl AccessDecision {
    pub fn granted(&self) -> bool {
        matches!(self, AccessDecision::Granted(_))
    }
}

impl Vehicle {
    pub fn new(
        vehicle_id: u32,
        key: [u8; 16],
        owner_pub: VerifyingKey,
        field: &FieldParams,
        rng: &mut (impl RngCore + CryptoRng),
    ) -> Vehicle {
        let (signing, verifying) = SigningKey::generate(SignatureMode::Compact512, rng);
        Vehicle {
            vehicle_id,
            key,
            owner_pub,
            signing,
            verifying,
            clock: 0,
            watermarks: std::collections::HashMap::new(),
            field: field.clone(),
            mimc: MimcParams::for_field(field),
        }
    }

    /// Opens the short-range session with a fresh challenge nonce.
    pub fn begin_access(&self, rng: &mut impl RngCore) -> [u8; 16] {
        let mut nonce = [0u8; 16];
        rng.fill_bytes(&mut nonce);
        nonce
    }

    /// Step 4: challenge verification, token decryption and the full check
    /// chain; on success the unit signs an access confirmation.
    pub fn complete_access(
        &mut self,
        nonce: &[u8; 16],
        challenge_sig: &[u8],
        req: &AccessRequest,
    ) -> AccessDecision {
        use AccessDecision::Rejected;
        use RejectionReason::*;

        let Ok(cert_key) =
            VerifyingKey::from_bytes(SignatureMode::Compact512, &req.cert.challenge_pubkey)
        else {
            return Rejected(ChallengeFailed);
        };
        if !cert_key.verify(nonce, challenge_sig) {
            return Rejected(ChallengeFailed);
        }
        if req.vehicle_id != self.vehicle_id {
            return Rejected(WrongVehicle);
        }
        let Ok(m) = self.decrypt_token(&req.at) else {
            return Rejected(MalformedToken);
        };
        if !m.verify(&self.owner_pub) {
            return Rejected(BadOwnerSignature);
        }
        let bd = &m.bd;
        if bd.vehicle_id != self.vehicle_id {
            return Rejected(WrongVehicle);
        }
        // Supersession first: any authentic token moves the watermark
        // forward, so an owner-forwarded revocation registers even though
        // the owner is not the booked certificate holder.
        let mark = self.watermarks.entry(bd.booking_id).or_insert(0);
        if req.ledger_ts < *mark {
            return Rejected(Superseded);
        }
        *mark = req.ledger_ts;
        if bd.is_revocation() {
            return Rejected(Revoked);
        }
        if bd.cert_hash != req.cert.digest() {
            return Rejected(CertMismatch);
        }
        // Window: inclusive start, exclusive end.
        if self.clock < bd.cd_start || self.clock >= bd.cd_end {
            return Rejected(OutsideWindow);
        }
        if bd.access_rights & req.action != req.action || req.action == 0 {
            return Rejected(ActionNotPermitted);
        }
        let ts_access = self.clock;
        let sigma = self
            .signing
            .sign(&AccessConfirmation::signed_payload(bd, ts_access));
        AccessDecision::Granted(AccessConfirmation { ts_access, sigma })
    }

    fn decrypt_token(&self, at: &AtWire) -> Result<SignedBooking> {
        match at {
            AtWire::Field(ct) => {
                let key = vehicle_key_field(&self.field, &self.key);
                let blocks = ctr_decrypt(&self.mimc, &key, ct);
                SignedBooking::from_bytes(&field_blocks_to_bytes(&blocks)?)
            }
            AtWire::Bits { booking_id, blocks } => {
                let circuit = aes128_circuit()?;
                let key = vehicle_key_bits(&self.key);
                let plain = aes_ctr_clear(&circuit, &key, *booking_id as u64, blocks)?;
                let mut bytes = Vec::with_capacity(plain.len() * 16);
                for b in &plain {
                    bytes.extend_from_slice(&b.to_bytes_msb_first());
                }
                SignedBooking::from_bytes(&bytes)
            }
        }
    }
}

/// The full consumer-to-vehicle handshake as one call (used by tests and
/// the end-to-end driver; a deployment would run it over NFC).
pub fn present_token(
    vehicle: &mut Vehicle,
    consumer: &Consumer,
    req: &AccessRequest,
    rng: &mut impl RngCore,
) -> AccessDecision {
    let nonce = vehicle.begin_access(rng);
    let sig = consumer.answer_challenge(&nonce);
    vehicle.complete_access(&nonce, &sig, req)
}
