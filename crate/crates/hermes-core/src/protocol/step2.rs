//! The distributed token-generation pipeline run by the three servers.
//!
//! Arithmetic backend, with every stage batched so the round count is
//! independent of the number of registered vehicles:
//!
//! 1. masked equality of the target id against all `n` row ids (9 rounds);
//! 2. oblivious selection of the matching vehicle key (1 round);
//! 3. one batch of MiMC chains: the vehicle-key tweak `E_[Kveh](booking)`
//!    together with all consumer-layer keystream chains, whose tweaks
//!    arrive precomputed inside the key bundle (r rounds);
//! 4. opening of the tag-layer ciphertext (1 round);
//! 5. a second chain batch: the token keystream plus the final MAC call
//!    (r rounds);
//! 6. opening of the published ciphertext and tag (1 round).
//!
//! The binary backend runs the same dataflow over the AES circuit:
//! equality tree and key selection (159 AND gates per row), parallel
//! AES-CTR for token and consumer layers, and a sequential CBC-MAC.

use std::time::Instant;

use crate::boolcirc::{
    aes128_circuit, aes_ctr_shared, cbc_mac_shared, equality_select_binary,
};
use crate::engine::Session;
use crate::eqz::{eqz_pair_vec, select_row, EqzConfig};
use crate::field::{FieldElement, FieldParams};
use crate::mimc::{run_chains, tag_hash, MimcChain, MimcParams, TaggedCiphertext};
use crate::share::{BitShareVec, PartyId, RepShare};
use crate::tape::PreprocessingTape;
use crate::transport::{SessionChannel, TranscriptStats};
use crate::{Error, Result};

use super::audit::AuditRecord;
use super::roles::Backend;
use super::types::BD_BLOCKS;

/// One party's decrypted key-share bundle (the content of its sealed
/// `C^{S_i}`). The consumer precomputes the two session-layer tweaks and
/// ships their shares with the keys, which keeps those chains off the
/// online critical path.
#[derive(Clone, Debug)]
pub enum KeyBundleShare {
    Field {
        k_enc: RepShare,
        k_tag_enc: RepShare,
        k_tag_mac: RepShare,
        tweak_c: RepShare,
        tweak_tag: RepShare,
    },
    Bits {
        k_enc: BitShareVec,
        k_tag: BitShareVec,
    },
}

impl KeyBundleShare {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            KeyBundleShare::Field { k_enc, k_tag_enc, k_tag_mac, tweak_c, tweak_tag } => {
                let mut out = vec![0u8];
                for s in [k_enc, k_tag_enc, k_tag_mac, tweak_c, tweak_tag] {
                    out.extend_from_slice(&s.encode());
                }
                out
            }
            KeyBundleShare::Bits { k_enc, k_tag } => {
                let mut out = vec![1u8];
                out.extend_from_slice(&k_enc.encode());
                out.extend_from_slice(&k_tag.encode());
                out
            }
        }
    }

    pub fn decode(party: PartyId, field: &FieldParams, bytes: &[u8]) -> Result<KeyBundleShare> {
        if bytes.is_empty() {
            return Err(Error::Encoding("empty key bundle".into()));
        }
        match bytes[0] {
            0 => {
                let w = 2 * field.encoded_len();
                if bytes.len() != 1 + 5 * w {
                    return Err(Error::Encoding("field key bundle length mismatch".into()));
                }
                let part = |i: usize| RepShare::decode(party, field, &bytes[1 + i * w..1 + (i + 1) * w]);
                Ok(KeyBundleShare::Field {
                    k_enc: part(0)?,
                    k_tag_enc: part(1)?,
                    k_tag_mac: part(2)?,
                    tweak_c: part(3)?,
                    tweak_tag: part(4)?,
                })
            }
            1 => {
                let half = 4 + 2 * 8; // 128-bit vector: u32 length + 2 words
                let expect = 1 + 2 * (2 * half);
                if bytes.len() != expect {
                    return Err(Error::Encoding("bit key bundle length mismatch".into()));
                }
                Ok(KeyBundleShare::Bits {
                    k_enc: BitShareVec::decode(party, &bytes[1..1 + 2 * half])?,
                    k_tag: BitShareVec::decode(party, &bytes[1 + 2 * half..])?,
                })
            }
            other => Err(Error::Encoding(format!("unknown bundle mode {other}"))),
        }
    }

    pub fn backend(&self) -> Backend {
        match self {
            KeyBundleShare::Field { .. } => Backend::Mimc,
            KeyBundleShare::Bits { .. } => Backend::Aes,
        }
    }
}

/// One party's shares of the signed-booking blocks.
#[derive(Clone, Debug)]
pub enum MShares {
    /// Ten field-element block shares.
    Field(Vec<RepShare>),
    /// The message as a shared bit vector (1280 bits in benchmark mode).
    Bits(BitShareVec),
}

impl MShares {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            MShares::Field(blocks) => {
                let mut out = vec![0u8, blocks.len() as u8];
                for b in blocks {
                    out.extend_from_slice(&b.encode());
                }
                out
            }
            MShares::Bits(bits) => {
                let mut out = vec![1u8];
                out.extend_from_slice(&bits.encode());
                out
            }
        }
    }

    pub fn decode(party: PartyId, field: &FieldParams, bytes: &[u8]) -> Result<MShares> {
        if bytes.is_empty() {
            return Err(Error::Encoding("empty message shares".into()));
        }
        match bytes[0] {
            0 => {
                if bytes.len() < 2 {
                    return Err(Error::Encoding("truncated message shares".into()));
                }
                let count = bytes[1] as usize;
                let w = 2 * field.encoded_len();
                if bytes.len() != 2 + count * w {
                    return Err(Error::Encoding("message share length mismatch".into()));
                }
                let blocks = (0..count)
                    .map(|i| RepShare::decode(party, field, &bytes[2 + i * w..2 + (i + 1) * w]))
                    .collect::<Result<Vec<_>>>()?;
                Ok(MShares::Field(blocks))
            }
            1 => Ok(MShares::Bits(BitShareVec::decode(party, &bytes[1..])?)),
            other => Err(Error::Encoding(format!("unknown m-share mode {other}"))),
        }
    }
}

/// One database row as this party's shares.
#[derive(Clone, Debug)]
pub enum DbRowShare {
    Field { id: RepShare, key: RepShare },
    Bits { id: BitShareVec, key: BitShareVec },
}

/// Everything one server contributes to a token-generation session.
pub struct Step2Inputs {
    pub session_id: [u8; 16],
    pub booking_id: u32,
    pub owner_id: String,
    pub bundle: KeyBundleShare,
    pub m_shares: MShares,
    /// Field backend only: the owner-provided share of the target id.
    pub target_id_share: Option<RepShare>,
    pub rows: Vec<DbRowShare>,
    pub eqz: EqzConfig,
}

/// The public session outcome plus this party's audit material.
pub struct Step2Output {
    /// Wire bytes of the published ciphertext `C^{u_c}`.
    pub c_uc: Vec<u8>,
    /// Wire bytes of the published authentication tag.
    pub auth_tag: Vec<u8>,
    pub stats: TranscriptStats,
    pub audit: AuditRecord,
}

/// Runs the three-party token generation; all parties return the same
/// public outputs.
pub fn step2_generate<C: SessionChannel>(
    chan: C,
    tape: &mut PreprocessingTape,
    inputs: &Step2Inputs,
) -> Result<Step2Output> {
    let start = Instant::now();
    let mut session = Session::new(chan, tape);

    // Backend and shape negotiation; a mismatch is a configuration error.
    let hello = format!(
        "v1:{}:{}:{}",
        match inputs.bundle.backend() {
            Backend::Mimc => "mimc",
            Backend::Aes => "aes",
        },
        inputs.rows.len(),
        inputs.booking_id,
    );
    let peers = session.hello(hello.as_bytes())?;
    for p in peers {
        if p != hello.as_bytes() {
            return Err(Error::SessionAbort(format!(
                "backend negotiation mismatch: {} vs {}",
                hello,
                String::from_utf8_lossy(&p)
            )));
        }
    }

    let (c_uc, auth_tag) = match &inputs.bundle {
        KeyBundleShare::Field { .. } => run_field_pipeline(&mut session, inputs)?,
        KeyBundleShare::Bits { .. } => run_bits_pipeline(&mut session, inputs)?,
    };

    let mut stats = session.stats_snapshot();
    stats.wall_time = start.elapsed();
    let audit = AuditRecord::new(inputs.session_id, session.party(), &inputs.m_shares);
    Ok(Step2Output { c_uc, auth_tag, stats, audit })
}

fn run_field_pipeline<C: SessionChannel>(
    session: &mut Session<'_, C>,
    inputs: &Step2Inputs,
) -> Result<(Vec<u8>, Vec<u8>)> {
    let field = session.field().clone();
    let mimc = MimcParams::for_field(&field);
    let KeyBundleShare::Field { k_enc, k_tag_enc, k_tag_mac, tweak_c, tweak_tag } =
        &inputs.bundle
    else {
        unreachable!()
    };
    let MShares::Field(m_blocks) = &inputs.m_shares else {
        return Err(Error::Parameter("field backend needs field message shares".into()));
    };
    let target = inputs
        .target_id_share
        .as_ref()
        .ok_or_else(|| Error::Parameter("field backend needs a target id share".into()))?;
    if m_blocks.len() != BD_BLOCKS + 4 {
        return Err(Error::Parameter(format!(
            "benchmark mode expects 10 message blocks, got {}",
            m_blocks.len()
        )));
    }
    let mut row_ids = Vec::with_capacity(inputs.rows.len());
    let mut row_keys = Vec::with_capacity(inputs.rows.len());
    for r in &inputs.rows {
        let DbRowShare::Field { id, key } = r else {
            return Err(Error::Parameter("field backend needs field db rows".into()));
        };
        row_ids.push(id.clone());
        row_keys.push(key.clone());
    }

    // Equality against every row, batched: 2 + ceil(log2(2k+s)) rounds.
    let targets = vec![target.clone(); row_ids.len()];
    let eq_bits = eqz_pair_vec(session, &targets, &row_ids, &inputs.eqz)?;

    // Oblivious vehicle-key selection: one round.
    let rows: Vec<Vec<RepShare>> = row_keys.into_iter().map(|k| vec![k]).collect();
    let k_veh = select_row(session, &eq_bits, &rows)?.remove(0);

    // Chain batch 1 (r rounds): the vehicle-key tweak plus both consumer
    // keystream layers, whose tweaks came with the bundle.
    let eta_at = field.element_from_u64(inputs.booking_id as u64);
    let mut chains = Vec::with_capacity(1 + 11 + BD_BLOCKS);
    chains.push(MimcChain::new(&mimc, k_veh.clone(), RepShare::constant(session.party(), &eta_at)));
    let c_blocks_in = m_blocks.len() + 1; // token blocks plus the id block
    for j in 0..c_blocks_in {
        let ctr = tweak_c.add_constant(&field.element_from_u64(j as u64 + 1));
        chains.push(MimcChain::new(&mimc, k_enc.clone(), ctr));
    }
    for j in 0..BD_BLOCKS {
        let ctr = tweak_tag.add_constant(&field.element_from_u64(j as u64 + 1));
        chains.push(MimcChain::new(&mimc, k_tag_enc.clone(), ctr));
    }
    run_chains(session, &mut chains)?;
    let tweak_at = chains[0].output();
    let c_keystream: Vec<RepShare> =
        chains[1..1 + c_blocks_in].iter().map(|c| c.output()).collect();
    let tag_ct_shares: Vec<RepShare> = m_blocks[..BD_BLOCKS]
        .iter()
        .zip(&chains[1 + c_blocks_in..])
        .map(|(m, ks)| m.add(&ks.output()))
        .collect();

    // Open the tag-layer ciphertext and hash it publicly.
    let tag_ct_blocks = session.open_vec(&tag_ct_shares)?;
    let tag_ct = TaggedCiphertext { nonce: field.one(), blocks: tag_ct_blocks };
    let h = tag_hash(&field, &tag_ct);

    // Chain batch 2 (r rounds): token keystream under the selected vehicle
    // key, and the final MAC call on the public digest.
    let at_shares = ctr_and_mac_batch(
        session,
        &mimc,
        &k_veh,
        &tweak_at,
        m_blocks,
        k_tag_mac,
        &h,
    )?;
    let (at_blocks_shares, tag_share) = at_shares;

    // Consumer layer: ct_j = (AT_j or target id) + keystream_j, locally.
    let mut c_plain: Vec<RepShare> = at_blocks_shares;
    c_plain.push(target.clone());
    let c_shares: Vec<RepShare> = c_plain
        .iter()
        .zip(&c_keystream)
        .map(|(m, ks)| m.add(ks))
        .collect();

    // Final opening: the published ciphertext and tag together.
    let mut to_open = c_shares;
    to_open.push(tag_share);
    let mut opened = session.open_vec(&to_open)?;
    let tag = opened.pop().unwrap();
    let c_uc = TaggedCiphertext { nonce: field.one(), blocks: opened };
    Ok((c_uc.encode(), tag.encode()))
}

/// Second chain batch of the field pipeline: token keystream chains and the
/// MAC chain run in the same rounds.
fn ctr_and_mac_batch<C: SessionChannel>(
    session: &mut Session<'_, C>,
    mimc: &MimcParams,
    k_veh: &RepShare,
    tweak_at: &RepShare,
    m_blocks: &[RepShare],
    k_tag_mac: &RepShare,
    h: &FieldElement,
) -> Result<(Vec<RepShare>, RepShare)> {
    let field = mimc.field().clone();
    let mut chains = Vec::with_capacity(m_blocks.len() + 1);
    for j in 0..m_blocks.len() {
        let ctr = tweak_at.add_constant(&field.element_from_u64(j as u64 + 1));
        chains.push(MimcChain::new(mimc, k_veh.clone(), ctr));
    }
    chains.push(MimcChain::new(
        mimc,
        k_tag_mac.clone(),
        RepShare::constant(session.party(), h),
    ));
    run_chains(session, &mut chains)?;
    let tag = chains.pop().unwrap().output();
    let at_blocks = m_blocks
        .iter()
        .zip(&chains)
        .map(|(m, ks)| m.add(&ks.output()))
        .collect();
    Ok((at_blocks, tag))
}

fn run_bits_pipeline<C: SessionChannel>(
    session: &mut Session<'_, C>,
    inputs: &Step2Inputs,
) -> Result<(Vec<u8>, Vec<u8>)> {
    let circuit = aes128_circuit()?;
    let KeyBundleShare::Bits { k_enc, k_tag } = &inputs.bundle else { unreachable!() };
    let MShares::Bits(m_bits) = &inputs.m_shares else {
        return Err(Error::Parameter("binary backend needs bit message shares".into()));
    };
    if m_bits.len() != 1280 {
        return Err(Error::Parameter(format!(
            "benchmark mode expects 1280 message bits, got {}",
            m_bits.len()
        )));
    }
    let mut rows = Vec::with_capacity(inputs.rows.len());
    for r in &inputs.rows {
        let DbRowShare::Bits { id, key } = r else {
            return Err(Error::Parameter("binary backend needs bit db rows".into()));
        };
        rows.push((id.clone(), key.clone()));
    }
    // The target id sits at a fixed bit offset inside the booking details:
    // four hash blocks, then the 32-bit vehicle id.
    let target = m_bits.slice(512..544);
    let k_veh = equality_select_binary(session, &target, &rows)?;

    // Token layer: parallel AES-CTR under the selected key.
    let m_blocks: Vec<BitShareVec> = (0..10).map(|j| m_bits.slice(128 * j..128 * (j + 1))).collect();
    let at_blocks = aes_ctr_shared(session, &circuit, &k_veh, inputs.booking_id as u64, &m_blocks)?;

    // Consumer layer: token blocks plus the id block (id in the low bits).
    let mut id_block = BitShareVec::zeros(session.party(), 96);
    id_block = id_block.concat(&target);
    let mut c_plain = at_blocks;
    c_plain.push(id_block);
    let c_blocks = aes_ctr_shared(session, &circuit, k_enc, 1, &c_plain)?;

    // Authentication tag: CBC-MAC straight over the booking-details blocks.
    let bd_blocks: Vec<BitShareVec> =
        (0..BD_BLOCKS).map(|j| m_bits.slice(128 * j..128 * (j + 1))).collect();
    let tag = cbc_mac_shared(session, &circuit, k_tag, &bd_blocks)?;

    // One opening for everything public.
    let mut all = BitShareVec::zeros(session.party(), 0);
    for b in &c_blocks {
        all = all.concat(b);
    }
    all = all.concat(&tag);
    let opened = session.open_bits(&all)?;
    let mut c_uc = Vec::with_capacity(11 * 16);
    for j in 0..11 {
        c_uc.extend_from_slice(&opened.slice(128 * j..128 * (j + 1)).to_bytes_msb_first());
    }
    let tag_bytes = opened.slice(11 * 128..12 * 128).to_bytes_msb_first();
    Ok((c_uc, tag_bytes))
}
