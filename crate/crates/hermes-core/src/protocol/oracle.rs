//! The trusted single-process reference pipeline: identical outputs to the
//! distributed token generation, given the same keys and nonces. Every
//! distributed run is checked against it.

use crate::bits::BitVector;
use crate::boolcirc::{aes128_circuit, aes_ctr_clear, cbc_mac_clear};
use crate::field::FieldParams;
use crate::mimc::{ctr_encrypt, htmac_tag, MimcParams, SessionKeys};
use crate::Result;

use super::roles::{
    boolean_session_keys, vehicle_key_bits, vehicle_key_field, AtWire, Backend,
};
use super::types::{bytes_to_field_blocks, SignedBooking, BD_BLOCKS};

pub struct OracleInputs {
    pub backend: Backend,
    pub m: SignedBooking,
    pub keys: SessionKeys,
    pub vehicle_key: [u8; 16],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleOutput {
    /// Wire bytes of the published ciphertext, byte-identical to the
    /// distributed pipeline's output.
    pub c_uc: Vec<u8>,
    /// Wire bytes of the published authentication tag.
    pub auth_tag: Vec<u8>,
    /// The access token as the consumer would reconstruct it.
    pub at: AtWire,
}

pub fn clear_oracle(field: &FieldParams, inputs: &OracleInputs) -> Result<OracleOutput> {
    let bd = &inputs.m.bd;
    match inputs.backend {
        Backend::Mimc => {
            let mimc = MimcParams::for_field(field);
            let k_veh = vehicle_key_field(field, &inputs.vehicle_key);
            let eta = field.element_from_u64(bd.booking_id as u64);
            let m_blocks = inputs.m.to_field_blocks(field);
            let at = ctr_encrypt(&mimc, &k_veh, &eta, &m_blocks);

            let mut c_plain = at.blocks.clone();
            c_plain.push(field.element_from_u64(bd.vehicle_id as u64));
            let c_uc = ctr_encrypt(&mimc, &inputs.keys.enc, &field.one(), &c_plain);

            let bd_blocks = bytes_to_field_blocks(field, &bd.to_bytes());
            let (tag, _) = htmac_tag(&mimc, &inputs.keys.tag_enc, &inputs.keys.tag_mac, &bd_blocks);
            Ok(OracleOutput {
                c_uc: c_uc.encode(),
                auth_tag: tag.encode(),
                at: AtWire::Field(at),
            })
        }
        Backend::Aes => {
            let circuit = aes128_circuit()?;
            let key_bits = vehicle_key_bits(&inputs.vehicle_key);
            let m_bits = inputs.m.to_bits();
            let m_blocks: Vec<BitVector> =
                (0..inputs.m.num_blocks()).map(|j| m_bits.slice(128 * j..128 * (j + 1))).collect();
            let at_blocks = aes_ctr_clear(&circuit, &key_bits, bd.booking_id as u64, &m_blocks)?;

            let (enc_bits, tag_bits) = boolean_session_keys(&inputs.keys);
            let mut id_block_bytes = [0u8; 16];
            id_block_bytes[12..16].copy_from_slice(&bd.vehicle_id.to_be_bytes());
            let mut c_plain = at_blocks.clone();
            c_plain.push(BitVector::from_bytes_msb_first(&id_block_bytes));
            let c_blocks = aes_ctr_clear(&circuit, &enc_bits, 1, &c_plain)?;
            let mut c_uc = Vec::with_capacity(c_blocks.len() * 16);
            for b in &c_blocks {
                c_uc.extend_from_slice(&b.to_bytes_msb_first());
            }

            let bd_blocks: Vec<BitVector> =
                (0..BD_BLOCKS).map(|j| m_bits.slice(128 * j..128 * (j + 1))).collect();
            let tag = cbc_mac_clear(&circuit, &tag_bits, &bd_blocks)?;
            Ok(OracleOutput {
                c_uc,
                auth_tag: tag.to_bytes_msb_first(),
                at: AtWire::Bits { booking_id: bd.booking_id, blocks: at_blocks },
            })
        }
    }
}
