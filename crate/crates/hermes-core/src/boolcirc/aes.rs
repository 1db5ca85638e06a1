//! AES-128 as a Bristol-fashion circuit, plus the CTR and CBC-MAC
//! constructions the binary pipeline runs over it.
//!
//! The circuit is built from the 32-AND Boyar-Peralta S-box (200 S-box
//! instances: 160 in the rounds, 40 in the key schedule = 6400 AND gates)
//! and is vendored under `data/aes_128.bristol` with its content hash
//! pinned; the loader re-checks both the hash and the AND count.
//!
//! Bit conventions: a 16-byte block maps to 128 wires in byte order, most
//! significant bit of each byte first. Circuit inputs are two groups
//! (key, block); the output group is the ciphertext block.

use crate::bits::BitVector;
use crate::engine::Session;
use crate::share::BitShareVec;
use crate::transport::SessionChannel;
use crate::{Error, Result};

use super::{parse_bristol, BristolCircuit, Gate, GateKind};

/// AND gates in one AES-128 call.
pub const AES_AND_COUNT: usize = 6400;

/// SHA3-256 of the vendored circuit file.
pub const AES128_BRISTOL_SHA3: &str =
    "a11617581a782a595e1111b2af45cba49978526ecb6487fb6613e2ef12c98265";

static AES128_BRISTOL: &str = include_str!("../../data/aes_128.bristol");

/// Loads and validates the vendored AES-128 circuit.
pub fn aes128_circuit() -> Result<BristolCircuit> {
    use sha3::{Digest, Sha3_256};
    let hash = hex::encode(Sha3_256::digest(AES128_BRISTOL.as_bytes()));
    if hash != AES128_BRISTOL_SHA3 {
        return Err(Error::CircuitEval(format!(
            "vendored AES circuit hash mismatch: {hash}"
        )));
    }
    let circuit = parse_bristol(AES128_BRISTOL)?;
    if circuit.and_count != AES_AND_COUNT {
        return Err(Error::CircuitEval(format!(
            "AES circuit must have {AES_AND_COUNT} AND gates, found {}",
            circuit.and_count
        )));
    }
    if circuit.input_widths != [128, 128] || circuit.output_widths != [128] {
        return Err(Error::CircuitEval("AES circuit has wrong i/o shape".into()));
    }
    Ok(circuit)
}

// ---------------------------------------------------------------------------
// Circuit generation
// ---------------------------------------------------------------------------

struct Builder {
    gates: Vec<Gate>,
    next_wire: usize,
}

impl Builder {
    fn new(num_inputs: usize) -> Builder {
        Builder { gates: Vec::new(), next_wire: num_inputs }
    }

    fn emit(&mut self, kind: GateKind, inputs: Vec<usize>) -> usize {
        let output = self.next_wire;
        self.next_wire += 1;
        self.gates.push(Gate { kind, inputs, output });
        output
    }

    fn xor(&mut self, a: usize, b: usize) -> usize {
        self.emit(GateKind::Xor, vec![a, b])
    }

    fn and(&mut self, a: usize, b: usize) -> usize {
        self.emit(GateKind::And, vec![a, b])
    }

    fn inv(&mut self, a: usize) -> usize {
        self.emit(GateKind::Inv, vec![a])
    }
}

type Byte = [usize; 8]; // wire per bit, index 0 = most significant

fn xor_byte(b: &mut Builder, x: &Byte, y: &Byte) -> Byte {
    std::array::from_fn(|i| b.xor(x[i], y[i]))
}

/// Multiplication by 2 in GF(2^8) mod x^8+x^4+x^3+x+1. With value bits
/// v7..v0 (array index i holds v_{7-i}): r0=v7, r1=v0^v7, r2=v1, r3=v2^v7,
/// r4=v3^v7, r5=v4, r6=v5, r7=v6.
fn xtime(b: &mut Builder, x: &Byte) -> Byte {
    let v = |bit: usize| x[7 - bit]; // value-bit indexing
    let r0 = v(7);
    let r1 = b.xor(v(0), v(7));
    let r2 = v(1);
    let r3 = b.xor(v(2), v(7));
    let r4 = b.xor(v(3), v(7));
    let r5 = v(4);
    let r6 = v(5);
    let r7 = v(6);
    let rv = [r0, r1, r2, r3, r4, r5, r6, r7];
    std::array::from_fn(|i| rv[7 - i])
}

/// The 32-AND Boyar-Peralta AES S-box. Input and output bytes are wire
/// arrays with index 0 = most significant bit.
fn sbox(b: &mut Builder, u: &Byte) -> Byte {
    let [x0, x1, x2, x3, x4, x5, x6, x7] = *u;
    let y14 = b.xor(x3, x5);
    let y13 = b.xor(x0, x6);
    let y9 = b.xor(x0, x3);
    let y8 = b.xor(x0, x5);
    let t0 = b.xor(x1, x2);
    let y1 = b.xor(t0, x7);
    let y4 = b.xor(y1, x3);
    let y12 = b.xor(y13, y14);
    let y2 = b.xor(y1, x0);
    let y5 = b.xor(y1, x6);
    let y3 = b.xor(y5, y8);
    let t1 = b.xor(x4, y12);
    let y15 = b.xor(t1, x5);
    let y20 = b.xor(t1, x1);
    let y6 = b.xor(y15, x7);
    let y10 = b.xor(y15, t0);
    let y11 = b.xor(y20, y9);
    let y7 = b.xor(x7, y11);
    let y17 = b.xor(y10, y11);
    let y19 = b.xor(y10, y8);
    let y16 = b.xor(t0, y11);
    let y21 = b.xor(y13, y16);
    let y18 = b.xor(x0, y16);

    let t2 = b.and(y12, y15);
    let t3 = b.and(y3, y6);
    let t4 = b.xor(t3, t2);
    let t5 = b.and(y4, x7);
    let t6 = b.xor(t5, t2);
    let t7 = b.and(y13, y16);
    let t8 = b.and(y5, y1);
    let t9 = b.xor(t8, t7);
    let t10 = b.and(y2, y7);
    let t11 = b.xor(t10, t7);
    let t12 = b.and(y9, y11);
    let t13 = b.and(y14, y17);
    let t14 = b.xor(t13, t12);
    let t15 = b.and(y8, y10);
    let t16 = b.xor(t15, t12);
    let t17 = b.xor(t4, t14);
    let t18 = b.xor(t6, t16);
    let t19 = b.xor(t9, t14);
    let t20 = b.xor(t11, t16);
    let t21 = b.xor(t17, y20);
    let t22 = b.xor(t18, y19);
    let t23 = b.xor(t19, y21);
    let t24 = b.xor(t20, y18);
    let t25 = b.xor(t21, t22);
    let t26 = b.and(t21, t23);
    let t27 = b.xor(t24, t26);
    let t28 = b.and(t25, t27);
    let t29 = b.xor(t28, t22);
    let t30 = b.xor(t23, t24);
    let t31 = b.xor(t22, t26);
    let t32 = b.and(t31, t30);
    let t33 = b.xor(t32, t24);
    let t34 = b.xor(t23, t33);
    let t35 = b.xor(t27, t33);
    let t36 = b.and(t24, t35);
    let t37 = b.xor(t36, t34);
    let t38 = b.xor(t27, t36);
    let t39 = b.and(t29, t38);
    let t40 = b.xor(t25, t39);
    let t41 = b.xor(t40, t37);
    let t42 = b.xor(t29, t33);
    let t43 = b.xor(t29, t40);
    let t44 = b.xor(t33, t37);
    let t45 = b.xor(t42, t41);

    let z0 = b.and(t44, y15);
    let z1 = b.and(t37, y6);
    let z2 = b.and(t33, x7);
    let z3 = b.and(t43, y16);
    let z4 = b.and(t40, y1);
    let z5 = b.and(t29, y7);
    let z6 = b.and(t42, y11);
    let z7 = b.and(t45, y17);
    let z8 = b.and(t41, y10);
    let z9 = b.and(t44, y12);
    let z10 = b.and(t37, y3);
    let z11 = b.and(t33, y4);
    let z12 = b.and(t43, y13);
    let z13 = b.and(t40, y5);
    let z14 = b.and(t29, y2);
    let z15 = b.and(t42, y9);
    let z16 = b.and(t45, y14);
    let z17 = b.and(t41, y8);

    let t46 = b.xor(z15, z16);
    let t47 = b.xor(z10, z11);
    let t48 = b.xor(z5, z13);
    let t49 = b.xor(z9, z10);
    let t50 = b.xor(z2, z12);
    let t51 = b.xor(z2, z5);
    let t52 = b.xor(z7, z8);
    let t53 = b.xor(z0, z3);
    let t54 = b.xor(z6, z7);
    let t55 = b.xor(z16, z17);
    let t56 = b.xor(z12, t48);
    let t57 = b.xor(t50, t53);
    let t58 = b.xor(z4, t46);
    let t59 = b.xor(z3, t54);
    let t60 = b.xor(t46, t57);
    let t61 = b.xor(z14, t57);
    let t62 = b.xor(t52, t58);
    let t63 = b.xor(t49, t58);
    let t64 = b.xor(z4, t59);
    let t65 = b.xor(t61, t62);
    let t66 = b.xor(z1, t63);
    let t67 = b.xor(t64, t65);

    let s7x = b.xor(t48, t60);
    let s7 = b.inv(s7x);
    let s6x = b.xor(t56, t62);
    let s6 = b.inv(s6x);
    let s5 = b.xor(t47, t65);
    let s4 = b.xor(t51, t66);
    let s3 = b.xor(t53, t66);
    let s2x = b.xor(t55, t67);
    let s2 = b.inv(s2x);
    let s1x = b.xor(t64, s3);
    let s1 = b.inv(s1x);
    let s0 = b.xor(t59, t63);
    [s0, s1, s2, s3, s4, s5, s6, s7]
}

const RCON: [u8; 10] = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1b, 0x36];

fn xor_const(b: &mut Builder, x: &Byte, c: u8) -> Byte {
    std::array::from_fn(|i| {
        if (c >> (7 - i)) & 1 == 1 {
            b.inv(x[i])
        } else {
            x[i]
        }
    })
}

/// Builds the AES-128 circuit and renders it as Bristol-fashion text.
pub fn generate_aes128_bristol() -> String {
    let mut b = Builder::new(256);
    let key_bytes: Vec<Byte> =
        (0..16).map(|i| std::array::from_fn(|j| 8 * i + j)).collect();
    let pt_bytes: Vec<Byte> =
        (0..16).map(|i| std::array::from_fn(|j| 128 + 8 * i + j)).collect();

    // Key schedule: 44 words of 4 bytes.
    let mut words: Vec<[Byte; 4]> = Vec::with_capacity(44);
    for i in 0..4 {
        words.push(std::array::from_fn(|j| key_bytes[4 * i + j]));
    }
    for i in 4..44 {
        let prev = words[i - 1];
        let temp = if i % 4 == 0 {
            // RotWord then SubWord then Rcon.
            let rotated = [prev[1], prev[2], prev[3], prev[0]];
            let mut sub: [Byte; 4] = std::array::from_fn(|j| sbox(&mut b, &rotated[j]));
            sub[0] = xor_const(&mut b, &sub[0], RCON[i / 4 - 1]);
            sub
        } else {
            prev
        };
        let four_back = words[i - 4];
        words.push(std::array::from_fn(|j| xor_byte(&mut b, &four_back[j], &temp[j])));
    }

    // State bytes in input order: state[row][col] = bytes[4*col + row].
    let mut state: Vec<Byte> = pt_bytes;
    let add_round_key = |b: &mut Builder, state: &[Byte], round: usize, words: &[[Byte; 4]]| {
        (0..16)
            .map(|i| xor_byte(b, &state[i], &words[4 * round + i / 4][i % 4]))
            .collect::<Vec<Byte>>()
    };
    state = add_round_key(&mut b, &state, 0, &words);

    for round in 1..=10 {
        // SubBytes.
        state = state.iter().map(|byte| sbox(&mut b, byte)).collect();
        // ShiftRows: row r rotates left by r.
        let shifted: Vec<Byte> =
            (0..16).map(|i| state[4 * ((i / 4 + i % 4) % 4) + i % 4]).collect();
        state = shifted;
        // MixColumns (skipped in the final round).
        if round < 10 {
            let mut mixed = Vec::with_capacity(16);
            for c in 0..4 {
                let a: Vec<Byte> = (0..4).map(|r| state[4 * c + r]).collect();
                let x: Vec<Byte> = a.iter().map(|byte| xtime(&mut b, byte)).collect();
                for r in 0..4 {
                    // out_r = 2*a_r + 3*a_{r+1} + a_{r+2} + a_{r+3}
                    let t1 = xor_byte(&mut b, &x[r], &x[(r + 1) % 4]);
                    let t2 = xor_byte(&mut b, &t1, &a[(r + 1) % 4]);
                    let t3 = xor_byte(&mut b, &t2, &a[(r + 2) % 4]);
                    mixed.push(xor_byte(&mut b, &t3, &a[(r + 3) % 4]));
                }
            }
            state = mixed;
        }
        state = add_round_key(&mut b, &state, round, &words);
    }

    // Renumber so the ciphertext occupies the last 128 wires.
    let output_wires: Vec<usize> = state.iter().flat_map(|byte| byte.iter().copied()).collect();
    let num_wires = 256 + b.gates.len();
    let mut remap: Vec<usize> = (0..num_wires).collect();
    let output_base = num_wires - 128;
    let mut is_output = vec![false; num_wires];
    for (slot, &w) in output_wires.iter().enumerate() {
        remap[w] = output_base + slot;
        is_output[w] = true;
    }
    let mut next = 256;
    for g in &b.gates {
        if !is_output[g.output] {
            remap[g.output] = next;
            next += 1;
        }
    }
    debug_assert_eq!(next, output_base);

    let mut text = String::new();
    text.push_str(&format!("{} {}\n", b.gates.len(), num_wires));
    text.push_str("2 128 128\n1 128\n\n");
    for g in &b.gates {
        match g.kind {
            GateKind::Xor => text.push_str(&format!(
                "2 1 {} {} {} XOR\n",
                remap[g.inputs[0]], remap[g.inputs[1]], remap[g.output]
            )),
            GateKind::And => text.push_str(&format!(
                "2 1 {} {} {} AND\n",
                remap[g.inputs[0]], remap[g.inputs[1]], remap[g.output]
            )),
            GateKind::Inv => text.push_str(&format!(
                "1 1 {} {} INV\n",
                remap[g.inputs[0]], remap[g.output]
            )),
            _ => unreachable!("generator emits XOR/AND/INV only"),
        }
    }
    text
}

// ---------------------------------------------------------------------------
// Constructions over the circuit
// ---------------------------------------------------------------------------

/// Public CTR block for nonce `eta` and block index `j` (1-based), as a
/// 128-bit big-endian value `eta * 2^64 + j`.
pub fn ctr_block(eta: u64, j: u64) -> BitVector {
    let v = ((eta as u128) << 64) | j as u128;
    BitVector::from_bytes_msb_first(&v.to_be_bytes())
}

/// AES-CTR keystream encryption over shares: all blocks run in parallel, so
/// the whole call costs one circuit depth. Counter blocks are public.
pub fn aes_ctr_shared<C: SessionChannel>(
    session: &mut Session<'_, C>,
    circuit: &BristolCircuit,
    key: &BitShareVec,
    eta: u64,
    blocks: &[BitShareVec],
) -> Result<Vec<BitShareVec>> {
    let party = session.party();
    let instances: Vec<Vec<BitShareVec>> = (0..blocks.len())
        .map(|j| {
            vec![
                key.clone(),
                BitShareVec::constant(party, &ctr_block(eta, j as u64 + 1)),
            ]
        })
        .collect();
    let keystreams = circuit.eval_shared_many(session, &instances)?;
    Ok(blocks
        .iter()
        .zip(keystreams)
        .map(|(m, ks)| m.xor(&ks[0]))
        .collect())
}

/// Cleartext AES-CTR (consumer and vehicle side; also decryption).
pub fn aes_ctr_clear(
    circuit: &BristolCircuit,
    key: &BitVector,
    eta: u64,
    blocks: &[BitVector],
) -> Result<Vec<BitVector>> {
    blocks
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let ks = circuit.eval_clear(&[key.clone(), ctr_block(eta, j as u64 + 1)])?;
            Ok(m.xor(&ks[0]))
        })
        .collect()
}

/// CBC-MAC over shares: zero IV, sequential block chaining, tag is the last
/// cipher state. Costs `blocks.len()` circuit depths.
pub fn cbc_mac_shared<C: SessionChannel>(
    session: &mut Session<'_, C>,
    circuit: &BristolCircuit,
    key: &BitShareVec,
    blocks: &[BitShareVec],
) -> Result<BitShareVec> {
    let mut state = BitShareVec::zeros(session.party(), 128);
    for m in blocks {
        let input = state.xor(m);
        let out = circuit.eval_shared_many(session, &[vec![key.clone(), input]])?;
        state = out.into_iter().next().unwrap().remove(0);
    }
    Ok(state)
}

/// Cleartext CBC-MAC.
pub fn cbc_mac_clear(
    circuit: &BristolCircuit,
    key: &BitVector,
    blocks: &[BitVector],
) -> Result<BitVector> {
    let mut state = BitVector::zeros(128);
    for m in blocks {
        state = circuit.eval_clear(&[key.clone(), state.xor(m)])?.remove(0);
    }
    Ok(state)
}

/// Binary equality-and-select: compares a shared 32-bit target id against
/// each row's shared id (32 XNORs free, a 31-AND tree) and selects the
/// matching row's 128-bit key (128 ANDs per row), XOR-combining rows.
/// Consumes exactly `159 * n` AND gates.
pub fn equality_select_binary<C: SessionChannel>(
    session: &mut Session<'_, C>,
    target_id: &BitShareVec,
    rows: &[(BitShareVec, BitShareVec)],
) -> Result<BitShareVec> {
    if target_id.len() != 32 {
        return Err(Error::Parameter("target id must be 32 bits".into()));
    }
    for (id, key) in rows {
        if id.len() != 32 || key.len() != 128 {
            return Err(Error::Parameter("rows must be 32-bit id + 128-bit key".into()));
        }
    }
    // Per-row XNOR of target and id (local).
    let mut factors: Vec<BitShareVec> = rows
        .iter()
        .map(|(id, _)| target_id.xor(id).not())
        .collect();
    // 31-AND tree per row, batched across rows: widths 32 -> 16 -> ... -> 1.
    while factors[0].len() > 1 {
        let half = factors[0].len() / 2;
        let party = session.party();
        let total = half * factors.len();
        let mut lhs = BitShareVec::zeros(party, total);
        let mut rhs = BitShareVec::zeros(party, total);
        for (row, f) in factors.iter().enumerate() {
            for i in 0..half {
                let l = (f.lo.get(2 * i), f.hi.get(2 * i));
                let r = (f.lo.get(2 * i + 1), f.hi.get(2 * i + 1));
                lhs.lo.set(row * half + i, l.0);
                lhs.hi.set(row * half + i, l.1);
                rhs.lo.set(row * half + i, r.0);
                rhs.hi.set(row * half + i, r.1);
            }
        }
        let products = session.and_bits(&lhs, &rhs)?;
        factors = (0..factors.len())
            .map(|row| products.slice(row * half..(row + 1) * half))
            .collect();
    }
    // Selection layer: key_bit AND match_bit, 128 per row, one round.
    let party = session.party();
    let total = 128 * rows.len();
    let mut lhs = BitShareVec::zeros(party, total);
    let mut rhs = BitShareVec::zeros(party, total);
    for (row, (_, key)) in rows.iter().enumerate() {
        let m = (factors[row].lo.get(0), factors[row].hi.get(0));
        for i in 0..128 {
            lhs.lo.set(row * 128 + i, m.0);
            lhs.hi.set(row * 128 + i, m.1);
            rhs.lo.set(row * 128 + i, key.lo.get(i));
            rhs.hi.set(row * 128 + i, key.hi.get(i));
        }
    }
    let products = session.and_bits(&lhs, &rhs)?;
    let mut out = BitShareVec::zeros(party, 128);
    for row in 0..rows.len() {
        out = out.xor(&products.slice(row * 128..(row + 1) * 128));
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod fips_oracle {
    //! Independent software AES-128 straight from the standard algorithm,
    //! used only to check the circuit.

    const SBOX: [u8; 256] = [
        0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7,
        0xab, 0x76, 0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf,
        0x9c, 0xa4, 0x72, 0xc0, 0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5,
        0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15, 0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a,
        0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75, 0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e,
        0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84, 0x53, 0xd1, 0x00, 0xed,
        0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf, 0xd0, 0xef,
        0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
        0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff,
        0xf3, 0xd2, 0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d,
        0x64, 0x5d, 0x19, 0x73, 0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee,
        0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb, 0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c,
        0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79, 0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5,
        0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08, 0xba, 0x78, 0x25, 0x2e,
        0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a, 0x70, 0x3e,
        0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
        0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55,
        0x28, 0xdf, 0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f,
        0xb0, 0x54, 0xbb, 0x16,
    ];

    fn xtime(a: u8) -> u8 {
        (a << 1) ^ if a & 0x80 != 0 { 0x1b } else { 0 }
    }

    fn expand(key: &[u8; 16]) -> [[u8; 16]; 11] {
        let rcon = [0x01u8, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1b, 0x36];
        let mut w = [[0u8; 4]; 44];
        for i in 0..4 {
            w[i].copy_from_slice(&key[4 * i..4 * i + 4]);
        }
        for i in 4..44 {
            let mut t = w[i - 1];
            if i % 4 == 0 {
                t = [
                    SBOX[t[1] as usize] ^ rcon[i / 4 - 1],
                    SBOX[t[2] as usize],
                    SBOX[t[3] as usize],
                    SBOX[t[0] as usize],
                ];
            }
            for j in 0..4 {
                w[i][j] = w[i - 4][j] ^ t[j];
            }
        }
        std::array::from_fn(|r| {
            let mut rk = [0u8; 16];
            for c in 0..4 {
                rk[4 * c..4 * c + 4].copy_from_slice(&w[4 * r + c]);
            }
            rk
        })
    }

    pub fn aes128_encrypt(key: &[u8; 16], block: &[u8; 16]) -> [u8; 16] {
        let rk = expand(key);
        let mut s = *block;
        for i in 0..16 {
            s[i] ^= rk[0][i];
        }
        for round in 1..=10 {
            for byte in s.iter_mut() {
                *byte = SBOX[*byte as usize];
            }
            // ShiftRows over column-major layout.
            let mut t = [0u8; 16];
            for i in 0..16 {
                t[i] = s[4 * ((i / 4 + i % 4) % 4) + i % 4];
            }
            s = t;
            if round < 10 {
                for c in 0..4 {
                    let a: [u8; 4] = std::array::from_fn(|r| s[4 * c + r]);
                    for r in 0..4 {
                        s[4 * c + r] = xtime(a[r])
                            ^ xtime(a[(r + 1) % 4])
                            ^ a[(r + 1) % 4]
                            ^ a[(r + 2) % 4]
                            ^ a[(r + 3) % 4];
                    }
                }
            }
            for i in 0..16 {
                s[i] ^= rk[round][i];
            }
        }
        s
    }
}
