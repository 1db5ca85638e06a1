//! Dealer-generated correlated randomness consumed by the online phase.
//!
//! Each party's tape carries:
//! * a pair of PRG seeds from which correlated zero shares are streamed
//!   (field elements for multiplications, packed bits for AND gates), with a
//!   budget enforced per domain,
//! * materialized replicated shares of random bits (the equality test's
//!   masking material), and
//! * materialized cube tuples `([a], [a^2], [a^3])` which let a shared MiMC
//!   round run in a single masked opening.
//!
//! Tapes are deterministic in the dealer seed and are consumed by exactly
//! one session.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sha3::{Digest, Sha3_256};

use crate::field::{FieldElement, FieldParams};
use crate::share::{share, PartyId, RepShare};
use crate::{Error, Result};

const TAPE_MAGIC: &[u8; 8] = b"HERMTAPE";
const TAPE_VERSION: u16 = 1;

/// Budget request handed to the dealer.
#[derive(Clone, Copy, Debug, Default)]
pub struct TapeCounts {
    /// Field-domain zero shares (one per secret multiplication).
    pub zero_shares: u64,
    /// GF(2)-domain zero shares (one per AND gate).
    pub and_zero_shares: u64,
    /// Shared random bits (equality-test masking).
    pub random_bits: u64,
    /// Cube tuples (one per shared MiMC round).
    pub cube_tuples: u64,
}

/// Consumption counters, mirrored into the transcript stats.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TapeUsage {
    pub zero_shares: u64,
    pub and_zero_shares: u64,
    pub random_bits: u64,
    pub cube_tuples: u64,
}

/// One party's preprocessing tape.
pub struct PreprocessingTape {
    pub party: PartyId,
    field: FieldParams,
    counts: TapeCounts,
    used: TapeUsage,
    zero_field: CorrelatedStream,
    zero_bits: CorrelatedStream,
    random_bits: Vec<RepShare>,
    cube_tuples: Vec<[RepShare; 3]>,
    seeds: [[u8; 32]; 2],
}

/// Two synchronized PRG streams whose difference forms this party's zero
/// share; the successor party holds the second seed, so the three parties'
/// draws cancel.
struct CorrelatedStream {
    own: ChaCha12Rng,
    next: ChaCha12Rng,
}

fn subseed(seed: &[u8; 32], domain: &str) -> [u8; 32] {
    let mut h = Sha3_256::new();
    h.update(seed);
    h.update(domain.as_bytes());
    h.finalize().into()
}

impl CorrelatedStream {
    fn new(own: &[u8; 32], next: &[u8; 32], domain: &str) -> CorrelatedStream {
        CorrelatedStream {
            own: ChaCha12Rng::from_seed(subseed(own, domain)),
            next: ChaCha12Rng::from_seed(subseed(next, domain)),
        }
    }

    fn next_field_zero(&mut self, field: &FieldParams) -> FieldElement {
        let a = field.random(&mut self.own);
        let b = field.random(&mut self.next);
        a.sub(&b)
    }

    fn next_bit_zero(&mut self) -> u64 {
        self.own.next_u64() ^ self.next.next_u64()
    }
}

impl PreprocessingTape {
    pub fn field(&self) -> &FieldParams {
        &self.field
    }

    pub fn counts(&self) -> TapeCounts {
        self.counts
    }

    pub fn usage(&self) -> TapeUsage {
        self.used
    }

    pub fn remaining_random_bits(&self) -> u64 {
        self.counts.random_bits - self.used.random_bits
    }

    /// This party's next correlated zero share (field domain).
    pub fn next_zero_share(&mut self) -> Result<FieldElement> {
        if self.used.zero_shares >= self.counts.zero_shares {
            return Err(Error::PreprocessingExhausted(format!(
                "zero shares exhausted at {} (size the dealer run accordingly)",
                self.counts.zero_shares
            )));
        }
        self.used.zero_shares += 1;
        Ok(self.zero_field.next_field_zero(&self.field))
    }

    /// A packed word of `n <= 64` correlated zero bits (GF(2) domain),
    /// consuming `n` AND-gate budget units.
    pub fn next_zero_bits(&mut self, n: u64) -> Result<u64> {
        debug_assert!(n <= 64);
        if self.used.and_zero_shares + n > self.counts.and_zero_shares {
            return Err(Error::PreprocessingExhausted(format!(
                "AND-gate zero shares exhausted at {}",
                self.counts.and_zero_shares
            )));
        }
        self.used.and_zero_shares += n;
        Ok(self.zero_bits.next_bit_zero())
    }

    /// This party's share of the next dealer random bit.
    pub fn next_random_bit(&mut self) -> Result<RepShare> {
        let idx = self.used.random_bits as usize;
        if idx >= self.random_bits.len() {
            return Err(Error::PreprocessingExhausted(format!(
                "random bits exhausted at {}",
                self.random_bits.len()
            )));
        }
        self.used.random_bits += 1;
        Ok(self.random_bits[idx].clone())
    }

    /// This party's shares of the next cube tuple `(a, a^2, a^3)`.
    pub fn next_cube_tuple(&mut self) -> Result<[RepShare; 3]> {
        let idx = self.used.cube_tuples as usize;
        if idx >= self.cube_tuples.len() {
            return Err(Error::PreprocessingExhausted(format!(
                "cube tuples exhausted at {}",
                self.cube_tuples.len()
            )));
        }
        self.used.cube_tuples += 1;
        Ok(self.cube_tuples[idx].clone())
    }

    /// Serializes the tape (see the format notes on [`decode`]).
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(TAPE_MAGIC);
        out.extend_from_slice(&TAPE_VERSION.to_le_bytes());
        out.push(self.party.0);
        let label = self.field.label().as_bytes();
        out.push(label.len() as u8);
        out.extend_from_slice(label);
        out.extend_from_slice(&self.counts.zero_shares.to_le_bytes());
        out.extend_from_slice(&self.counts.and_zero_shares.to_le_bytes());
        out.extend_from_slice(&self.counts.random_bits.to_le_bytes());
        out.extend_from_slice(&self.counts.cube_tuples.to_le_bytes());
        out.extend_from_slice(&self.seeds[0]);
        out.extend_from_slice(&self.seeds[1]);
        for s in &self.random_bits {
            out.extend_from_slice(&s.encode());
        }
        for t in &self.cube_tuples {
            for s in t {
                out.extend_from_slice(&s.encode());
            }
        }
        out
    }

    /// Parses a tape file: magic, version, party id, field label, the four
    /// budget counts, the two PRG seeds, then the raw element stream in
    /// canonical field encoding.
    pub fn decode(bytes: &[u8], field: &FieldParams) -> Result<PreprocessingTape> {
        let fail = |msg: &str| Error::Encoding(format!("tape: {msg}"));
        if bytes.len() < 8 + 2 + 1 + 1 {
            return Err(fail("truncated header"));
        }
        if &bytes[0..8] != TAPE_MAGIC {
            return Err(fail("bad magic"));
        }
        let version = u16::from_le_bytes(bytes[8..10].try_into().unwrap());
        if version != TAPE_VERSION {
            return Err(fail(&format!("unsupported version {version}")));
        }
        let party = PartyId(bytes[10]);
        if party.0 > 2 {
            return Err(fail("party id out of range"));
        }
        let label_len = bytes[11] as usize;
        let mut off = 12;
        if bytes.len() < off + label_len {
            return Err(fail("truncated label"));
        }
        let label = std::str::from_utf8(&bytes[off..off + label_len])
            .map_err(|_| fail("label not utf8"))?;
        if label != field.label() {
            return Err(Error::FieldMismatch(format!(
                "tape is for field {label}, expected {}",
                field.label()
            )));
        }
        off += label_len;
        let read_u64 = |off: &mut usize| -> Result<u64> {
            if bytes.len() < *off + 8 {
                return Err(fail("truncated counts"));
            }
            let v = u64::from_le_bytes(bytes[*off..*off + 8].try_into().unwrap());
            *off += 8;
            Ok(v)
        };
        let counts = TapeCounts {
            zero_shares: read_u64(&mut off)?,
            and_zero_shares: read_u64(&mut off)?,
            random_bits: read_u64(&mut off)?,
            cube_tuples: read_u64(&mut off)?,
        };
        if bytes.len() < off + 64 {
            return Err(fail("truncated seeds"));
        }
        let mut seeds = [[0u8; 32]; 2];
        seeds[0].copy_from_slice(&bytes[off..off + 32]);
        seeds[1].copy_from_slice(&bytes[off + 32..off + 64]);
        off += 64;

        let w = 2 * field.encoded_len();
        let mut random_bits = Vec::with_capacity(counts.random_bits as usize);
        for _ in 0..counts.random_bits {
            if bytes.len() < off + w {
                return Err(fail("truncated random-bit stream"));
            }
            random_bits.push(RepShare::decode(party, field, &bytes[off..off + w])?);
            off += w;
        }
        let mut cube_tuples = Vec::with_capacity(counts.cube_tuples as usize);
        for _ in 0..counts.cube_tuples {
            let mut t = Vec::with_capacity(3);
            for _ in 0..3 {
                if bytes.len() < off + w {
                    return Err(fail("truncated cube-tuple stream"));
                }
                t.push(RepShare::decode(party, field, &bytes[off..off + w])?);
                off += w;
            }
            cube_tuples.push([t[0].clone(), t[1].clone(), t[2].clone()]);
        }
        if off != bytes.len() {
            return Err(fail("trailing bytes"));
        }
        Ok(PreprocessingTape {
            party,
            field: field.clone(),
            counts,
            used: TapeUsage::default(),
            zero_field: CorrelatedStream::new(&seeds[0], &seeds[1], "zero-field"),
            zero_bits: CorrelatedStream::new(&seeds[0], &seeds[1], "zero-bits"),
            random_bits,
            cube_tuples,
            seeds,
        })
    }
}

/// Deterministically generates the three parties' tapes from one seed.
pub fn dealer_generate(
    field: &FieldParams,
    counts: TapeCounts,
    seed: [u8; 32],
) -> [PreprocessingTape; 3] {
    let mut rng = ChaCha12Rng::from_seed(subseed(&seed, "dealer"));
    let mut party_seeds = [[0u8; 32]; 3];
    for s in party_seeds.iter_mut() {
        rng.fill_bytes(s);
    }

    let mut random_bits: [Vec<RepShare>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for _ in 0..counts.random_bits {
        let bit = field.element_from_u64(rng.next_u32() as u64 & 1);
        let shares = share(&bit, &mut rng);
        for (i, s) in shares.into_iter().enumerate() {
            random_bits[i].push(s);
        }
    }

    let mut cube_tuples: [Vec<[RepShare; 3]>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for _ in 0..counts.cube_tuples {
        let a = field.random(&mut rng);
        let a2 = a.square();
        let a3 = a2.mul(&a);
        let sa = share(&a, &mut rng);
        let sa2 = share(&a2, &mut rng);
        let sa3 = share(&a3, &mut rng);
        for i in 0..3 {
            cube_tuples[i].push([sa[i].clone(), sa2[i].clone(), sa3[i].clone()]);
        }
    }

    let mut tapes = Vec::with_capacity(3);
    for (i, (bits, cubes)) in random_bits.into_iter().zip(cube_tuples).enumerate() {
        let party = PartyId(i as u8);
        let seeds = [party_seeds[i], party_seeds[(i + 1) % 3]];
        tapes.push(PreprocessingTape {
            party,
            field: field.clone(),
            counts,
            used: TapeUsage::default(),
            zero_field: CorrelatedStream::new(&seeds[0], &seeds[1], "zero-field"),
            zero_bits: CorrelatedStream::new(&seeds[0], &seeds[1], "zero-bits"),
            random_bits: bits,
            cube_tuples: cubes,
            seeds,
        });
    }
    let mut it = tapes.into_iter();
    [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::share::{reconstruct, reconstruct_pair};

    fn counts() -> TapeCounts {
        TapeCounts { zero_shares: 16, and_zero_shares: 128, random_bits: 32, cube_tuples: 8 }
    }

    #[test]
    fn zero_shares_sum_to_zero_across_parties() {
        let f = FieldParams::test101();
        let mut tapes = dealer_generate(&f, counts(), [1u8; 32]);
        for _ in 0..16 {
            let mut acc = f.zero();
            for t in tapes.iter_mut() {
                acc = acc.add(&t.next_zero_share().unwrap());
            }
            assert!(acc.is_zero());
        }
        for t in tapes.iter_mut() {
            assert!(matches!(
                t.next_zero_share(),
                Err(Error::PreprocessingExhausted(_))
            ));
        }
    }

    #[test]
    fn bit_zero_shares_xor_to_zero() {
        let f = FieldParams::test101();
        let mut tapes = dealer_generate(&f, counts(), [2u8; 32]);
        for _ in 0..2 {
            let w: Vec<u64> = tapes.iter_mut().map(|t| t.next_zero_bits(64).unwrap()).collect();
            assert_eq!(w[0] ^ w[1] ^ w[2], 0);
        }
    }

    #[test]
    fn random_bits_open_to_bits() {
        let f = FieldParams::test101();
        let mut tapes = dealer_generate(&f, counts(), [3u8; 32]);
        for _ in 0..32 {
            let s: Vec<RepShare> = tapes.iter_mut().map(|t| t.next_random_bit().unwrap()).collect();
            let v = reconstruct(&[s[0].clone(), s[1].clone(), s[2].clone()]).unwrap();
            assert!(v.is_zero() || v == f.one());
        }
    }

    #[test]
    fn cube_tuples_are_consistent() {
        let f = FieldParams::production();
        let mut tapes = dealer_generate(&f, counts(), [4u8; 32]);
        for _ in 0..8 {
            let ts: Vec<[RepShare; 3]> =
                tapes.iter_mut().map(|t| t.next_cube_tuple().unwrap()).collect();
            let a = reconstruct_pair(&ts[0][0], &ts[1][0]).unwrap();
            let a2 = reconstruct_pair(&ts[0][1], &ts[1][1]).unwrap();
            let a3 = reconstruct_pair(&ts[2][2], &ts[0][2]).unwrap();
            assert_eq!(a.square(), a2);
            assert_eq!(a2.mul(&a), a3);
        }
    }

    #[test]
    fn same_seed_gives_byte_identical_tapes() {
        let f = FieldParams::production();
        let a = dealer_generate(&f, counts(), [9u8; 32]);
        let b = dealer_generate(&f, counts(), [9u8; 32]);
        for i in 0..3 {
            assert_eq!(a[i].encode(), b[i].encode());
        }
        let c = dealer_generate(&f, counts(), [10u8; 32]);
        assert_ne!(a[0].encode(), c[0].encode());
    }

    #[test]
    fn tape_file_round_trip() {
        let f = FieldParams::production();
        let tapes = dealer_generate(&f, counts(), [7u8; 32]);
        let bytes = tapes[1].encode();
        let mut again = PreprocessingTape::decode(&bytes, &f).unwrap();
        // Streams must continue identically after a round trip.
        let mut orig = PreprocessingTape::decode(&tapes[1].encode(), &f).unwrap();
        for _ in 0..4 {
            assert_eq!(
                again.next_zero_share().unwrap(),
                orig.next_zero_share().unwrap()
            );
            assert_eq!(
                again.next_random_bit().unwrap(),
                orig.next_random_bit().unwrap()
            );
        }
        assert!(PreprocessingTape::decode(&bytes, &FieldParams::test11()).is_err());
        assert!(PreprocessingTape::decode(b"HERMTAPEx", &f).is_err());
    }
}
