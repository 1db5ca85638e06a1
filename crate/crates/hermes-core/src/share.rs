//! Semi-honest 2-out-of-3 replicated secret sharing.
//!
//! A secret `x` is split into additive components `r_0 + r_1 + r_2 = x`;
//! party `i` holds the pair `(r_i, r_{i+1})`. Any two parties reconstruct,
//! any single party's view is uniform. The same structure is used over the
//! prime field and over GF(2) words.

use rand::RngCore;

use crate::bits::BitVector;
use crate::field::{FieldElement, FieldParams};
use crate::{Error, Result};

/// Identifies one of the three servers and its position in the share ring.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PartyId(pub u8);

impl PartyId {
    pub const ALL: [PartyId; 3] = [PartyId(0), PartyId(1), PartyId(2)];

    pub fn next(self) -> PartyId {
        PartyId((self.0 + 1) % 3)
    }

    pub fn prev(self) -> PartyId {
        PartyId((self.0 + 2) % 3)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// One party's replicated share of a field element: the additive components
/// `(r_i, r_{i+1})`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RepShare {
    pub party: PartyId,
    pub lo: FieldElement,
    pub hi: FieldElement,
}

impl RepShare {
    pub fn field(&self) -> &FieldParams {
        self.lo.field()
    }

    /// Share of a public constant: component `r_0` carries the value, the
    /// others are zero. Parties 0 and 2 see the constant in their pair.
    pub fn constant(party: PartyId, value: &FieldElement) -> RepShare {
        let zero = value.field().zero();
        let (lo, hi) = match party.0 {
            0 => (value.clone(), zero),
            1 => (zero.clone(), zero),
            _ => (zero, value.clone()),
        };
        RepShare { party, lo, hi }
    }

    pub fn add(&self, other: &RepShare) -> RepShare {
        debug_assert_eq!(self.party, other.party);
        RepShare {
            party: self.party,
            lo: self.lo.add(&other.lo),
            hi: self.hi.add(&other.hi),
        }
    }

    pub fn sub(&self, other: &RepShare) -> RepShare {
        debug_assert_eq!(self.party, other.party);
        RepShare {
            party: self.party,
            lo: self.lo.sub(&other.lo),
            hi: self.hi.sub(&other.hi),
        }
    }

    pub fn neg(&self) -> RepShare {
        RepShare { party: self.party, lo: self.lo.neg(), hi: self.hi.neg() }
    }

    /// Multiply by a public scalar.
    pub fn scale(&self, k: &FieldElement) -> RepShare {
        RepShare {
            party: self.party,
            lo: self.lo.mul(k),
            hi: self.hi.mul(k),
        }
    }

    /// Add a public constant (adjusts the `r_0` component only).
    pub fn add_constant(&self, value: &FieldElement) -> RepShare {
        self.add(&RepShare::constant(self.party, value))
    }

    /// Wire encoding: the two components in canonical field encoding.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.lo.encode();
        out.extend_from_slice(&self.hi.encode());
        out
    }

    pub fn decode(party: PartyId, field: &FieldParams, bytes: &[u8]) -> Result<RepShare> {
        let w = field.encoded_len();
        if bytes.len() != 2 * w {
            return Err(Error::Encoding(format!(
                "replicated share expects {} bytes, got {}",
                2 * w,
                bytes.len()
            )));
        }
        Ok(RepShare {
            party,
            lo: field.decode(&bytes[..w])?,
            hi: field.decode(&bytes[w..])?,
        })
    }
}

/// Splits a secret into the three parties' replicated shares.
///
/// `r_0` and `r_1` are fresh uniform; `r_2 = x - r_0 - r_1`.
pub fn share(secret: &FieldElement, rng: &mut impl RngCore) -> [RepShare; 3] {
    let field = secret.field().clone();
    let r0 = field.random(rng);
    let r1 = field.random(rng);
    let r2 = secret.sub(&r0).sub(&r1);
    shares_from_components(&[r0, r1, r2])
}

/// Assembles the three share pairs from explicit additive components.
pub fn shares_from_components(r: &[FieldElement; 3]) -> [RepShare; 3] {
    [
        RepShare { party: PartyId(0), lo: r[0].clone(), hi: r[1].clone() },
        RepShare { party: PartyId(1), lo: r[1].clone(), hi: r[2].clone() },
        RepShare { party: PartyId(2), lo: r[2].clone(), hi: r[0].clone() },
    ]
}

/// Trusted reconstruction from any two parties' shares (dealer/audit side;
/// the online protocol opens through the transport instead).
pub fn reconstruct_pair(a: &RepShare, b: &RepShare) -> Result<FieldElement> {
    if a.party == b.party {
        return Err(Error::ShareIntegrity(
            "need shares from two distinct parties".into(),
        ));
    }
    // Party i holds (r_i, r_{i+1}); together two parties hold all three
    // components, with one overlap that must agree.
    let mut components: [Option<FieldElement>; 3] = [None, None, None];
    for s in [a, b] {
        for (idx, val) in [
            (s.party.index(), s.lo.clone()),
            (s.party.next().index(), s.hi.clone()),
        ] {
            match &components[idx] {
                Some(existing) if *existing != val => {
                    return Err(Error::ShareIntegrity(format!(
                        "overlapping component r_{idx} disagrees"
                    )));
                }
                _ => components[idx] = Some(val),
            }
        }
    }
    let mut acc = a.field().zero();
    for c in components {
        acc = acc.add(&c.ok_or_else(|| {
            Error::ShareIntegrity("component missing in reconstruction".into())
        })?);
    }
    Ok(acc)
}

/// Reconstruction from all three shares, with full overlap checking.
pub fn reconstruct(shares: &[RepShare; 3]) -> Result<FieldElement> {
    let x01 = reconstruct_pair(&shares[0], &shares[1])?;
    let x12 = reconstruct_pair(&shares[1], &shares[2])?;
    if x01 != x12 {
        return Err(Error::ShareIntegrity("share triple inconsistent".into()));
    }
    Ok(x01)
}

/// One party's replicated shares of a vector of bits, stored as two packed
/// component vectors. The GF(2) analogue of [`RepShare`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitShareVec {
    pub party: PartyId,
    pub lo: BitVector,
    pub hi: BitVector,
}

impl BitShareVec {
    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    pub fn zeros(party: PartyId, len: usize) -> BitShareVec {
        BitShareVec { party, lo: BitVector::zeros(len), hi: BitVector::zeros(len) }
    }

    /// Share of public bits: component `r_0` carries the values.
    pub fn constant(party: PartyId, value: &BitVector) -> BitShareVec {
        let zero = BitVector::zeros(value.len());
        let (lo, hi) = match party.0 {
            0 => (value.clone(), zero),
            1 => (zero.clone(), zero),
            _ => (zero, value.clone()),
        };
        BitShareVec { party, lo, hi }
    }

    pub fn xor(&self, other: &BitShareVec) -> BitShareVec {
        debug_assert_eq!(self.party, other.party);
        BitShareVec {
            party: self.party,
            lo: self.lo.xor(&other.lo),
            hi: self.hi.xor(&other.hi),
        }
    }

    /// Complement of the shared bits (adjusts the `r_0` component).
    pub fn not(&self) -> BitShareVec {
        let ones = BitVector::zeros(self.len()).not();
        self.xor(&BitShareVec::constant(self.party, &ones))
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> BitShareVec {
        BitShareVec {
            party: self.party,
            lo: self.lo.slice(range.clone()),
            hi: self.hi.slice(range),
        }
    }

    pub fn concat(&self, other: &BitShareVec) -> BitShareVec {
        debug_assert_eq!(self.party, other.party);
        BitShareVec {
            party: self.party,
            lo: self.lo.concat(&other.lo),
            hi: self.hi.concat(&other.hi),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.lo.encode();
        out.extend(self.hi.encode());
        out
    }

    pub fn decode(party: PartyId, bytes: &[u8]) -> Result<BitShareVec> {
        if bytes.len() < 4 {
            return Err(Error::Encoding("bit share too short".into()));
        }
        let len = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let half = 4 + len.div_ceil(64) * 8;
        if bytes.len() != 2 * half {
            return Err(Error::Encoding("bit share length mismatch".into()));
        }
        Ok(BitShareVec {
            party,
            lo: BitVector::decode(&bytes[..half])?,
            hi: BitVector::decode(&bytes[half..])?,
        })
    }
}

/// Splits a bit vector into three replicated bit-share vectors.
pub fn share_bits(secret: &BitVector, rng: &mut impl RngCore) -> [BitShareVec; 3] {
    let r0 = BitVector::random(secret.len(), rng);
    let r1 = BitVector::random(secret.len(), rng);
    let r2 = secret.xor(&r0).xor(&r1);
    [
        BitShareVec { party: PartyId(0), lo: r0.clone(), hi: r1.clone() },
        BitShareVec { party: PartyId(1), lo: r1, hi: r2.clone() },
        BitShareVec { party: PartyId(2), lo: r2, hi: r0 },
    ]
}

/// Trusted reconstruction of shared bits from two parties.
pub fn reconstruct_bits_pair(a: &BitShareVec, b: &BitShareVec) -> Result<BitVector> {
    if a.party == b.party {
        return Err(Error::ShareIntegrity("need two distinct parties".into()));
    }
    let mut components: [Option<BitVector>; 3] = [None, None, None];
    for s in [a, b] {
        for (idx, val) in [
            (s.party.index(), s.lo.clone()),
            (s.party.next().index(), s.hi.clone()),
        ] {
            match &components[idx] {
                Some(existing) if *existing != val => {
                    return Err(Error::ShareIntegrity(format!(
                        "overlapping bit component r_{idx} disagrees"
                    )));
                }
                _ => components[idx] = Some(val),
            }
        }
    }
    let mut acc = BitVector::zeros(a.len());
    for c in components {
        acc = acc.xor(&c.ok_or_else(|| Error::ShareIntegrity("missing component".into()))?);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn shares_match_forced_randomness_example() {
        // In F_11 with r_0 = 3, r_1 = 5, secret = 7: r_2 = 10, and the
        // parties hold (3,5), (5,10), (10,3).
        let f = FieldParams::test11();
        let secret = f.element_from_u64(7);
        let r0 = f.element_from_u64(3);
        let r1 = f.element_from_u64(5);
        let r2 = secret.sub(&r0).sub(&r1);
        assert_eq!(r2, f.element_from_u64(10));
        let shares = shares_from_components(&[r0, r1, r2]);
        assert_eq!((shares[0].lo.as_u64(), shares[0].hi.as_u64()), (3, 5));
        assert_eq!((shares[1].lo.as_u64(), shares[1].hi.as_u64()), (5, 10));
        assert_eq!((shares[2].lo.as_u64(), shares[2].hi.as_u64()), (10, 3));
        assert_eq!(reconstruct(&shares).unwrap(), secret);
    }

    #[test]
    fn share_of_zero_round_trips() {
        let f = FieldParams::test101();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let shares = share(&f.zero(), &mut rng);
        assert_eq!(reconstruct(&shares).unwrap(), f.zero());
    }

    #[test]
    fn any_two_parties_reconstruct() {
        let f = FieldParams::production();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..20 {
            let x = f.random(&mut rng);
            let s = share(&x, &mut rng);
            for (i, j) in [(0, 1), (1, 2), (0, 2), (2, 0), (1, 0), (2, 1)] {
                assert_eq!(reconstruct_pair(&s[i], &s[j]).unwrap(), x);
            }
        }
    }

    #[test]
    fn single_party_cannot_reconstruct() {
        let f = FieldParams::test101();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let s = share(&f.element_from_u64(42), &mut rng);
        assert!(reconstruct_pair(&s[0], &s[0]).is_err());
    }

    #[test]
    fn tampered_overlap_detected() {
        let f = FieldParams::test101();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let mut s = share(&f.element_from_u64(9), &mut rng);
        s[1].lo = s[1].lo.add(&f.one());
        assert!(matches!(
            reconstruct_pair(&s[0], &s[1]),
            Err(Error::ShareIntegrity(_))
        ));
    }

    #[test]
    fn linear_ops_commute_with_reconstruction() {
        let f = FieldParams::test101();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let x = f.random(&mut rng);
        let y = f.random(&mut rng);
        let sx = share(&x, &mut rng);
        let sy = share(&y, &mut rng);
        let k = f.element_from_u64(7);
        let combined: Vec<RepShare> = (0..3)
            .map(|i| sx[i].scale(&k).add(&sy[i]).add_constant(&f.element_from_u64(5)))
            .collect();
        let expect = x.mul(&k).add(&y).add(&f.element_from_u64(5));
        let opened =
            reconstruct(&[combined[0].clone(), combined[1].clone(), combined[2].clone()]).unwrap();
        assert_eq!(opened, expect);
    }

    #[test]
    fn bit_shares_round_trip_and_xor() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let a = BitVector::random(130, &mut rng);
        let b = BitVector::random(130, &mut rng);
        let sa = share_bits(&a, &mut rng);
        let sb = share_bits(&b, &mut rng);
        assert_eq!(reconstruct_bits_pair(&sa[0], &sa[1]).unwrap(), a);
        assert_eq!(reconstruct_bits_pair(&sa[2], &sa[0]).unwrap(), a);
        let sxor: Vec<BitShareVec> = (0..3).map(|i| sa[i].xor(&sb[i])).collect();
        assert_eq!(reconstruct_bits_pair(&sxor[1], &sxor[2]).unwrap(), a.xor(&b));
        // NOT of a shared vector opens to the complement.
        let snot: Vec<BitShareVec> = (0..3).map(|i| sa[i].not()).collect();
        assert_eq!(reconstruct_bits_pair(&snot[0], &snot[2]).unwrap(), a.not());
    }

    #[test]
    fn constant_shares_open_to_the_constant() {
        let f = FieldParams::test101();
        let v = f.element_from_u64(55);
        let s: [RepShare; 3] = [
            RepShare::constant(PartyId(0), &v),
            RepShare::constant(PartyId(1), &v),
            RepShare::constant(PartyId(2), &v),
        ];
        assert_eq!(reconstruct(&s).unwrap(), v);
    }
}
