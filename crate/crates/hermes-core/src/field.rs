//! Prime-field arithmetic for the MPC pipelines.
//!
//! Two families of moduli are supported:
//!
//! * the production field, whose modulus is the smallest prime above `2^128`
//!   congruent to 2 mod 3 (so that `x -> x^3` is a permutation and one
//!   128-bit protocol block maps to exactly one element), and
//! * small test fields (`p < 2^63`) such as F_11 and F_101 which are cheap
//!   enough for exhaustive oracles.
//!
//! Values are canonical residues in `[0, p)` held in three 64-bit limbs.
//! Arithmetic is not constant time; the deployment model is semi-honest and
//! the artifact is desk scale.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;
use std::sync::OnceLock;

use rand::RngCore;

use crate::{Error, Result};

/// Offset of the production modulus above `2^128`: `p = 2^128 + 385`.
pub const PRODUCTION_OFFSET: u64 = 385;

/// MiMC round count for the production field, `ceil(log3 p)`.
pub const PRODUCTION_MIMC_ROUNDS: u32 = 81;

#[derive(Debug)]
struct ParamsInner {
    /// Modulus, little-endian limbs.
    p: [u64; 3],
    /// `p - 2`, the inversion exponent.
    p_minus_2: [u64; 3],
    /// `(2p - 1) / 3`, the inverse-cube exponent (valid since p = 2 mod 3).
    cube_inv_exp: [u64; 3],
    /// For the special-form production prime: `p - 2^128`.
    fold_c: Option<u64>,
    /// For small fields: the modulus as a single word.
    small_p: Option<u64>,
    mimc_rounds: u32,
    label: String,
    /// Canonical encoding width in bytes.
    enc_len: usize,
}

/// Shared, immutable description of a prime field.
///
/// Cloning is cheap; elements carry a handle so mixed-field operations can be
/// rejected.
#[derive(Clone)]
pub struct FieldParams(Arc<ParamsInner>);

impl fmt::Debug for FieldParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FieldParams({})", self.0.label)
    }
}

impl PartialEq for FieldParams {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0.p == other.0.p
    }
}
impl Eq for FieldParams {}

fn bits_of(p: u64) -> u32 {
    64 - p.leading_zeros()
}

/// `ceil(log3 p)` computed exactly by repeated multiplication.
fn mimc_rounds_for_small(p: u64) -> u32 {
    let mut r = 0u32;
    let mut t: u128 = 1;
    while t < p as u128 {
        t *= 3;
        r += 1;
    }
    r
}

impl FieldParams {
    /// The production field: smallest prime `p > 2^128` with `p = 2 mod 3`.
    pub fn production() -> FieldParams {
        static PROD: OnceLock<FieldParams> = OnceLock::new();
        PROD.get_or_init(|| {
            // p = 2^128 + 385; p - 2 = 2^128 + 383.
            let p = [PRODUCTION_OFFSET, 0, 1];
            let p_minus_2 = [PRODUCTION_OFFSET - 2, 0, 1];
            // (2p - 1) / 3 with 2p - 1 = 2^129 + 769.
            let cube_inv_exp = div3(&[769, 0, 2]);
            FieldParams(Arc::new(ParamsInner {
                p,
                p_minus_2,
                cube_inv_exp,
                fold_c: Some(PRODUCTION_OFFSET),
                small_p: None,
                mimc_rounds: PRODUCTION_MIMC_ROUNDS,
                label: "prod".into(),
                enc_len: 17,
            }))
        })
        .clone()
    }

    /// F_11, for exhaustive oracles.
    pub fn test11() -> FieldParams {
        static F11: OnceLock<FieldParams> = OnceLock::new();
        F11.get_or_init(|| FieldParams::new_small(11, "test11").unwrap())
            .clone()
    }

    /// F_101, for exhaustive and statistical oracles.
    pub fn test101() -> FieldParams {
        static F101: OnceLock<FieldParams> = OnceLock::new();
        F101.get_or_init(|| FieldParams::new_small(101, "test101").unwrap())
            .clone()
    }

    /// A small custom field. `p` must be an odd prime below `2^63` with
    /// `gcd(3, p-1) = 1` so the cube map stays a permutation.
    pub fn new_small(p: u64, label: &str) -> Result<FieldParams> {
        if p < 3 || p >= (1 << 63) {
            return Err(Error::BadFieldParams(format!("modulus {p} out of range")));
        }
        if p % 3 != 2 {
            return Err(Error::BadFieldParams(format!(
                "modulus {p} != 2 mod 3; cube map would not be a bijection"
            )));
        }
        if !is_prime_u64(p) {
            return Err(Error::BadFieldParams(format!("{p} is not prime")));
        }
        let cube_inv = (2 * (p as u128) - 1) / 3;
        Ok(FieldParams(Arc::new(ParamsInner {
            p: [p, 0, 0],
            p_minus_2: [p - 2, 0, 0],
            cube_inv_exp: [cube_inv as u64, (cube_inv >> 64) as u64, 0],
            fold_c: None,
            small_p: Some(p),
            mimc_rounds: mimc_rounds_for_small(p),
            label: label.into(),
            enc_len: 2.max(bits_of(p).div_ceil(8) as usize),
        })))
    }

    pub fn label(&self) -> &str {
        &self.0.label
    }

    pub fn mimc_rounds(&self) -> u32 {
        self.0.mimc_rounds
    }

    /// Canonical encoding width in bytes (17 for production, 2 for the
    /// built-in test fields).
    pub fn encoded_len(&self) -> usize {
        self.0.enc_len
    }

    pub fn is_production(&self) -> bool {
        self.0.fold_c.is_some()
    }

    /// The modulus as little-endian limbs.
    pub fn modulus_limbs(&self) -> [u64; 3] {
        self.0.p
    }

    pub fn zero(&self) -> FieldElement {
        FieldElement { limbs: [0; 3], field: self.clone() }
    }

    pub fn one(&self) -> FieldElement {
        self.element_from_u64(1)
    }

    pub fn element_from_u64(&self, v: u64) -> FieldElement {
        self.element_from_u128(v as u128)
    }

    pub fn element_from_u128(&self, v: u128) -> FieldElement {
        let limbs = [v as u64, (v >> 64) as u64, 0];
        let limbs = match self.0.small_p {
            Some(p) => {
                let r = (v % p as u128) as u64;
                [r, 0, 0]
            }
            // v < 2^128 <= p: already canonical.
            None => limbs,
        };
        FieldElement { limbs, field: self.clone() }
    }

    /// Interprets up to 48 bytes (little-endian) as an integer and reduces it
    /// mod p. Used for hash-derived constants.
    pub fn element_from_bytes_reduced(&self, bytes: &[u8]) -> FieldElement {
        assert!(bytes.len() <= 48, "reduction input too wide");
        let mut limbs = [0u64; 6];
        for (i, chunk) in bytes.chunks(8).enumerate() {
            let mut w = [0u8; 8];
            w[..chunk.len()].copy_from_slice(chunk);
            limbs[i] = u64::from_le_bytes(w);
        }
        FieldElement { limbs: self.reduce_wide(&limbs), field: self.clone() }
    }

    /// Uniform random element below p (rejection sampling).
    pub fn random(&self, rng: &mut impl RngCore) -> FieldElement {
        match self.0.small_p {
            Some(p) => {
                // Rejection-free: draw 128 bits, reduce. Bias is < 2^-64.
                let mut buf = [0u8; 16];
                rng.fill_bytes(&mut buf);
                let v = u128::from_le_bytes(buf);
                self.element_from_u128(v % p as u128)
            }
            None => loop {
                let mut buf = [0u8; 24];
                rng.fill_bytes(&mut buf);
                let mut limbs = [
                    u64::from_le_bytes(buf[0..8].try_into().unwrap()),
                    u64::from_le_bytes(buf[8..16].try_into().unwrap()),
                    u64::from_le_bytes(buf[16..24].try_into().unwrap()),
                ];
                // Mask to 129 bits, then reject values >= p.
                limbs[2] &= 1;
                if cmp3(&limbs, &self.0.p) == Ordering::Less {
                    return FieldElement { limbs, field: self.clone() };
                }
            },
        }
    }

    /// Decodes the canonical fixed-width little-endian encoding.
    pub fn decode(&self, bytes: &[u8]) -> Result<FieldElement> {
        if bytes.len() != self.0.enc_len {
            return Err(Error::Encoding(format!(
                "field {} expects {}-byte encoding, got {}",
                self.0.label,
                self.0.enc_len,
                bytes.len()
            )));
        }
        let mut buf = [0u8; 24];
        buf[..bytes.len()].copy_from_slice(bytes);
        let limbs = [
            u64::from_le_bytes(buf[0..8].try_into().unwrap()),
            u64::from_le_bytes(buf[8..16].try_into().unwrap()),
            u64::from_le_bytes(buf[16..24].try_into().unwrap()),
        ];
        if cmp3(&limbs, &self.0.p) != Ordering::Less {
            return Err(Error::Encoding(format!(
                "non-canonical field element for {}",
                self.0.label
            )));
        }
        Ok(FieldElement { limbs, field: self.clone() })
    }

    fn reduce_wide(&self, x: &[u64; 6]) -> [u64; 3] {
        match self.0.small_p {
            Some(p) => {
                // Horner over 64-bit limbs: v = v * 2^64 + limb (mod p).
                let p = p as u128;
                let shift = (u64::MAX as u128 + 1) % p;
                let mut v: u128 = 0;
                for &limb in x.iter().rev() {
                    v = (v * shift + limb as u128 % p) % p;
                }
                [v as u64, 0, 0]
            }
            None => {
                let c = self.0.fold_c.unwrap();
                // p = 2^128 + c, so 2^128 = -c (mod p). For x < p^2:
                //   x = q * 2^128 + r  =>  x = r - c*q (mod p).
                let r = [x[0], x[1], 0];
                let q = [x[2], x[3], x[4], x[5]];
                let cq = mul4_small(&q, c); // < 2^162
                debug_assert_eq!(cq[3], 0);
                debug_assert_eq!(cq[4], 0);
                let r1 = [cq[0], cq[1], 0];
                let cq1 = (cq[2] as u128) * (c as u128); // < 2^98
                let cq1 = [cq1 as u64, (cq1 >> 64) as u64, 0];
                let inner = self.mod_sub_limbs(&r1, &cq1);
                self.mod_sub_limbs(&r, &inner)
            }
        }
    }

    fn mod_add_limbs(&self, a: &[u64; 3], b: &[u64; 3]) -> [u64; 3] {
        let (s, _) = add3(a, b);
        if cmp3(&s, &self.0.p) != Ordering::Less {
            let (d, _) = sub3(&s, &self.0.p);
            d
        } else {
            s
        }
    }

    fn mod_sub_limbs(&self, a: &[u64; 3], b: &[u64; 3]) -> [u64; 3] {
        if cmp3(a, b) != Ordering::Less {
            let (d, _) = sub3(a, b);
            d
        } else {
            let (t, _) = add3(a, &self.0.p);
            let (d, _) = sub3(&t, b);
            d
        }
    }

    fn mod_mul_limbs(&self, a: &[u64; 3], b: &[u64; 3]) -> [u64; 3] {
        match self.0.small_p {
            Some(p) => {
                let v = (a[0] as u128) * (b[0] as u128) % (p as u128);
                [v as u64, 0, 0]
            }
            None => {
                let wide = mul33(a, b);
                self.reduce_wide(&wide)
            }
        }
    }
}

/// A canonical residue of a prime field, tagged with its field parameters.
#[derive(Clone)]
pub struct FieldElement {
    limbs: [u64; 3],
    field: FieldParams,
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.limbs[2] == 0 && self.limbs[1] == 0 {
            write!(f, "fe({}:{})", self.field.label(), self.limbs[0])
        } else {
            write!(
                f,
                "fe({}:0x{:x}{:016x}{:016x})",
                self.field.label(),
                self.limbs[2],
                self.limbs[1],
                self.limbs[0]
            )
        }
    }
}

impl PartialEq for FieldElement {
    fn eq(&self, other: &Self) -> bool {
        self.limbs == other.limbs && self.field == other.field
    }
}
impl Eq for FieldElement {}

impl FieldElement {
    pub fn field(&self) -> &FieldParams {
        &self.field
    }

    pub fn is_zero(&self) -> bool {
        self.limbs == [0; 3]
    }

    /// The value as a u128. Panics if the value needs the carry limb; callers
    /// use this for test fields and hash-derived 128-bit values only.
    pub fn as_u128(&self) -> u128 {
        assert_eq!(self.limbs[2], 0, "value exceeds 128 bits");
        (self.limbs[0] as u128) | ((self.limbs[1] as u128) << 64)
    }

    pub fn as_u64(&self) -> u64 {
        assert!(self.limbs[2] == 0 && self.limbs[1] == 0);
        self.limbs[0]
    }

    /// Canonical fixed-width little-endian encoding (17 bytes for the
    /// production field: 16 value bytes plus one carry byte).
    pub fn encode(&self) -> Vec<u8> {
        let len = self.field.0.enc_len;
        let mut raw = [0u8; 24];
        raw[0..8].copy_from_slice(&self.limbs[0].to_le_bytes());
        raw[8..16].copy_from_slice(&self.limbs[1].to_le_bytes());
        raw[16..24].copy_from_slice(&self.limbs[2].to_le_bytes());
        raw[..len].to_vec()
    }

    fn ensure_same_field(&self, other: &FieldElement) -> Result<()> {
        if self.field != other.field {
            return Err(Error::FieldMismatch(format!(
                "{} vs {}",
                self.field.label(),
                other.field.label()
            )));
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &FieldElement) -> Result<FieldElement> {
        self.ensure_same_field(other)?;
        Ok(FieldElement {
            limbs: self.field.mod_add_limbs(&self.limbs, &other.limbs),
            field: self.field.clone(),
        })
    }

    pub fn checked_sub(&self, other: &FieldElement) -> Result<FieldElement> {
        self.ensure_same_field(other)?;
        Ok(FieldElement {
            limbs: self.field.mod_sub_limbs(&self.limbs, &other.limbs),
            field: self.field.clone(),
        })
    }

    pub fn checked_mul(&self, other: &FieldElement) -> Result<FieldElement> {
        self.ensure_same_field(other)?;
        Ok(FieldElement {
            limbs: self.field.mod_mul_limbs(&self.limbs, &other.limbs),
            field: self.field.clone(),
        })
    }

    pub fn neg(&self) -> FieldElement {
        FieldElement {
            limbs: self.field.mod_sub_limbs(&[0; 3], &self.limbs),
            field: self.field.clone(),
        }
    }

    pub fn double(&self) -> FieldElement {
        self.add(self)
    }

    pub fn square(&self) -> FieldElement {
        self.mul(self)
    }

    pub fn cube(&self) -> FieldElement {
        self.square().mul(self)
    }

    /// Modular exponentiation with a little-endian limb exponent.
    pub fn pow_limbs(&self, exp: &[u64; 3]) -> FieldElement {
        let mut acc = self.field.one();
        let mut started = false;
        for limb_idx in (0..3).rev() {
            for bit in (0..64).rev() {
                if started {
                    acc = acc.square();
                }
                if (exp[limb_idx] >> bit) & 1 == 1 {
                    if started {
                        acc = acc.mul(self);
                    } else {
                        acc = self.clone();
                        started = true;
                    }
                }
            }
        }
        if started {
            acc
        } else {
            self.field.one()
        }
    }

    /// Multiplicative inverse via `a^(p-2)`.
    pub fn inverse(&self) -> Result<FieldElement> {
        if self.is_zero() {
            return Err(Error::DivisionByZero);
        }
        let exp = self.field.0.p_minus_2;
        Ok(self.pow_limbs(&exp))
    }

    /// The inverse of the cube map, `a^((2p-1)/3)`.
    pub fn cube_root(&self) -> FieldElement {
        let exp = self.field.0.cube_inv_exp;
        self.pow_limbs(&exp)
    }

    // Unchecked operator-style helpers; panic on mixed fields, which is a
    // programming error inside the engine.
    pub fn add(&self, other: &FieldElement) -> FieldElement {
        self.checked_add(other).expect("field mismatch")
    }
    pub fn sub(&self, other: &FieldElement) -> FieldElement {
        self.checked_sub(other).expect("field mismatch")
    }
    pub fn mul(&self, other: &FieldElement) -> FieldElement {
        self.checked_mul(other).expect("field mismatch")
    }
    pub fn mul_u64(&self, k: u64) -> FieldElement {
        self.mul(&self.field.element_from_u64(k))
    }
}

// ---- limb primitives ----

fn cmp3(a: &[u64; 3], b: &[u64; 3]) -> Ordering {
    for i in (0..3).rev() {
        match a[i].cmp(&b[i]) {
            Ordering::Equal => continue,
            ord => return ord,
        }
    }
    Ordering::Equal
}

fn add3(a: &[u64; 3], b: &[u64; 3]) -> ([u64; 3], u64) {
    let mut out = [0u64; 3];
    let mut carry = 0u64;
    for i in 0..3 {
        let s = a[i] as u128 + b[i] as u128 + carry as u128;
        out[i] = s as u64;
        carry = (s >> 64) as u64;
    }
    (out, carry)
}

fn sub3(a: &[u64; 3], b: &[u64; 3]) -> ([u64; 3], u64) {
    let mut out = [0u64; 3];
    let mut borrow = 0u64;
    for i in 0..3 {
        let (d1, b1) = a[i].overflowing_sub(b[i]);
        let (d2, b2) = d1.overflowing_sub(borrow);
        out[i] = d2;
        borrow = (b1 | b2) as u64;
    }
    (out, borrow)
}

fn mul33(a: &[u64; 3], b: &[u64; 3]) -> [u64; 6] {
    let mut out = [0u64; 6];
    for i in 0..3 {
        let mut carry: u128 = 0;
        for j in 0..3 {
            let t = out[i + j] as u128 + (a[i] as u128) * (b[j] as u128) + carry;
            out[i + j] = t as u64;
            carry = t >> 64;
        }
        out[i + 3] = carry as u64;
    }
    out
}

fn mul4_small(a: &[u64; 4], c: u64) -> [u64; 5] {
    let mut out = [0u64; 5];
    let mut carry: u128 = 0;
    for i in 0..4 {
        let t = (a[i] as u128) * (c as u128) + carry;
        out[i] = t as u64;
        carry = t >> 64;
    }
    out[4] = carry as u64;
    out
}

/// `x / 3` for an exactly divisible 3-limb value.
fn div3(x: &[u64; 3]) -> [u64; 3] {
    let mut out = [0u64; 3];
    let mut rem: u128 = 0;
    for i in (0..3).rev() {
        let cur = (rem << 64) | x[i] as u128;
        out[i] = (cur / 3) as u64;
        rem = cur % 3;
    }
    assert_eq!(rem, 0, "exponent not divisible by 3");
    out
}

/// Deterministic Miller-Rabin for u64 (the first 12 prime bases are a proven
/// witness set for all 64-bit integers).
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut r = 0;
    while d % 2 == 0 {
        d /= 2;
        r += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..r - 1 {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn mul_mod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128) * (b as u128) % (m as u128)) as u64
}

fn pow_mod_u64(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod_u64(acc, base, m);
        }
        base = mul_mod_u64(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Returns the production field parameters.
///
/// The modulus is a build-time constant; the test suite re-derives it by
/// searching upward from `2^128` and re-checks primality.
pub fn select_production_prime() -> FieldParams {
    FieldParams::production()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn to_big(fe: &FieldElement) -> BigUint {
        let mut bytes = [0u8; 24];
        bytes[0..8].copy_from_slice(&fe.limbs[0].to_le_bytes());
        bytes[8..16].copy_from_slice(&fe.limbs[1].to_le_bytes());
        bytes[16..24].copy_from_slice(&fe.limbs[2].to_le_bytes());
        BigUint::from_bytes_le(&bytes)
    }

    fn modulus_big(f: &FieldParams) -> BigUint {
        let p = f.modulus_limbs();
        let mut bytes = [0u8; 24];
        bytes[0..8].copy_from_slice(&p[0].to_le_bytes());
        bytes[8..16].copy_from_slice(&p[1].to_le_bytes());
        bytes[16..24].copy_from_slice(&p[2].to_le_bytes());
        BigUint::from_bytes_le(&bytes)
    }

    #[test]
    fn add_mul_inv_match_spec_examples_f11() {
        let f = FieldParams::test11();
        let a = f.element_from_u64(7);
        let b = f.element_from_u64(8);
        assert_eq!(a.add(&b), f.element_from_u64(4));

        let x = f.element_from_u64(3);
        let y = f.element_from_u64(4);
        assert_eq!(x.mul(&y), f.element_from_u64(1));

        // Exhaustive search confirms 3^-1 = 4 in F_11.
        let inv = x.inverse().unwrap();
        assert_eq!(inv, f.element_from_u64(4));
        for cand in 0..11u64 {
            let c = f.element_from_u64(cand);
            if x.mul(&c) == f.one() {
                assert_eq!(c, inv);
            }
        }
    }

    #[test]
    fn identities_and_inverses() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for f in [FieldParams::test11(), FieldParams::test101(), FieldParams::production()] {
            for _ in 0..50 {
                let x = f.random(&mut rng);
                assert_eq!(x.add(&f.zero()), x);
                assert_eq!(x.mul(&f.one()), x);
                assert_eq!(x.add(&x.neg()), f.zero());
                if !x.is_zero() {
                    assert_eq!(x.mul(&x.inverse().unwrap()), f.one());
                }
            }
        }
    }

    #[test]
    fn inversion_of_zero_rejected() {
        let f = FieldParams::production();
        assert!(matches!(f.zero().inverse(), Err(Error::DivisionByZero)));
    }

    #[test]
    fn mixed_field_operations_rejected() {
        let a = FieldParams::test11().element_from_u64(3);
        let b = FieldParams::test101().element_from_u64(3);
        assert!(matches!(a.checked_add(&b), Err(Error::FieldMismatch(_))));
        assert!(matches!(a.checked_mul(&b), Err(Error::FieldMismatch(_))));
    }

    #[test]
    fn production_prime_is_smallest_valid_candidate() {
        // Smallest prime above 2^128 with p = 2 mod 3. 2^128 = 1 mod 3, so
        // candidate offsets are odd and congruent to 1 mod 3.
        let two128 = BigUint::from(1u8) << 128;
        let mut offset = 1u64;
        loop {
            if offset % 3 == 1 && offset % 2 == 1 {
                let cand = &two128 + BigUint::from(offset);
                if miller_rabin_big(&cand) {
                    break;
                }
            }
            offset += 1;
        }
        assert_eq!(offset, PRODUCTION_OFFSET);

        let f = select_production_prime();
        assert!(miller_rabin_big(&modulus_big(&f)));
        // p mod 3 = 2 implies gcd(3, p-1) = 1.
        assert_eq!(modulus_big(&f) % 3u8, BigUint::from(2u8));
        assert_eq!((modulus_big(&f) - 1u8) % 3u8, BigUint::from(1u8));
    }

    #[test]
    fn production_mimc_rounds_is_ceil_log3() {
        let f = FieldParams::production();
        let p = modulus_big(&f);
        let three = BigUint::from(3u8);
        let mut r = 0u32;
        let mut t = BigUint::from(1u8);
        while t < p {
            t *= &three;
            r += 1;
        }
        assert_eq!(r, 81);
        assert_eq!(f.mimc_rounds(), r);
        // Sanity for the test fields too.
        assert_eq!(FieldParams::test11().mimc_rounds(), 3);
        assert_eq!(FieldParams::test101().mimc_rounds(), 5);
    }

    fn miller_rabin_big(n: &BigUint) -> bool {
        let one = BigUint::from(1u8);
        let two = BigUint::from(2u8);
        if n < &two {
            return false;
        }
        let n_minus_1 = n - &one;
        let mut d = n_minus_1.clone();
        let mut r = 0u32;
        while &d % 2u8 == BigUint::from(0u8) {
            d >>= 1;
            r += 1;
        }
        for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53] {
            let a = BigUint::from(a);
            if &a >= n {
                continue;
            }
            let mut x = a.modpow(&d, n);
            if x == one || x == n_minus_1 {
                continue;
            }
            let mut witness = true;
            for _ in 0..r.saturating_sub(1) {
                x = x.modpow(&two, n);
                if x == n_minus_1 {
                    witness = false;
                    break;
                }
            }
            if witness {
                return false;
            }
        }
        true
    }

    #[test]
    fn cube_is_bijection_on_test_fields() {
        for f in [FieldParams::test11(), FieldParams::test101()] {
            let p = f.modulus_limbs()[0];
            let mut seen = vec![false; p as usize];
            for v in 0..p {
                let c = f.element_from_u64(v).cube();
                let idx = c.as_u64() as usize;
                assert!(!seen[idx], "cube map collision in {}", f.label());
                seen[idx] = true;
            }
            // And the published inverse exponent really inverts it.
            for v in 0..p {
                let x = f.element_from_u64(v);
                assert_eq!(x.cube().cube_root(), x);
            }
        }
    }

    #[test]
    fn cube_root_inverts_cube_in_production_field() {
        let f = FieldParams::production();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..50 {
            let x = f.random(&mut rng);
            assert_eq!(x.cube().cube_root(), x);
        }
    }

    #[test]
    fn encoding_round_trips_and_rejects_noncanonical() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for f in [FieldParams::test11(), FieldParams::test101(), FieldParams::production()] {
            for _ in 0..100 {
                let x = f.random(&mut rng);
                let enc = x.encode();
                assert_eq!(enc.len(), f.encoded_len());
                assert_eq!(f.decode(&enc).unwrap(), x);
            }
        }
        let prod = FieldParams::production();
        assert_eq!(prod.encoded_len(), 17);
        // p itself must be rejected.
        let mut enc = vec![0u8; 17];
        enc[0] = (PRODUCTION_OFFSET & 0xff) as u8;
        enc[1] = (PRODUCTION_OFFSET >> 8) as u8;
        enc[16] = 1;
        assert!(prod.decode(&enc).is_err());
        assert!(prod.decode(&[0u8; 16]).is_err());
    }

    #[test]
    fn small_field_validation() {
        assert!(FieldParams::new_small(7, "f7").is_err()); // 7 = 1 mod 3
        assert!(FieldParams::new_small(9, "f9").is_err()); // not prime
        let f = FieldParams::new_small((1 << 19) + 21, "f19").unwrap();
        assert_eq!(f.mimc_rounds(), 12);
        assert_eq!(f.encoded_len(), 3);
    }

    proptest! {
        #[test]
        fn arithmetic_matches_bigint_oracle(a0 in any::<u128>(), b0 in any::<u128>(), seed in any::<u64>()) {
            let _ = seed;
            for f in [FieldParams::test101(), FieldParams::production()] {
                let p = modulus_big(&f);
                let a = f.element_from_u128(a0);
                let b = f.element_from_u128(b0);
                let (ba, bb) = (to_big(&a), to_big(&b));
                prop_assert_eq!(to_big(&a.add(&b)), (&ba + &bb) % &p);
                prop_assert_eq!(to_big(&a.mul(&b)), (&ba * &bb) % &p);
                prop_assert_eq!(to_big(&a.sub(&b)), ((&p + &ba) - &bb) % &p);
            }
        }

        #[test]
        fn field_axioms_hold(x in any::<u128>(), y in any::<u128>(), z in any::<u128>()) {
            for f in [FieldParams::test11(), FieldParams::test101(), FieldParams::production()] {
                let (a, b, c) = (f.element_from_u128(x), f.element_from_u128(y), f.element_from_u128(z));
                prop_assert_eq!(a.add(&b), b.add(&a));
                prop_assert_eq!(a.mul(&b), b.mul(&a));
                prop_assert_eq!(a.add(&b).add(&c), a.add(&b.add(&c)));
                prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
                prop_assert_eq!(a.mul(&b.add(&c)), a.mul(&b).add(&a.mul(&c)));
            }
        }
    }
}
