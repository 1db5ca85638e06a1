//! Secret-shared equality testing and oblivious row selection.
//!
//! Equality of two shared values with plaintexts below `2^k` is decided by
//! masking: square the difference (one multiplication; the square kills the
//! sign and stays below `2^2k` as an integer), add a random `2k+s`-bit value
//! assembled from dealer bits, open the sum, and compare the public bit
//! string against the shared mask bits with a binary multiplication tree.
//! The opened value statistically hides the difference (parameter `s`); the
//! field must satisfy `p > 2^(2k+s+2)` so nothing wraps.
//!
//! Per call and with full batching this costs `2 + ceil(log2(2k+s))`
//! rounds, independent of how many pairs are compared.

use crate::engine::Session;
use crate::share::RepShare;
use crate::transport::SessionChannel;
use crate::{Error, Result};

/// Parameters of the masked equality test.
#[derive(Clone, Copy, Debug)]
pub struct EqzConfig {
    /// Plaintext bit bound of the compared values.
    pub k: u32,
    /// Statistical masking parameter.
    pub s: u32,
    /// Arity of the combining tree (always 2).
    pub tree_arity: u32,
}

impl EqzConfig {
    /// Production setting: 32-bit vehicle ids, 40-bit statistical masking.
    pub fn production() -> EqzConfig {
        EqzConfig { k: 32, s: 40, tree_arity: 2 }
    }

    pub fn new(k: u32, s: u32) -> EqzConfig {
        EqzConfig { k, s, tree_arity: 2 }
    }

    /// Number of dealer bits consumed per comparison.
    pub fn mask_bits(&self) -> u32 {
        2 * self.k + self.s
    }

    /// Batched online rounds per call: square, open, tree.
    pub fn expected_rounds(&self) -> u64 {
        2 + (self.mask_bits() as f64).log2().ceil() as u64
    }

    fn validate<C: SessionChannel>(&self, session: &Session<'_, C>) -> Result<()> {
        let need_bits = 2 * self.k + self.s + 2;
        let p = session.field().modulus_limbs();
        // Modulus bit length from limbs.
        let p_bits = if p[2] != 0 {
            128 + 64 - p[2].leading_zeros()
        } else if p[1] != 0 {
            64 + 64 - p[1].leading_zeros()
        } else {
            64 - p[0].leading_zeros()
        };
        if p_bits <= need_bits {
            return Err(Error::Parameter(format!(
                "field {} too small for eqz with k={}, s={} (needs p > 2^{})",
                session.field().label(),
                self.k,
                self.s,
                need_bits
            )));
        }
        Ok(())
    }
}

/// Batched equality test: returns shares of `1` where `x = y`, else of `0`.
///
/// All pairs are processed in the same layers, so the round cost does not
/// depend on the batch size.
pub fn eqz_pair_vec<C: SessionChannel>(
    session: &mut Session<'_, C>,
    xs: &[RepShare],
    ys: &[RepShare],
    cfg: &EqzConfig,
) -> Result<Vec<RepShare>> {
    if xs.len() != ys.len() {
        return Err(Error::Parameter("eqz batch length mismatch".into()));
    }
    cfg.validate(session)?;
    if xs.is_empty() {
        return Ok(vec![]);
    }
    let field = session.field().clone();
    let mask_bits = cfg.mask_bits() as usize;
    if session.tape.remaining_random_bits() < (mask_bits * xs.len()) as u64 {
        return Err(Error::PreprocessingExhausted(format!(
            "eqz needs {} random bits, tape has {}",
            mask_bits * xs.len(),
            session.tape.remaining_random_bits()
        )));
    }

    // Layer 1: d = (x - y)^2 for every pair.
    let diffs: Vec<RepShare> = xs.iter().zip(ys).map(|(x, y)| x.sub(y)).collect();
    let d = session.mul_vec(&diffs, &diffs)?;

    // Mask each d with sum(b_j * 2^j) over fresh dealer bits.
    let mut row_bits: Vec<Vec<RepShare>> = Vec::with_capacity(xs.len());
    let mut masked: Vec<RepShare> = Vec::with_capacity(xs.len());
    for d_i in &d {
        let mut bits = Vec::with_capacity(mask_bits);
        let mut r = RepShare::constant(session.party(), &field.zero());
        let mut pow = field.one();
        let two = field.element_from_u64(2);
        for _ in 0..mask_bits {
            let b = session.tape.next_random_bit()?;
            r = r.add(&b.scale(&pow));
            bits.push(b);
            pow = pow.mul(&two);
        }
        masked.push(d_i.add(&r));
        row_bits.push(bits);
    }

    // Layer 2: open the masked values.
    let opened = session.open_vec(&masked)?;

    // Local: e_j = c_j XOR b_j; factors (1 - e_j) feed the tree. A public
    // overflow past 2^mask_bits means d != 0 outright.
    let mut factors: Vec<Vec<RepShare>> = Vec::with_capacity(xs.len());
    let mut public_zero = vec![false; xs.len()];
    for (row, (c, bits)) in opened.iter().zip(&row_bits).enumerate() {
        let c_int = c.as_u128();
        if c_int >> mask_bits != 0 {
            public_zero[row] = true;
            factors.push(vec![]);
            continue;
        }
        let mut fs = Vec::with_capacity(mask_bits);
        for (j, b) in bits.iter().enumerate() {
            let c_j = (c_int >> j) & 1 == 1;
            // 1 - (c_j + b - 2 c_j b) = if c_j { b } else { 1 - b }.
            let f = if c_j {
                b.clone()
            } else {
                b.neg().add_constant(&field.one())
            };
            fs.push(f);
        }
        factors.push(fs);
    }

    // Binary multiplication tree, batched across rows per level.
    let levels = (cfg.mask_bits() as f64).log2().ceil() as usize;
    for _ in 0..levels {
        let mut lhs = Vec::new();
        let mut rhs = Vec::new();
        let mut slots: Vec<(usize, usize)> = Vec::new(); // (row, out idx)
        let mut next: Vec<Vec<RepShare>> = Vec::with_capacity(factors.len());
        for (row, fs) in factors.iter().enumerate() {
            let mut out = Vec::with_capacity(fs.len().div_ceil(2));
            let mut i = 0;
            while i + 1 < fs.len() {
                slots.push((row, out.len()));
                lhs.push(fs[i].clone());
                rhs.push(fs[i + 1].clone());
                out.push(RepShare::constant(session.party(), &field.zero()));
                i += 2;
            }
            if i < fs.len() {
                out.push(fs[i].clone());
            }
            next.push(out);
        }
        let products = session.mul_vec(&lhs, &rhs)?;
        for ((row, idx), prod) in slots.into_iter().zip(products) {
            next[row][idx] = prod;
        }
        factors = next;
    }

    let mut results = Vec::with_capacity(xs.len());
    for (row, fs) in factors.into_iter().enumerate() {
        if public_zero[row] {
            results.push(RepShare::constant(session.party(), &field.zero()));
        } else {
            debug_assert_eq!(fs.len(), 1);
            results.push(fs.into_iter().next().unwrap());
        }
    }
    Ok(results)
}

/// Single-pair convenience wrapper.
pub fn eqz_pair<C: SessionChannel>(
    session: &mut Session<'_, C>,
    x: &RepShare,
    y: &RepShare,
    cfg: &EqzConfig,
) -> Result<RepShare> {
    Ok(eqz_pair_vec(session, std::slice::from_ref(x), std::slice::from_ref(y), cfg)?
        .remove(0))
}

/// Oblivious selection: `sum_y eq_y * row_y`, componentwise over rows of
/// equal width. One multiplication layer (`n * width` products), depth 1.
pub fn select_row<C: SessionChannel>(
    session: &mut Session<'_, C>,
    eq_bits: &[RepShare],
    rows: &[Vec<RepShare>],
) -> Result<Vec<RepShare>> {
    if eq_bits.len() != rows.len() {
        return Err(Error::Parameter(format!(
            "selection needs one bit per row: {} bits, {} rows",
            eq_bits.len(),
            rows.len()
        )));
    }
    if rows.is_empty() {
        return Err(Error::Parameter("selection over zero rows".into()));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Parameter("selection rows have unequal widths".into()));
    }
    let mut lhs = Vec::with_capacity(rows.len() * width);
    let mut rhs = Vec::with_capacity(rows.len() * width);
    for (eq, row) in eq_bits.iter().zip(rows) {
        for component in row {
            lhs.push(eq.clone());
            rhs.push(component.clone());
        }
    }
    let products = session.mul_vec(&lhs, &rhs)?;
    let field = session.field().clone();
    let mut out = vec![RepShare::constant(session.party(), &field.zero()); width];
    for (i, prod) in products.into_iter().enumerate() {
        let comp = i % width;
        out[comp] = out[comp].add(&prod);
    }
    Ok(out)
}
