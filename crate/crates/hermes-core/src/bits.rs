//! Packed GF(2) bit vectors: the wire values of the Boolean backend.

use crate::{Error, Result};

/// An ordered sequence of bits packed into 64-bit words, low bit first.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BitVector {
    words: Vec<u64>,
    len: usize,
}

impl BitVector {
    pub fn zeros(len: usize) -> BitVector {
        BitVector { words: vec![0; len.div_ceil(64)], len }
    }

    pub fn from_bits(bits: &[bool]) -> BitVector {
        let mut v = BitVector::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            v.set(i, b);
        }
        v
    }

    /// Random bits from a generator.
    pub fn random(len: usize, rng: &mut impl rand::RngCore) -> BitVector {
        let mut v = BitVector::zeros(len);
        for w in v.words.iter_mut() {
            *w = rng.next_u64();
        }
        v.mask_tail();
        v
    }

    /// Interprets bytes as a bit stream, most significant bit of each byte
    /// first. This is the convention used to map 128-bit protocol blocks
    /// onto circuit wires.
    pub fn from_bytes_msb_first(bytes: &[u8]) -> BitVector {
        let mut v = BitVector::zeros(bytes.len() * 8);
        for (byte_idx, &byte) in bytes.iter().enumerate() {
            for bit in 0..8 {
                v.set(byte_idx * 8 + bit, (byte >> (7 - bit)) & 1 == 1);
            }
        }
        v
    }

    /// Inverse of [`from_bytes_msb_first`]; length must be a byte multiple.
    pub fn to_bytes_msb_first(&self) -> Vec<u8> {
        assert_eq!(self.len % 8, 0, "bit length not byte aligned");
        let mut out = vec![0u8; self.len / 8];
        for i in 0..self.len {
            if self.get(i) {
                out[i / 8] |= 1 << (7 - (i % 8));
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        assert!(i < self.len);
        let mask = 1u64 << (i % 64);
        if v {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn xor(&self, other: &BitVector) -> BitVector {
        assert_eq!(self.len, other.len, "length mismatch");
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a ^ b).collect();
        BitVector { words, len: self.len }
    }

    pub fn and(&self, other: &BitVector) -> BitVector {
        assert_eq!(self.len, other.len, "length mismatch");
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect();
        BitVector { words, len: self.len }
    }

    pub fn not(&self) -> BitVector {
        let mut out = BitVector {
            words: self.words.iter().map(|w| !w).collect(),
            len: self.len,
        };
        out.mask_tail();
        out
    }

    pub fn popcount(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> BitVector {
        assert!(range.end <= self.len);
        let mut out = BitVector::zeros(range.len());
        for (j, i) in range.enumerate() {
            out.set(j, self.get(i));
        }
        out
    }

    pub fn concat(&self, other: &BitVector) -> BitVector {
        let mut out = BitVector::zeros(self.len + other.len);
        for i in 0..self.len {
            out.set(i, self.get(i));
        }
        for i in 0..other.len {
            out.set(self.len + i, other.get(i));
        }
        out
    }

    /// Wire encoding: u32 little-endian bit length, then packed u64 words
    /// little-endian, low bit = index 0.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.words.len() * 8);
        out.extend_from_slice(&(self.len as u32).to_le_bytes());
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<BitVector> {
        if bytes.len() < 4 {
            return Err(Error::Encoding("bit vector too short".into()));
        }
        let len = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let n_words = len.div_ceil(64);
        if bytes.len() != 4 + n_words * 8 {
            return Err(Error::Encoding(format!(
                "bit vector length {} inconsistent with payload {}",
                len,
                bytes.len()
            )));
        }
        let mut words = Vec::with_capacity(n_words);
        for i in 0..n_words {
            words.push(u64::from_le_bytes(bytes[4 + i * 8..12 + i * 8].try_into().unwrap()));
        }
        let mut v = BitVector { words, len };
        // Reject garbage beyond the declared length.
        let masked = {
            let mut c = v.clone();
            c.mask_tail();
            c
        };
        if masked.words != v.words {
            return Err(Error::Encoding("bit vector has set bits past its length".into()));
        }
        v.mask_tail();
        Ok(v)
    }

    fn mask_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }
}
