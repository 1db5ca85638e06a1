//! The arithmetic-circuit cipher suite: MiMC over the prime field, tweaked
//! CTR encryption, the Enc-then-Hash-then-MAC authentication tag, and the
//! consumer-side key derivation.
//!
//! The block cipher is the iterated cube map `x_{i+1} = (x_i + k + c_i)^3`
//! with `c_0 = 0`, output `x_r + k`, and `r = ceil(log3 p)` rounds.
//! Decryption inverts each round with the cube root `y^((2p-1)/3)` and only
//! exists in the clear (the vehicle and consumer sides). Under shares a
//! round is one masked opening against a dealer cube tuple, so one shared
//! call costs `r` rounds of communication and any number of parallel calls
//! batch into the same `r` rounds.

use std::sync::Arc;

use sha3::{Digest, Sha3_256};

use crate::engine::{CubeHandle, Layer, LayerOutput, Session};
use crate::field::{FieldElement, FieldParams};
use crate::share::RepShare;
use crate::transport::SessionChannel;
use crate::{Error, Result};

/// Domain tag for the nothing-up-my-sleeve round constants.
const ROUND_CONSTANT_TAG: &[u8] = b"HERMES-MIMC-v1";

/// Round constants for one field: `c_0 = 0`,
/// `c_i = SHA3-256(tag || i) mod p`.
#[derive(Clone, Debug)]
pub struct MimcParams {
    field: FieldParams,
    constants: Arc<Vec<FieldElement>>,
}

impl MimcParams {
    pub fn for_field(field: &FieldParams) -> MimcParams {
        let r = field.mimc_rounds() as usize;
        let mut constants = Vec::with_capacity(r);
        constants.push(field.zero());
        for i in 1..r {
            let mut h = Sha3_256::new();
            h.update(ROUND_CONSTANT_TAG);
            h.update((i as u64).to_be_bytes());
            constants.push(field.element_from_bytes_reduced(&h.finalize()));
        }
        MimcParams { field: field.clone(), constants: Arc::new(constants) }
    }

    /// Explicit constants, for worked examples and cross-checks.
    pub fn with_constants(field: &FieldParams, constants: Vec<FieldElement>) -> MimcParams {
        assert_eq!(constants.len(), field.mimc_rounds() as usize);
        assert!(constants[0].is_zero(), "first round constant must be zero");
        MimcParams { field: field.clone(), constants: Arc::new(constants) }
    }

    pub fn field(&self) -> &FieldParams {
        &self.field
    }

    pub fn rounds(&self) -> usize {
        self.constants.len()
    }

    pub fn constant(&self, round: usize) -> &FieldElement {
        &self.constants[round]
    }
}

/// Cleartext block encryption.
pub fn mimc_encrypt(params: &MimcParams, key: &FieldElement, x: &FieldElement) -> FieldElement {
    let mut state = x.clone();
    for c in params.constants.iter() {
        state = state.add(key).add(c).cube();
    }
    state.add(key)
}

/// Cleartext block decryption via the inverse cube map.
pub fn mimc_decrypt(params: &MimcParams, key: &FieldElement, y: &FieldElement) -> FieldElement {
    let mut state = y.sub(key);
    for c in params.constants.iter().rev() {
        state = state.cube_root().sub(key).sub(c);
    }
    state
}

/// A nonce plus ciphertext blocks; the nonce is public.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggedCiphertext {
    pub nonce: FieldElement,
    pub blocks: Vec<FieldElement>,
}

impl TaggedCiphertext {
    /// Wire form: nonce, u16 little-endian block count, blocks, all in
    /// canonical field encoding. This is also the exact byte string hashed
    /// by the authentication tag.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.nonce.encode();
        out.extend_from_slice(&(self.blocks.len() as u16).to_le_bytes());
        for b in &self.blocks {
            out.extend_from_slice(&b.encode());
        }
        out
    }

    pub fn decode(field: &FieldParams, bytes: &[u8]) -> Result<TaggedCiphertext> {
        let w = field.encoded_len();
        if bytes.len() < w + 2 {
            return Err(Error::Encoding("ciphertext too short".into()));
        }
        let nonce = field.decode(&bytes[..w])?;
        let count = u16::from_le_bytes(bytes[w..w + 2].try_into().unwrap()) as usize;
        if bytes.len() != w + 2 + count * w {
            return Err(Error::Encoding("ciphertext length mismatch".into()));
        }
        let blocks = bytes[w + 2..]
            .chunks(w)
            .map(|c| field.decode(c))
            .collect::<Result<Vec<_>>>()?;
        Ok(TaggedCiphertext { nonce, blocks })
    }
}

/// Cleartext CTR encryption: tweak `N = E_key(eta)`, then
/// `ct_j = m_j + E_key(N + j)` for `j = 1..len`.
pub fn ctr_encrypt(
    params: &MimcParams,
    key: &FieldElement,
    eta: &FieldElement,
    blocks: &[FieldElement],
) -> TaggedCiphertext {
    let tweak = mimc_encrypt(params, key, eta);
    let out = blocks
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let ctr = tweak.add(&params.field.element_from_u64(j as u64 + 1));
            m.add(&mimc_encrypt(params, key, &ctr))
        })
        .collect();
    TaggedCiphertext { nonce: eta.clone(), blocks: out }
}

/// Cleartext CTR decryption (left inverse of [`ctr_encrypt`]).
pub fn ctr_decrypt(
    params: &MimcParams,
    key: &FieldElement,
    ct: &TaggedCiphertext,
) -> Vec<FieldElement> {
    let tweak = mimc_encrypt(params, key, &ct.nonce);
    ct.blocks
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let ctr = tweak.add(&params.field.element_from_u64(j as u64 + 1));
            c.sub(&mimc_encrypt(params, key, &ctr))
        })
        .collect()
}

/// Truncated hash for the authentication tag: the first 128 bits of
/// SHA3-256 over the ciphertext wire bytes, read little-endian into the
/// field (always below p in the production field).
pub fn tag_hash(field: &FieldParams, ct: &TaggedCiphertext) -> FieldElement {
    let digest = Sha3_256::digest(ct.encode());
    field.element_from_bytes_reduced(&digest[..16])
}

/// Cleartext Enc-then-Hash-then-MAC over message blocks. Returns the tag
/// and the inner ciphertext (nonce fixed to 1; tag keys are one-shot).
pub fn htmac_tag(
    params: &MimcParams,
    k_tag_enc: &FieldElement,
    k_tag_mac: &FieldElement,
    blocks: &[FieldElement],
) -> (FieldElement, TaggedCiphertext) {
    let ct = ctr_encrypt(params, k_tag_enc, &params.field.one(), blocks);
    let h = tag_hash(&params.field, &ct);
    (mimc_encrypt(params, k_tag_mac, &h), ct)
}

/// Consumer-side verification: recomputes the tag from the known message.
pub fn htmac_verify(
    params: &MimcParams,
    k_tag_enc: &FieldElement,
    k_tag_mac: &FieldElement,
    blocks: &[FieldElement],
    tag: &FieldElement,
) -> bool {
    htmac_tag(params, k_tag_enc, k_tag_mac, blocks).0 == *tag
}

// ---------------------------------------------------------------------------
// Session keys
// ---------------------------------------------------------------------------

/// The consumer's per-booking key material.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionKeys {
    pub enc: FieldElement,
    pub tag_enc: FieldElement,
    pub tag_mac: FieldElement,
    pub counter: u64,
}

/// Derives the three session keys from a master key and a fresh counter:
/// `E_master(3c)`, `E_master(3c+1)`, `E_master(3c+2)`.
pub fn kdf(params: &MimcParams, master: &FieldElement, counter: u64) -> SessionKeys {
    let base = 3u128 * counter as u128;
    let e = |off: u128| {
        mimc_encrypt(params, master, &params.field.element_from_u128(base + off))
    };
    SessionKeys { enc: e(0), tag_enc: e(1), tag_mac: e(2), counter }
}

/// Monotone counter watermark; refuses reuse. The consumer persists this
/// next to its master key.
#[derive(Clone, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct CounterWatermark {
    highest_used: Option<u64>,
}

impl CounterWatermark {
    pub fn claim(&mut self, counter: u64) -> Result<()> {
        if let Some(h) = self.highest_used {
            if counter <= h {
                return Err(Error::CounterReuse(counter));
            }
        }
        self.highest_used = Some(counter);
        Ok(())
    }

    pub fn highest(&self) -> Option<u64> {
        self.highest_used
    }
}

// ---------------------------------------------------------------------------
// Shared evaluation
// ---------------------------------------------------------------------------

/// One in-progress MiMC call over shares: `r` masked cube rounds, stepped
/// one layer at a time so many chains at different phases can share layers.
pub struct MimcChain {
    params: MimcParams,
    key: RepShare,
    state: RepShare,
    round: usize,
    pending: Option<CubeHandle>,
}

impl MimcChain {
    pub fn new(params: &MimcParams, key: RepShare, input: RepShare) -> MimcChain {
        MimcChain { params: params.clone(), key, state: input, round: 0, pending: None }
    }

    pub fn is_done(&self) -> bool {
        self.round >= self.params.rounds()
    }

    /// Queues this chain's next cube into the current layer.
    pub fn queue<C: SessionChannel>(&mut self, layer: &mut Layer<'_, '_, C>) -> Result<()> {
        if self.is_done() {
            return Ok(());
        }
        let c = self.params.constant(self.round);
        let input = self.state.add(&self.key).add_constant(c);
        self.pending = Some(layer.cube(&input)?);
        Ok(())
    }

    /// Consumes this chain's cube result from the committed layer.
    pub fn absorb(&mut self, out: &LayerOutput) {
        if let Some(h) = self.pending.take() {
            self.state = out.cube(h).clone();
            self.round += 1;
        }
    }

    /// Final whitening; valid once all rounds have run.
    pub fn output(&self) -> RepShare {
        assert!(self.is_done(), "MiMC chain still running");
        self.state.add(&self.key)
    }
}

/// Runs a batch of shared MiMC calls to completion: exactly `r` rounds of
/// communication however many chains are passed.
pub fn run_chains<C: SessionChannel>(
    session: &mut Session<'_, C>,
    chains: &mut [MimcChain],
) -> Result<()> {
    while chains.iter().any(|c| !c.is_done()) {
        let mut layer = session.begin_layer();
        for chain in chains.iter_mut() {
            chain.queue(&mut layer)?;
        }
        let out = layer.commit()?;
        for chain in chains.iter_mut() {
            chain.absorb(&out);
        }
    }
    Ok(())
}

/// Whole-call shared encryption of one block.
pub fn mimc_encrypt_shared<C: SessionChannel>(
    session: &mut Session<'_, C>,
    params: &MimcParams,
    key: &RepShare,
    x: &RepShare,
) -> Result<RepShare> {
    let mut chains = [MimcChain::new(params, key.clone(), x.clone())];
    run_chains(session, &mut chains)?;
    Ok(chains[0].output())
}

/// Shared CTR encryption with an externally supplied tweak share (the
/// session-key layers receive their tweaks with the key bundle; the
/// vehicle-key layer computes its own tweak chain first).
pub fn ctr_encrypt_shared<C: SessionChannel>(
    session: &mut Session<'_, C>,
    params: &MimcParams,
    key: &RepShare,
    tweak: &RepShare,
    blocks: &[RepShare],
) -> Result<Vec<RepShare>> {
    let mut chains: Vec<MimcChain> = (0..blocks.len())
        .map(|j| {
            let ctr = tweak.add_constant(&params.field.element_from_u64(j as u64 + 1));
            MimcChain::new(params, key.clone(), ctr)
        })
        .collect();
    run_chains(session, &mut chains)?;
    Ok(blocks
        .iter()
        .zip(&chains)
        .map(|(m, ks)| m.add(&ks.output()))
        .collect())
}

/// Shared tweak computation `N = E_key(eta)` for the vehicle-key layer.
pub fn tweak_shared<C: SessionChannel>(
    session: &mut Session<'_, C>,
    params: &MimcParams,
    key: &RepShare,
    eta: &FieldElement,
) -> Result<RepShare> {
    let eta_share = RepShare::constant(session.party(), eta);
    mimc_encrypt_shared(session, params, key, &eta_share)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::share::share;
    use crate::tape::{dealer_generate, TapeCounts};
    use crate::transport::run_local_session;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use std::sync::Mutex;

    fn forced_params_f11() -> MimcParams {
        let f = FieldParams::test11();
        MimcParams::with_constants(
            &f,
            vec![f.zero(), f.element_from_u64(5), f.element_from_u64(7)],
        )
    }

    #[test]
    fn worked_example_f11() {
        // k=2, x=3, constants (0,5,7): states 4, 0, 3; output 5.
        let f = FieldParams::test11();
        let params = forced_params_f11();
        let y = mimc_encrypt(&params, &f.element_from_u64(2), &f.element_from_u64(3));
        assert_eq!(y, f.element_from_u64(5));
        let x = mimc_decrypt(&params, &f.element_from_u64(2), &y);
        assert_eq!(x, f.element_from_u64(3));
    }

    #[test]
    fn all_zero_fixed_point() {
        let f = FieldParams::test11();
        let params = MimcParams::with_constants(&f, vec![f.zero(), f.zero(), f.zero()]);
        let y = mimc_encrypt(&params, &f.zero(), &f.zero());
        assert!(y.is_zero());
    }

    #[test]
    fn encryption_is_a_permutation_on_f11() {
        let f = FieldParams::test11();
        let params = MimcParams::for_field(&f);
        let key = f.element_from_u64(6);
        let mut seen = [false; 11];
        for x in 0..11 {
            let y = mimc_encrypt(&params, &key, &f.element_from_u64(x));
            let idx = y.as_u64() as usize;
            assert!(!seen[idx]);
            seen[idx] = true;
        }
    }

    #[test]
    fn production_round_trip() {
        let f = FieldParams::production();
        let params = MimcParams::for_field(&f);
        let mut rng = ChaCha12Rng::seed_from_u64(40);
        for _ in 0..200 {
            let k = f.random(&mut rng);
            let x = f.random(&mut rng);
            let y = mimc_encrypt(&params, &k, &x);
            assert_eq!(mimc_decrypt(&params, &k, &y), x);
        }
        let k = f.random(&mut rng);
        let zero_rt = mimc_decrypt(&params, &k, &mimc_encrypt(&params, &k, &f.zero()));
        assert!(zero_rt.is_zero());
    }

    #[test]
    fn round_constants_are_stable_and_distinct() {
        let f = FieldParams::production();
        let a = MimcParams::for_field(&f);
        let b = MimcParams::for_field(&f);
        assert_eq!(a.rounds(), 81);
        for i in 0..a.rounds() {
            assert_eq!(a.constant(i), b.constant(i));
        }
        assert!(a.constant(0).is_zero());
        assert_ne!(a.constant(1), a.constant(2));
    }

    #[test]
    fn ctr_round_trip_and_zero_message() {
        let f = FieldParams::production();
        let params = MimcParams::for_field(&f);
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let key = f.random(&mut rng);
        let eta = f.element_from_u64(99);
        let msg: Vec<FieldElement> = (0..10).map(|_| f.random(&mut rng)).collect();
        let ct = ctr_encrypt(&params, &key, &eta, &msg);
        assert_eq!(ct.blocks.len(), 10);
        assert_eq!(ctr_decrypt(&params, &key, &ct), msg);

        // All-zero plaintext exposes the raw keystream.
        let zeros = vec![f.zero(); 2];
        let ct0 = ctr_encrypt(&params, &key, &eta, &zeros);
        let tweak = mimc_encrypt(&params, &key, &eta);
        for (j, blk) in ct0.blocks.iter().enumerate() {
            let ctr = tweak.add(&f.element_from_u64(j as u64 + 1));
            assert_eq!(*blk, mimc_encrypt(&params, &key, &ctr));
        }
    }

    #[test]
    fn ciphertext_wire_round_trip() {
        let f = FieldParams::production();
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let ct = TaggedCiphertext {
            nonce: f.element_from_u64(7),
            blocks: (0..4).map(|_| f.random(&mut rng)).collect(),
        };
        let enc = ct.encode();
        assert_eq!(TaggedCiphertext::decode(&f, &enc).unwrap(), ct);
        assert!(TaggedCiphertext::decode(&f, &enc[..10]).is_err());
    }

    #[test]
    fn kdf_determinism_and_distinctness() {
        let f = FieldParams::production();
        let params = MimcParams::for_field(&f);
        let mut rng = ChaCha12Rng::seed_from_u64(43);
        let master = f.random(&mut rng);
        let k1 = kdf(&params, &master, 1);
        let k1_again = kdf(&params, &master, 1);
        assert_eq!(k1, k1_again);
        let k2 = kdf(&params, &master, 2);
        let all = [
            &k1.enc, &k1.tag_enc, &k1.tag_mac, &k2.enc, &k2.tag_enc, &k2.tag_mac,
        ];
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                assert_ne!(all[i], all[j]);
            }
        }
    }

    #[test]
    fn kdf_toy_field_matches_definition() {
        let f = FieldParams::test11();
        let params = MimcParams::for_field(&f);
        let master = f.element_from_u64(4);
        let keys = kdf(&params, &master, 1);
        assert_eq!(keys.enc, mimc_encrypt(&params, &master, &f.element_from_u64(3)));
        assert_eq!(keys.tag_enc, mimc_encrypt(&params, &master, &f.element_from_u64(4)));
        assert_eq!(keys.tag_mac, mimc_encrypt(&params, &master, &f.element_from_u64(5)));
    }

    #[test]
    fn counter_watermark_refuses_reuse() {
        let mut w = CounterWatermark::default();
        w.claim(1).unwrap();
        w.claim(2).unwrap();
        assert!(matches!(w.claim(2), Err(Error::CounterReuse(2))));
        assert!(matches!(w.claim(1), Err(Error::CounterReuse(1))));
        w.claim(10).unwrap();
    }

    #[test]
    fn htmac_accepts_honest_and_rejects_flips() {
        let f = FieldParams::production();
        let params = MimcParams::for_field(&f);
        let mut rng = ChaCha12Rng::seed_from_u64(44);
        let ke = f.random(&mut rng);
        let km = f.random(&mut rng);
        let msg: Vec<FieldElement> = (0..6).map(|_| f.random(&mut rng)).collect();
        let (tag, _) = htmac_tag(&params, &ke, &km, &msg);
        assert!(htmac_verify(&params, &ke, &km, &msg, &tag));
        // Single-bit flips in the message must be rejected.
        use rand::RngCore;
        for _ in 0..50 {
            let blk = (rng.next_u32() as usize) % 6;
            let bit = (rng.next_u32() % 128) as u64;
            let mut flipped = msg.clone();
            let delta = f.element_from_u128(1u128 << bit.min(127));
            flipped[blk] = flipped[blk].add(&delta);
            assert!(!htmac_verify(&params, &ke, &km, &flipped, &tag));
        }
    }

    fn counts() -> TapeCounts {
        TapeCounts {
            zero_shares: 64,
            and_zero_shares: 0,
            random_bits: 0,
            cube_tuples: 4096,
        }
    }

    #[test]
    fn shared_call_matches_clear_and_costs_r_rounds() {
        let f = FieldParams::production();
        let params = MimcParams::for_field(&f);
        let mut rng = ChaCha12Rng::seed_from_u64(45);
        let key = f.random(&mut rng);
        let x = f.random(&mut rng);
        let expect = mimc_encrypt(&params, &key, &x);
        let sk = Mutex::new(share(&key, &mut rng).map(Some));
        let sx = Mutex::new(share(&x, &mut rng).map(Some));
        let tapes = Mutex::new(
            dealer_generate(&f, counts(), [50; 32]).into_iter().map(Some).collect::<Vec<_>>(),
        );
        let params2 = params.clone();
        let out = run_local_session([50; 16], move |party, ch| {
            let mut tape = tapes.lock().unwrap()[party.index()].take().unwrap();
            let mut s = Session::new(ch, &mut tape);
            let key = sk.lock().unwrap()[party.index()].take().unwrap();
            let x = sx.lock().unwrap()[party.index()].take().unwrap();
            let y = mimc_encrypt_shared(&mut s, &params2, &key, &x)?;
            let rounds_for_call = s.stats.online_rounds;
            let opened = s.open_vec(&[y])?;
            Ok((opened[0].clone(), rounds_for_call, s.stats_snapshot()))
        })
        .unwrap();
        for (v, rounds, stats) in out {
            assert_eq!(v, expect);
            assert_eq!(rounds, 81);
            assert_eq!(stats.preprocessing.cube_tuples, 81);
            assert_eq!(stats.mults, 81);
        }
    }

    #[test]
    fn parallel_shared_calls_share_the_same_rounds() {
        let f = FieldParams::production();
        let params = MimcParams::for_field(&f);
        let mut rng = ChaCha12Rng::seed_from_u64(46);
        let key = f.random(&mut rng);
        let xs: Vec<FieldElement> = (0..8).map(|_| f.random(&mut rng)).collect();
        let expect: Vec<FieldElement> =
            xs.iter().map(|x| mimc_encrypt(&params, &key, x)).collect();
        let sk = Mutex::new(share(&key, &mut rng).map(Some));
        let mut per_party: [Vec<RepShare>; 3] = Default::default();
        for x in &xs {
            let s = share(x, &mut rng);
            for i in 0..3 {
                per_party[i].push(s[i].clone());
            }
        }
        let sx = Mutex::new(per_party.map(Some));
        let tapes = Mutex::new(
            dealer_generate(&f, counts(), [51; 32]).into_iter().map(Some).collect::<Vec<_>>(),
        );
        let params2 = params.clone();
        let out = run_local_session([51; 16], move |party, ch| {
            let mut tape = tapes.lock().unwrap()[party.index()].take().unwrap();
            let mut s = Session::new(ch, &mut tape);
            let key = sk.lock().unwrap()[party.index()].take().unwrap();
            let xs = sx.lock().unwrap()[party.index()].take().unwrap();
            let mut chains: Vec<MimcChain> = xs
                .iter()
                .map(|x| MimcChain::new(&params2, key.clone(), x.clone()))
                .collect();
            run_chains(&mut s, &mut chains)?;
            let rounds = s.stats.online_rounds;
            let outs: Vec<RepShare> = chains.iter().map(|c| c.output()).collect();
            Ok((s.open_vec(&outs)?, rounds))
        })
        .unwrap();
        for (vals, rounds) in out {
            assert_eq!(vals, expect);
            assert_eq!(rounds, 81);
        }
    }

    #[test]
    fn shared_ctr_matches_clear_blockwise() {
        let f = FieldParams::production();
        let params = MimcParams::for_field(&f);
        let mut rng = ChaCha12Rng::seed_from_u64(47);
        let key = f.random(&mut rng);
        let eta = f.element_from_u64(12345);
        let msg: Vec<FieldElement> = (0..5).map(|_| f.random(&mut rng)).collect();
        let expect = ctr_encrypt(&params, &key, &eta, &msg);
        let sk = Mutex::new(share(&key, &mut rng).map(Some));
        let mut per_party: [Vec<RepShare>; 3] = Default::default();
        for m in &msg {
            let s = share(m, &mut rng);
            for i in 0..3 {
                per_party[i].push(s[i].clone());
            }
        }
        let sm = Mutex::new(per_party.map(Some));
        let tapes = Mutex::new(
            dealer_generate(&f, counts(), [52; 32]).into_iter().map(Some).collect::<Vec<_>>(),
        );
        let params2 = params.clone();
        let eta2 = eta.clone();
        let out = run_local_session([52; 16], move |party, ch| {
            let mut tape = tapes.lock().unwrap()[party.index()].take().unwrap();
            let mut s = Session::new(ch, &mut tape);
            let key = sk.lock().unwrap()[party.index()].take().unwrap();
            let msg = sm.lock().unwrap()[party.index()].take().unwrap();
            let tweak = tweak_shared(&mut s, &params2, &key, &eta2)?;
            let ct = ctr_encrypt_shared(&mut s, &params2, &key, &tweak, &msg)?;
            Ok(s.open_vec(&ct)?)
        })
        .unwrap();
        for blocks in out {
            assert_eq!(blocks, expect.blocks);
        }
    }

    #[test]
    fn shared_htmac_equals_clear_oracle() {
        let f = FieldParams::production();
        let params = MimcParams::for_field(&f);
        let mut rng = ChaCha12Rng::seed_from_u64(48);
        for _ in 0..3 {
            let ke = f.random(&mut rng);
            let km = f.random(&mut rng);
            let msg: Vec<FieldElement> = (0..6).map(|_| f.random(&mut rng)).collect();
            let (expect_tag, expect_ct) = htmac_tag(&params, &ke, &km, &msg);

            let ske = Mutex::new(share(&ke, &mut rng).map(Some));
            let skm = Mutex::new(share(&km, &mut rng).map(Some));
            // Tag-layer tweak arrives precomputed, like the key bundle.
            let n_tag = mimc_encrypt(&params, &ke, &f.one());
            let sn = Mutex::new(share(&n_tag, &mut rng).map(Some));
            let mut per_party: [Vec<RepShare>; 3] = Default::default();
            for m in &msg {
                let s = share(m, &mut rng);
                for i in 0..3 {
                    per_party[i].push(s[i].clone());
                }
            }
            let sm = Mutex::new(per_party.map(Some));
            let tapes = Mutex::new(
                dealer_generate(&f, counts(), [53; 32])
                    .into_iter()
                    .map(Some)
                    .collect::<Vec<_>>(),
            );
            let params2 = params.clone();
            let out = run_local_session([53; 16], move |party, ch| {
                let mut tape = tapes.lock().unwrap()[party.index()].take().unwrap();
                let mut s = Session::new(ch, &mut tape);
                let ke = ske.lock().unwrap()[party.index()].take().unwrap();
                let km = skm.lock().unwrap()[party.index()].take().unwrap();
                let tweak = sn.lock().unwrap()[party.index()].take().unwrap();
                let msg = sm.lock().unwrap()[party.index()].take().unwrap();
                let ct_shares = ctr_encrypt_shared(&mut s, &params2, &ke, &tweak, &msg)?;
                let ct_blocks = s.open_vec(&ct_shares)?;
                let ct = TaggedCiphertext { nonce: s.field().one(), blocks: ct_blocks };
                let h = tag_hash(s.field(), &ct);
                let h_share = RepShare::constant(s.party(), &h);
                let tag = mimc_encrypt_shared(&mut s, &params2, &km, &h_share)?;
                Ok((s.open_vec(&[tag])?[0].clone(), ct))
            })
            .unwrap();
            for (tag, ct) in out {
                assert_eq!(tag, expect_tag);
                assert_eq!(ct, expect_ct);
            }
        }
    }
}
