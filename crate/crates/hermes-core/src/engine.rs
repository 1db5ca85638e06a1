//! The per-party session engine: batched layer execution over replicated
//! shares.
//!
//! All communication happens through explicit layers. A layer collects any
//! mix of secret multiplications, openings and masked cube steps, exchanges
//! exactly one frame per ordered pair of parties, and costs one online
//! round however many items it carries. Linear operations never enter a
//! layer. Multiplication is the three-party local-cross-product-and-reshare
//! protocol: party `i` computes
//! `t_i = x_lo*y_lo + x_lo*y_hi + x_hi*y_lo + alpha_i` with a correlated
//! zero share `alpha_i` and sends `t_i` to party `i-1`, giving each party
//! the pair `(t_i, t_{i+1})` — one field element per party per
//! multiplication.

use crate::bits::BitVector;
use crate::field::{FieldElement, FieldParams};
use crate::share::{BitShareVec, PartyId, RepShare};
use crate::tape::PreprocessingTape;
use crate::transport::{LayerIo, SessionChannel, TranscriptStats};
use crate::{Error, Result};

/// One party's handle on a live three-party session.
pub struct Session<'t, C: SessionChannel> {
    chan: C,
    pub tape: &'t mut PreprocessingTape,
    pub stats: TranscriptStats,
    field: FieldParams,
    next_layer: u32,
}

/// Index of a multiplication result within a committed layer.
#[derive(Clone, Copy, Debug)]
pub struct MulHandle(usize);
/// Index of an opened value within a committed layer.
#[derive(Clone, Copy, Debug)]
pub struct OpenHandle(usize);
/// Index of a cube result within a committed layer.
#[derive(Clone, Copy, Debug)]
pub struct CubeHandle(usize);

/// Items queued for one dependency layer.
pub struct Layer<'s, 't, C: SessionChannel> {
    session: &'s mut Session<'t, C>,
    /// Reshare messages for queued multiplications.
    mul_t: Vec<FieldElement>,
    /// Shares queued for opening.
    opens: Vec<RepShare>,
    /// Masked cube state: (masked share to open, tuple shares).
    cubes: Vec<(RepShare, [RepShare; 3])>,
}

/// Results of a committed layer, indexed by the handles produced while
/// queueing.
pub struct LayerOutput {
    pub muls: Vec<RepShare>,
    pub opened: Vec<FieldElement>,
    pub cubes: Vec<RepShare>,
}

impl LayerOutput {
    pub fn mul(&self, h: MulHandle) -> &RepShare {
        &self.muls[h.0]
    }
    pub fn opened(&self, h: OpenHandle) -> &FieldElement {
        &self.opened[h.0]
    }
    pub fn cube(&self, h: CubeHandle) -> &RepShare {
        &self.cubes[h.0]
    }
}

impl<'t, C: SessionChannel> Session<'t, C> {
    pub fn new(chan: C, tape: &'t mut PreprocessingTape) -> Session<'t, C> {
        let field = tape.field().clone();
        Session { chan, tape, stats: TranscriptStats::default(), field, next_layer: 0 }
    }

    pub fn party(&self) -> PartyId {
        self.chan.party()
    }

    pub fn field(&self) -> &FieldParams {
        &self.field
    }

    /// Session bring-up; not counted in online rounds.
    pub fn hello(&mut self, info: &[u8]) -> Result<[Vec<u8>; 2]> {
        self.chan.hello(info)
    }

    /// Finalized stats including preprocessing consumption.
    pub fn stats_snapshot(&self) -> TranscriptStats {
        let mut stats = self.stats.clone();
        stats.preprocessing = self.tape.usage();
        stats
    }

    pub fn begin_layer(&mut self) -> Layer<'_, 't, C> {
        Layer { session: self, mul_t: Vec::new(), opens: Vec::new(), cubes: Vec::new() }
    }

    /// One fully-batched multiplication layer.
    pub fn mul_vec(&mut self, xs: &[RepShare], ys: &[RepShare]) -> Result<Vec<RepShare>> {
        if xs.len() != ys.len() {
            return Err(Error::Parameter("mul_vec length mismatch".into()));
        }
        let mut layer = self.begin_layer();
        for (x, y) in xs.iter().zip(ys) {
            layer.mul(x, y)?;
        }
        Ok(layer.commit()?.muls)
    }

    /// One fully-batched opening layer; every party learns the values.
    pub fn open_vec(&mut self, xs: &[RepShare]) -> Result<Vec<FieldElement>> {
        let mut layer = self.begin_layer();
        for x in xs {
            layer.open(x);
        }
        Ok(layer.commit()?.opened)
    }

    /// One fully-batched cube layer (`x -> x^3` per element).
    pub fn cube_vec(&mut self, xs: &[RepShare]) -> Result<Vec<RepShare>> {
        let mut layer = self.begin_layer();
        for x in xs {
            layer.cube(x)?;
        }
        Ok(layer.commit()?.cubes)
    }

    /// Batched AND over packed bit shares: one layer, one round, `len` AND
    /// gates. The reshare algebra is the multiplication protocol over GF(2).
    pub fn and_bits(&mut self, x: &BitShareVec, y: &BitShareVec) -> Result<BitShareVec> {
        if x.len() != y.len() {
            return Err(Error::Parameter("and_bits length mismatch".into()));
        }
        if x.is_empty() {
            return Ok(x.clone());
        }
        let n = x.len();
        let mut t = x
            .lo
            .and(&y.lo)
            .xor(&x.lo.and(&y.hi))
            .xor(&x.hi.and(&y.lo));
        // Correlated zero bits, drawn word by word.
        let mut alpha = BitVector::zeros(n);
        let mut idx = 0;
        while idx < n {
            let take = (n - idx).min(64) as u64;
            let word = self.tape.next_zero_bits(take)?;
            for b in 0..take as usize {
                alpha.set(idx + b, (word >> b) & 1 == 1);
            }
            idx += take as usize;
        }
        t = t.xor(&alpha);
        self.stats.and_gates += n as u64;
        self.stats.mults += n as u64;

        let layer = self.next_layer;
        self.next_layer += 1;
        let (from_next, _) = self.chan.exchange(
            layer,
            LayerIo {
                to_next: None,
                to_prev: Some(t.encode()),
                expect_next: true,
                expect_prev: false,
            },
            &mut self.stats,
        )?;
        let t_next = BitVector::decode(&from_next.ok_or_else(|| {
            Error::Transport("missing AND reshare from successor".into())
        })?)?;
        if t_next.len() != n {
            return Err(Error::ShareIntegrity(
                "AND reshare length mismatch (corrupted transport)".into(),
            ));
        }
        Ok(BitShareVec { party: self.party(), lo: t, hi: t_next })
    }

    /// Opens packed shared bits to every party: one round.
    pub fn open_bits(&mut self, x: &BitShareVec) -> Result<BitVector> {
        let layer = self.next_layer;
        self.next_layer += 1;
        self.stats.opens += x.len() as u64;
        let (_, from_prev) = self.chan.exchange(
            layer,
            LayerIo {
                to_next: Some(x.lo.encode()),
                to_prev: None,
                expect_next: false,
                expect_prev: true,
            },
            &mut self.stats,
        )?;
        let r_prev = BitVector::decode(&from_prev.ok_or_else(|| {
            Error::Transport("missing open component from predecessor".into())
        })?)?;
        if r_prev.len() != x.len() {
            return Err(Error::ShareIntegrity(
                "opened bit length mismatch (corrupted transport)".into(),
            ));
        }
        Ok(x.lo.xor(&x.hi).xor(&r_prev))
    }
}

impl<'s, 't, C: SessionChannel> Layer<'s, 't, C> {
    /// Queues a secret multiplication; consumes one correlated zero share.
    pub fn mul(&mut self, x: &RepShare, y: &RepShare) -> Result<MulHandle> {
        debug_assert_eq!(x.party, self.session.party());
        let alpha = self.session.tape.next_zero_share()?;
        let t = x
            .lo
            .mul(&y.lo)
            .add(&x.lo.mul(&y.hi))
            .add(&x.hi.mul(&y.lo))
            .add(&alpha);
        self.session.stats.mults += 1;
        self.mul_t.push(t);
        Ok(MulHandle(self.mul_t.len() - 1))
    }

    /// Queues an opening.
    pub fn open(&mut self, x: &RepShare) -> OpenHandle {
        self.opens.push(x.clone());
        OpenHandle(self.opens.len() - 1)
    }

    /// Queues one masked cube step: opens `x - a` for a fresh cube tuple
    /// `(a, a^2, a^3)`; the cube is then a local linear combination. Counts
    /// as one multiplication equivalent.
    pub fn cube(&mut self, x: &RepShare) -> Result<CubeHandle> {
        let tuple = self.session.tape.next_cube_tuple()?;
        let masked = x.sub(&tuple[0]);
        self.session.stats.mults += 1;
        self.cubes.push((masked, tuple));
        Ok(CubeHandle(self.cubes.len() - 1))
    }

    pub fn is_empty(&self) -> bool {
        self.mul_t.is_empty() && self.opens.is_empty() && self.cubes.is_empty()
    }

    /// Executes the layer. An empty layer exchanges nothing and costs no
    /// round.
    pub fn commit(self) -> Result<LayerOutput> {
        let Layer { session, mul_t, opens, cubes } = self;
        if mul_t.is_empty() && opens.is_empty() && cubes.is_empty() {
            return Ok(LayerOutput { muls: vec![], opened: vec![], cubes: vec![] });
        }
        let enc_len = session.field.encoded_len();
        let party = session.party();

        // To the predecessor: reshare messages for multiplications.
        let to_prev = if mul_t.is_empty() {
            None
        } else {
            let mut buf = Vec::with_capacity(mul_t.len() * enc_len);
            for t in &mul_t {
                buf.extend_from_slice(&t.encode());
            }
            Some(buf)
        };
        // To the successor: our additive component of every opening (value
        // opens first, then cube mask opens).
        let n_opens = opens.len() + cubes.len();
        let to_next = if n_opens == 0 {
            None
        } else {
            let mut buf = Vec::with_capacity(n_opens * enc_len);
            for o in &opens {
                buf.extend_from_slice(&o.lo.encode());
            }
            for (masked, _) in &cubes {
                buf.extend_from_slice(&masked.lo.encode());
            }
            Some(buf)
        };
        session.stats.opens += n_opens as u64;

        let layer = session.next_layer;
        session.next_layer += 1;
        let (from_next, from_prev) = session.chan.exchange(
            layer,
            LayerIo {
                to_next,
                to_prev,
                expect_next: !mul_t.is_empty(),
                expect_prev: n_opens > 0,
            },
            &mut session.stats,
        )?;

        let decode_stream = |bytes: &[u8], expect: usize, what: &str| -> Result<Vec<FieldElement>> {
            if bytes.len() != expect * enc_len {
                return Err(Error::ShareIntegrity(format!(
                    "{what}: expected {} elements, got {} bytes (corrupted transport)",
                    expect,
                    bytes.len()
                )));
            }
            bytes
                .chunks(enc_len)
                .map(|c| session.field.decode(c))
                .collect()
        };

        // Multiplications: our t_i plus t_{i+1} from the successor.
        let muls = if mul_t.is_empty() {
            vec![]
        } else {
            let t_next = decode_stream(
                &from_next.ok_or_else(|| Error::Transport("missing mul reshare".into()))?,
                mul_t.len(),
                "mul reshare",
            )?;
            mul_t
                .into_iter()
                .zip(t_next)
                .map(|(lo, hi)| RepShare { party, lo, hi })
                .collect()
        };

        // Openings: our pair plus the predecessor's component.
        let (opened, cube_results) = if n_opens == 0 {
            (vec![], vec![])
        } else {
            let r_prev = decode_stream(
                &from_prev.ok_or_else(|| Error::Transport("missing open component".into()))?,
                n_opens,
                "open",
            )?;
            let mut opened = Vec::with_capacity(opens.len());
            for (o, prev) in opens.iter().zip(&r_prev) {
                opened.push(o.lo.add(&o.hi).add(prev));
            }
            let mut cube_results = Vec::with_capacity(cubes.len());
            for ((masked, tuple), prev) in cubes.iter().zip(&r_prev[opens.len()..]) {
                let m = masked.lo.add(&masked.hi).add(prev);
                // x^3 = m^3 + 3 m^2 a + 3 m a^2 + a^3 for public m = x - a.
                let m2 = m.square();
                let m3 = m2.mul(&m);
                let three = session.field.element_from_u64(3);
                let term1 = tuple[0].scale(&m2.mul(&three));
                let term2 = tuple[1].scale(&m.mul(&three));
                let acc = term1.add(&term2).add(&tuple[2]).add_constant(&m3);
                cube_results.push(acc);
            }
            (opened, cube_results)
        };

        Ok(LayerOutput { muls, opened, cubes: cube_results })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::share::{share, share_bits};
    use crate::tape::{dealer_generate, TapeCounts};
    use crate::transport::run_local_session;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use std::sync::Mutex;

    fn big_counts() -> TapeCounts {
        TapeCounts {
            zero_shares: 4096,
            and_zero_shares: 4096,
            random_bits: 1024,
            cube_tuples: 512,
        }
    }

    /// Runs `f` as all three parties over loopback with fresh dealer tapes
    /// and returns per-party results.
    fn run3<T, F>(field: &FieldParams, seed: u8, f: F) -> [T; 3]
    where
        T: Send + 'static,
        F: Fn(&mut Session<'_, crate::transport::LocalChannel>) -> Result<T>
            + Send
            + Sync
            + 'static,
    {
        let tapes = dealer_generate(field, big_counts(), [seed; 32]);
        let tapes = Mutex::new(
            tapes
                .into_iter()
                .map(Some)
                .collect::<Vec<_>>(),
        );
        run_local_session([seed; 16], move |party, ch| {
            let mut tape = tapes.lock().unwrap()[party.index()].take().unwrap();
            let mut session = Session::new(ch, &mut tape);
            f(&mut session)
        })
        .unwrap()
    }

    #[test]
    fn exhaustive_multiplication_f11() {
        let f = FieldParams::test11();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        // Dealer-shared inputs for all 121 pairs.
        let mut xs: [Vec<RepShare>; 3] = Default::default();
        let mut ys: [Vec<RepShare>; 3] = Default::default();
        let mut expected = Vec::new();
        for a in 0..11u64 {
            for b in 0..11u64 {
                let sa = share(&f.element_from_u64(a), &mut rng);
                let sb = share(&f.element_from_u64(b), &mut rng);
                for i in 0..3 {
                    xs[i].push(sa[i].clone());
                    ys[i].push(sb[i].clone());
                }
                expected.push(f.element_from_u64(a * b % 11));
            }
        }
        let xs = Mutex::new(xs);
        let ys = Mutex::new(ys);
        let tapes = Mutex::new(
            dealer_generate(&f, big_counts(), [5; 32])
                .into_iter()
                .map(Some)
                .collect::<Vec<_>>(),
        );
        let out = run_local_session([5; 16], move |party, ch| {
            let mut tape = tapes.lock().unwrap()[party.index()].take().unwrap();
            let mut s = Session::new(ch, &mut tape);
            let x = xs.lock().unwrap()[party.index()].clone();
            let y = ys.lock().unwrap()[party.index()].clone();
            let prod = s.mul_vec(&x, &y)?;
            let opened = s.open_vec(&prod)?;
            Ok((opened, s.stats_snapshot()))
        })
        .unwrap();
        for (opened, stats) in &out {
            assert_eq!(opened, &expected);
            // 121 batched muls in one round, opened in one more.
            assert_eq!(stats.online_rounds, 2);
            assert_eq!(stats.mults, 121);
            assert_eq!(stats.preprocessing.zero_shares, 121);
        }
    }

    #[test]
    fn mul_annihilator_and_batching_cost() {
        let f = FieldParams::test101();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let x = f.random(&mut rng);
        let sx = Mutex::new(share(&x, &mut rng).map(Some));
        let sz = Mutex::new(share(&f.zero(), &mut rng).map(Some));
        let out = run3(&f, 6, move |s| {
            let x = sx.lock().unwrap()[s.party().index()].take().unwrap();
            let z = sz.lock().unwrap()[s.party().index()].take().unwrap();
            let prod = s.mul_vec(std::slice::from_ref(&x), std::slice::from_ref(&z))?;
            Ok(s.open_vec(&prod)?[0].clone())
        });
        for v in out {
            assert!(v.is_zero());
        }
    }

    #[test]
    fn dependent_muls_take_two_rounds_batch_takes_one() {
        let f = FieldParams::test101();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let shares = Mutex::new(share(&f.element_from_u64(5), &mut rng).map(Some));
        let out = run3(&f, 7, move |s| {
            let x = shares.lock().unwrap()[s.party().index()].take().unwrap();
            // Ten independent muls: one round.
            let xs = vec![x.clone(); 10];
            let before = s.stats.online_rounds;
            let sq = s.mul_vec(&xs, &xs)?;
            let after_batch = s.stats.online_rounds;
            // A dependent chain: two more rounds.
            let cube = s.mul_vec(&sq[0..1], &xs[0..1])?;
            let sixth = s.mul_vec(&cube, &cube)?;
            let after_chain = s.stats.online_rounds;
            let opened = s.open_vec(&sixth)?;
            Ok((after_batch - before, after_chain - after_batch, opened[0].clone()))
        });
        for (batch_rounds, chain_rounds, v) in out {
            assert_eq!(batch_rounds, 1);
            assert_eq!(chain_rounds, 2);
            assert_eq!(v, FieldParams::test101().element_from_u64(15625 % 101));
        }
    }

    #[test]
    fn empty_layer_costs_no_round() {
        let f = FieldParams::test101();
        let out = run3(&f, 14, |s| {
            let before = s.stats.online_rounds;
            let layer = s.begin_layer();
            assert!(layer.is_empty());
            let result = layer.commit()?;
            assert!(result.muls.is_empty() && result.opened.is_empty());
            Ok(s.stats.online_rounds - before)
        });
        assert_eq!(out, [0, 0, 0]);
    }

    #[test]
    fn open_linear_combination() {
        let f = FieldParams::test101();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let x = f.random(&mut rng);
        let y = f.random(&mut rng);
        let expect = x.mul_u64(2).add(&y).add(&f.element_from_u64(5));
        let sx = Mutex::new(share(&x, &mut rng).map(Some));
        let sy = Mutex::new(share(&y, &mut rng).map(Some));
        let out = run3(&f, 8, move |s| {
            let x = sx.lock().unwrap()[s.party().index()].take().unwrap();
            let y = sy.lock().unwrap()[s.party().index()].take().unwrap();
            let two = s.field().element_from_u64(2);
            let five = s.field().element_from_u64(5);
            let combo = x.scale(&two).add(&y).add_constant(&five);
            Ok(s.open_vec(&[combo])?[0].clone())
        });
        for v in out {
            assert_eq!(v, expect);
        }
    }

    #[test]
    fn open_round_trip_many() {
        let f = FieldParams::production();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let values: Vec<FieldElement> = (0..10_000).map(|_| f.random(&mut rng)).collect();
        let mut per_party: [Vec<RepShare>; 3] = Default::default();
        for v in &values {
            let s = share(v, &mut rng);
            for i in 0..3 {
                per_party[i].push(s[i].clone());
            }
        }
        let shares = Mutex::new(per_party.map(Some));
        let expect = values.clone();
        let out = run3(&f, 9, move |s| {
            let mine = shares.lock().unwrap()[s.party().index()].take().unwrap();
            let opened = s.open_vec(&mine)?;
            Ok((opened, s.stats.online_rounds))
        });
        for (opened, rounds) in out {
            assert_eq!(opened, expect);
            assert_eq!(rounds, 1);
        }
    }

    #[test]
    fn cube_layer_matches_cleartext_cube() {
        let f = FieldParams::production();
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let values: Vec<FieldElement> = (0..20).map(|_| f.random(&mut rng)).collect();
        let mut per_party: [Vec<RepShare>; 3] = Default::default();
        for v in &values {
            let s = share(v, &mut rng);
            for i in 0..3 {
                per_party[i].push(s[i].clone());
            }
        }
        let shares = Mutex::new(per_party.map(Some));
        let expect: Vec<FieldElement> = values.iter().map(|v| v.cube()).collect();
        let out = run3(&f, 10, move |s| {
            let mine = shares.lock().unwrap()[s.party().index()].take().unwrap();
            let before = s.stats.online_rounds;
            let cubed = s.cube_vec(&mine)?;
            assert_eq!(s.stats.online_rounds - before, 1);
            Ok(s.open_vec(&cubed)?)
        });
        for opened in out {
            assert_eq!(opened, expect);
        }
    }

    #[test]
    fn gf2_and_exhaustive_truth_table() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        // Four AND cases packed into one 4-bit vector.
        let a = BitVector::from_bits(&[false, false, true, true]);
        let b = BitVector::from_bits(&[false, true, false, true]);
        let sa = Mutex::new(share_bits(&a, &mut rng).map(Some));
        let sb = Mutex::new(share_bits(&b, &mut rng).map(Some));
        let out = run3(&FieldParams::test101(), 11, move |s| {
            let x = sa.lock().unwrap()[s.party().index()].take().unwrap();
            let y = sb.lock().unwrap()[s.party().index()].take().unwrap();
            let z = s.and_bits(&x, &y)?;
            let opened = s.open_bits(&z)?;
            Ok((opened, s.stats_snapshot()))
        });
        for (opened, stats) in out {
            assert_eq!(opened, BitVector::from_bits(&[false, false, false, true]));
            assert_eq!(stats.and_gates, 4);
            assert_eq!(stats.online_rounds, 2);
        }
    }

    #[test]
    fn transcripts_are_deterministic_across_runs() {
        let digest_of_run = || {
            let f = FieldParams::test101();
            let mut rng = ChaCha12Rng::seed_from_u64(42);
            let x = f.random(&mut rng);
            let sx = Mutex::new(share(&x, &mut rng).map(Some));
            let out = run3(&f, 13, move |s| {
                let x = sx.lock().unwrap()[s.party().index()].take().unwrap();
                let y = s.mul_vec(std::slice::from_ref(&x), std::slice::from_ref(&x))?;
                let _ = s.open_vec(&y)?;
                Ok(s.stats.transcript.finalize_hex())
            });
            out.map(|d| d)
        };
        assert_eq!(digest_of_run(), digest_of_run());
    }

    #[test]
    fn random_mixed_circuits_match_cleartext_oracle() {
        // Random straight-line programs of adds, scalings and muls in F_101,
        // evaluated both on shares and in the clear.
        let f = FieldParams::test101();
        let mut seed_rng = ChaCha12Rng::seed_from_u64(99);
        for trial in 0..20 {
            let mut rng = ChaCha12Rng::seed_from_u64(seed_rng.next_u64());
            use rand::RngCore;
            let n_inputs = 3 + (rng.next_u32() % 4) as usize;
            let inputs: Vec<FieldElement> = (0..n_inputs).map(|_| f.random(&mut rng)).collect();
            // Ops: (kind, i, j, scalar) applied to a growing value list.
            let n_ops = 20 + (rng.next_u32() % 81) as usize;
            let mut ops = Vec::new();
            let mut size = n_inputs;
            for _ in 0..n_ops {
                let kind = rng.next_u32() % 3;
                let i = (rng.next_u32() as usize) % size;
                let j = (rng.next_u32() as usize) % size;
                let k = rng.next_u64() % 101;
                ops.push((kind, i, j, k));
                size += 1;
            }
            // Cleartext evaluation.
            let mut clear = inputs.clone();
            for &(kind, i, j, k) in &ops {
                let v = match kind {
                    0 => clear[i].add(&clear[j]),
                    1 => clear[i].scale_oracle(k, &f),
                    _ => clear[i].mul(&clear[j]),
                };
                clear.push(v);
            }
            let expect = clear.last().unwrap().clone();

            let mut per_party: [Vec<RepShare>; 3] = Default::default();
            for v in &inputs {
                let s = share(v, &mut rng);
                for i in 0..3 {
                    per_party[i].push(s[i].clone());
                }
            }
            let shares = Mutex::new(per_party.map(Some));
            let ops_arc = std::sync::Arc::new(ops);
            let out = run3(&f, 100 + trial as u8, move |s| {
                let mut vals = shares.lock().unwrap()[s.party().index()].take().unwrap();
                for &(kind, i, j, k) in ops_arc.iter() {
                    let v = match kind {
                        0 => vals[i].add(&vals[j]),
                        1 => vals[i].scale(&s.field().element_from_u64(k)),
                        _ => s.mul_vec(&vals[i..=i].to_vec(), &vals[j..=j].to_vec())?[0].clone(),
                    };
                    vals.push(v);
                }
                Ok(s.open_vec(&[vals.last().unwrap().clone()])?[0].clone())
            });
            for v in out {
                assert_eq!(v, expect, "trial {trial}");
            }
        }
    }
}

#[cfg(test)]
mod integrity_tests {
    use super::*;
    use crate::tape::{dealer_generate, TapeCounts};
    use crate::transport::LayerIo;

    /// A channel that feeds back corrupted data: wrong element count on
    /// every receive.
    struct Corrupting {
        party: PartyId,
    }

    impl SessionChannel for Corrupting {
        fn party(&self) -> PartyId {
            self.party
        }

        fn exchange(
            &mut self,
            _layer: u32,
            io: LayerIo,
            stats: &mut TranscriptStats,
        ) -> Result<(Option<Vec<u8>>, Option<Vec<u8>>)> {
            stats.online_rounds += 1;
            // Echo truncated garbage back for whatever was expected.
            let fake = |want: bool| want.then(|| vec![0u8; 3]);
            Ok((fake(io.expect_next), fake(io.expect_prev)))
        }

        fn hello(&mut self, info: &[u8]) -> Result<[Vec<u8>; 2]> {
            Ok([info.to_vec(), info.to_vec()])
        }
    }

    #[test]
    fn corrupted_transport_is_an_integrity_error() {
        let f = crate::field::FieldParams::test101();
        let counts =
            TapeCounts { zero_shares: 8, and_zero_shares: 0, random_bits: 0, cube_tuples: 0 };
        let [mut tape, _, _] = dealer_generate(&f, counts, [13; 32]);
        let mut s = Session::new(Corrupting { party: PartyId(0) }, &mut tape);
        let x = RepShare {
            party: PartyId(0),
            lo: f.element_from_u64(3),
            hi: f.element_from_u64(4),
        };
        match s.open_vec(&[x.clone()]) {
            Err(Error::ShareIntegrity(msg)) => assert!(msg.contains("corrupted transport")),
            other => panic!("expected integrity error, got {other:?}"),
        }
        match s.mul_vec(&[x.clone()], &[x]) {
            Err(Error::ShareIntegrity(_)) => {}
            other => panic!("expected integrity error, got {other:?}"),
        }
    }
}

#[cfg(test)]
impl FieldElement {
    /// Test-only helper mirroring `scale` on cleartext values.
    fn scale_oracle(&self, k: u64, f: &FieldParams) -> FieldElement {
        self.mul(&f.element_from_u64(k))
    }
}
