//! Fabric conformance: the loopback hub and the TCP fabric execute the same
//! computation with identical semantics and identical instrumentation up to
//! the reported framing overhead.

use std::net::TcpListener;
use std::sync::Mutex;

use hermes_core::engine::Session;
use hermes_core::field::{FieldElement, FieldParams};
use hermes_core::share::{share, PartyId, RepShare};
use hermes_core::tape::{dealer_generate, PreprocessingTape, TapeCounts};
use hermes_core::transport::{
    connect_tcp_sealed, run_local_session, ChannelSeal, SessionChannel, TranscriptStats,
    TCP_FRAME_HEADER_LEN,
};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn counts() -> TapeCounts {
    TapeCounts { zero_shares: 256, and_zero_shares: 0, random_bits: 0, cube_tuples: 256 }
}

/// The workload both fabrics run: a few dependent layers of muls, cubes and
/// opens.
fn workload<C: SessionChannel>(
    session: &mut Session<'_, C>,
    mine: Vec<RepShare>,
) -> hermes_core::Result<(Vec<FieldElement>, TranscriptStats)> {
    let prods = session.mul_vec(&mine[..4], &mine[4..8])?;
    let cubes = session.cube_vec(&prods)?;
    let opened = session.open_vec(&cubes)?;
    Ok((opened, session.stats_snapshot()))
}

fn shared_inputs(seed: u64) -> ([Vec<RepShare>; 3], Vec<FieldElement>) {
    let f = FieldParams::production();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let values: Vec<FieldElement> = (0..8).map(|_| f.random(&mut rng)).collect();
    let expect: Vec<FieldElement> = (0..4)
        .map(|i| values[i].mul(&values[i + 4]).cube())
        .collect();
    let mut per_party: [Vec<RepShare>; 3] = Default::default();
    for v in &values {
        let s = share(v, &mut rng);
        for i in 0..3 {
            per_party[i].push(s[i].clone());
        }
    }
    (per_party, expect)
}

fn run_tcp(
    seed: u64,
    tapes: [PreprocessingTape; 3],
    seal: Option<[u8; 32]>,
) -> Vec<(Vec<FieldElement>, TranscriptStats)> {
    let (inputs, _) = shared_inputs(seed);
    let listeners: Vec<TcpListener> =
        (0..3).map(|_| TcpListener::bind("127.0.0.1:0").unwrap()).collect();
    let addrs: [String; 3] = std::array::from_fn(|i| {
        format!("127.0.0.1:{}", listeners[i].local_addr().unwrap().port())
    });
    let mut handles = Vec::new();
    for ((i, listener), (input, mut tape)) in (0..3)
        .zip(listeners)
        .zip(inputs.into_iter().zip(tapes))
    {
        let addrs = addrs.clone();
        handles.push(std::thread::spawn(move || {
            let ch = connect_tcp_sealed(
                PartyId(i as u8),
                [55u8; 16],
                &listener,
                &addrs,
                seal.map(ChannelSeal::new),
            )
            .unwrap();
            let mut session = Session::new(ch, &mut tape);
            workload(&mut session, input).unwrap()
        }));
    }
    handles.into_iter().map(|h| h.join().unwrap()).collect()
}

#[test]
fn local_and_tcp_fabrics_agree() {
    let seed = 7171;
    let (inputs, expect) = shared_inputs(seed);
    let f = FieldParams::production();

    let local_tapes = dealer_generate(&f, counts(), [60u8; 32]);
    let work = Mutex::new(inputs.into_iter().zip(local_tapes).map(Some).collect::<Vec<_>>());
    let local = run_local_session([54u8; 16], move |party, ch| {
        let (input, mut tape) = work.lock().unwrap()[party.index()].take().unwrap();
        let mut session = Session::new(ch, &mut tape);
        workload(&mut session, input)
    })
    .unwrap();

    let tcp_tapes = dealer_generate(&f, counts(), [60u8; 32]);
    let tcp = run_tcp(seed, tcp_tapes, None);

    for party in 0..3 {
        let (lv, ls) = &local[party];
        let (tv, ts) = &tcp[party];
        assert_eq!(lv, &expect);
        assert_eq!(tv, &expect);
        // Rounds, multiplications and opens are fabric-independent.
        assert_eq!(ls.online_rounds, ts.online_rounds);
        assert_eq!(ls.mults, ts.mults);
        assert_eq!(ls.opens, ts.opens);
        assert_eq!(ls.frames_sent, ts.frames_sent);
        // Byte counters differ exactly by the framing overhead.
        assert_eq!(ls.frame_header_len, 0);
        assert_eq!(ts.frame_header_len, TCP_FRAME_HEADER_LEN);
        assert_eq!(
            ts.bytes_sent - ls.bytes_sent,
            ts.frames_sent * TCP_FRAME_HEADER_LEN
        );
        // Identical logical transcripts.
        assert_eq!(
            ls.transcript.finalize_hex(),
            ts.transcript.finalize_hex()
        );
    }
}

#[test]
fn sealed_channel_preserves_semantics_with_reported_overhead() {
    let seed = 7272;
    let f = FieldParams::production();
    let plain = run_tcp(seed, dealer_generate(&f, counts(), [61u8; 32]), None);
    let sealed = run_tcp(seed, dealer_generate(&f, counts(), [61u8; 32]), Some([9u8; 32]));
    for party in 0..3 {
        let (pv, ps) = &plain[party];
        let (sv, ss) = &sealed[party];
        assert_eq!(pv, sv, "sealing must not change results");
        assert_eq!(ps.online_rounds, ss.online_rounds);
        assert_eq!(
            ss.bytes_sent - ps.bytes_sent,
            ss.frames_sent * ChannelSeal::OVERHEAD,
            "sealing adds exactly the reported per-frame overhead"
        );
    }
}
