//! Instrumented party-to-party messaging for the three servers.
//!
//! Two fabrics share one semantics: an in-process loopback hub (used by the
//! benchmark and most tests) and a TCP fabric. All payloads for one
//! dependency layer are coalesced into one frame per ordered pair of
//! parties; a layer exchange bumps the round counter exactly once however
//! much data it carries. The TCP fabric frames every message as
//! `"HMF1" | u32 payload length | u8 msg type | 16-byte session id |
//! u32 layer index | payload` (integers little-endian); the loopback hub
//! carries the same logical fields without serializing a header, so byte
//! counters differ between fabrics only by `frames * header length`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use sha3::{Digest, Sha3_256};

use crate::share::PartyId;
use crate::tape::TapeUsage;
use crate::{Error, Result};

pub const FRAME_MAGIC: &[u8; 4] = b"HMF1";
/// magic + length + msg type + session id + layer index.
pub const TCP_FRAME_HEADER_LEN: u64 = 4 + 4 + 1 + 16 + 4;

pub const MSG_TYPE_HELLO: u8 = 0;
pub const MSG_TYPE_LAYER: u8 = 1;

/// How long a party waits on a peer before declaring the session dead.
pub const RECV_TIMEOUT: Duration = Duration::from_secs(10);

/// Per-session instrumentation counters.
#[derive(Clone, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct TranscriptStats {
    /// Communication layers executed (equals the dependency depth of the
    /// evaluated circuit under full batching).
    pub online_rounds: u64,
    /// Bytes this party sent, including fabric framing.
    pub bytes_sent: u64,
    /// Frames this party sent.
    pub frames_sent: u64,
    /// Fabric framing overhead per frame, reported separately so byte
    /// counts can be compared across fabrics.
    pub frame_header_len: u64,
    /// Secret multiplications (Beaver-tuple equivalents; cube tuples count
    /// as one each).
    pub mults: u64,
    pub and_gates: u64,
    /// Values opened, masked cube openings included.
    pub opens: u64,
    pub preprocessing: TapeUsage,
    #[serde(skip)]
    pub wall_time: Duration,
    /// Running digest of (layer, direction, payload) triples this party
    /// sent, for byte-exactness checks across runs.
    #[serde(skip)]
    pub transcript: TranscriptDigest,
}

#[derive(Clone)]
pub struct TranscriptDigest(Sha3_256);

impl Default for TranscriptDigest {
    fn default() -> Self {
        TranscriptDigest(Sha3_256::new())
    }
}

impl std::fmt::Debug for TranscriptDigest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TranscriptDigest")
    }
}

impl TranscriptDigest {
    fn absorb(&mut self, layer: u32, to_next: bool, payload: &[u8]) {
        self.0.update(layer.to_le_bytes());
        self.0.update([to_next as u8]);
        self.0.update((payload.len() as u64).to_le_bytes());
        self.0.update(payload);
    }

    pub fn finalize_hex(&self) -> String {
        hex::encode(self.0.clone().finalize())
    }
}

impl TranscriptStats {
    /// Byte count net of framing, comparable across fabrics.
    pub fn payload_bytes_sent(&self) -> u64 {
        self.bytes_sent - self.frames_sent * self.frame_header_len
    }
}

/// Payloads a party contributes to / expects from one layer exchange.
#[derive(Debug, Default)]
pub struct LayerIo {
    pub to_next: Option<Vec<u8>>,
    pub to_prev: Option<Vec<u8>>,
    pub expect_next: bool,
    pub expect_prev: bool,
}

/// One party's endpoint in a three-party session.
pub trait SessionChannel: Send {
    fn party(&self) -> PartyId;

    /// Barrier exchange for one dependency layer. Every party must call
    /// this with the same layer index and complementary expectations.
    fn exchange(
        &mut self,
        layer: u32,
        io: LayerIo,
        stats: &mut TranscriptStats,
    ) -> Result<(Option<Vec<u8>>, Option<Vec<u8>>)>;

    /// Session bring-up: sends `info` to both peers and returns both peers'
    /// info, without touching the online counters.
    fn hello(&mut self, info: &[u8]) -> Result<[Vec<u8>; 2]>;
}

#[derive(Debug)]
struct LogicalFrame {
    msg_type: u8,
    layer: u32,
    payload: Vec<u8>,
}

// ---------------------------------------------------------------------------
// Loopback fabric
// ---------------------------------------------------------------------------

/// In-process fabric connecting three parties of one session.
pub struct LocalHub;

pub struct LocalChannel {
    party: PartyId,
    session_id: [u8; 16],
    to_next: Sender<LogicalFrame>,
    to_prev: Sender<LogicalFrame>,
    from_next: Receiver<LogicalFrame>,
    from_prev: Receiver<LogicalFrame>,
}

impl LocalHub {
    /// Builds the three connected endpoints of a session.
    pub fn session(session_id: [u8; 16]) -> [LocalChannel; 3] {
        // One directed queue per ordered pair.
        let mut senders: HashMap<(u8, u8), Sender<LogicalFrame>> = HashMap::new();
        let mut receivers: HashMap<(u8, u8), Receiver<LogicalFrame>> = HashMap::new();
        for from in 0..3u8 {
            for to in 0..3u8 {
                if from != to {
                    let (tx, rx) = channel();
                    senders.insert((from, to), tx);
                    receivers.insert((from, to), rx);
                }
            }
        }
        let mut out = Vec::new();
        for i in 0..3u8 {
            let p = PartyId(i);
            out.push(LocalChannel {
                party: p,
                session_id,
                to_next: senders[&(i, p.next().0)].clone(),
                to_prev: senders[&(i, p.prev().0)].clone(),
                from_next: receivers.remove(&(p.next().0, i)).unwrap(),
                from_prev: receivers.remove(&(p.prev().0, i)).unwrap(),
            });
        }
        let mut it = out.into_iter();
        [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()]
    }
}

fn check_frame(frame: &LogicalFrame, layer: u32, from: PartyId) -> Result<()> {
    if frame.msg_type != MSG_TYPE_LAYER {
        return Err(Error::Desync(format!(
            "party {} sent msg type {} inside a layer",
            from.0, frame.msg_type
        )));
    }
    if frame.layer != layer {
        return Err(Error::Desync(format!(
            "layer index mismatch: expected {layer}, got {} from party {}",
            frame.layer, from.0
        )));
    }
    Ok(())
}

fn recv_timeout(rx: &Receiver<LogicalFrame>, from: PartyId) -> Result<LogicalFrame> {
    rx.recv_timeout(RECV_TIMEOUT)
        .map_err(|_| Error::SessionAbort(format!("peer {} not responding", from.0)))
}

impl SessionChannel for LocalChannel {
    fn party(&self) -> PartyId {
        self.party
    }

    fn exchange(
        &mut self,
        layer: u32,
        io: LayerIo,
        stats: &mut TranscriptStats,
    ) -> Result<(Option<Vec<u8>>, Option<Vec<u8>>)> {
        let _ = self.session_id;
        stats.online_rounds += 1;
        stats.frame_header_len = 0;
        if let Some(payload) = io.to_next {
            stats.bytes_sent += payload.len() as u64;
            stats.frames_sent += 1;
            stats.transcript.absorb(layer, true, &payload);
            self.to_next
                .send(LogicalFrame { msg_type: MSG_TYPE_LAYER, layer, payload })
                .map_err(|_| Error::SessionAbort("successor hung up".into()))?;
        }
        if let Some(payload) = io.to_prev {
            stats.bytes_sent += payload.len() as u64;
            stats.frames_sent += 1;
            stats.transcript.absorb(layer, false, &payload);
            self.to_prev
                .send(LogicalFrame { msg_type: MSG_TYPE_LAYER, layer, payload })
                .map_err(|_| Error::SessionAbort("predecessor hung up".into()))?;
        }
        let mut from_next = None;
        let mut from_prev = None;
        if io.expect_next {
            let f = recv_timeout(&self.from_next, self.party.next())?;
            check_frame(&f, layer, self.party.next())?;
            from_next = Some(f.payload);
        }
        if io.expect_prev {
            let f = recv_timeout(&self.from_prev, self.party.prev())?;
            check_frame(&f, layer, self.party.prev())?;
            from_prev = Some(f.payload);
        }
        Ok((from_next, from_prev))
    }

    fn hello(&mut self, info: &[u8]) -> Result<[Vec<u8>; 2]> {
        for tx in [&self.to_next, &self.to_prev] {
            tx.send(LogicalFrame {
                msg_type: MSG_TYPE_HELLO,
                layer: u32::MAX,
                payload: info.to_vec(),
            })
            .map_err(|_| Error::SessionAbort("peer hung up during hello".into()))?;
        }
        let a = recv_timeout(&self.from_next, self.party.next())?;
        let b = recv_timeout(&self.from_prev, self.party.prev())?;
        for f in [&a, &b] {
            if f.msg_type != MSG_TYPE_HELLO {
                return Err(Error::Desync("expected hello".into()));
            }
        }
        Ok([a.payload, b.payload])
    }
}

// ---------------------------------------------------------------------------
// TCP fabric
// ---------------------------------------------------------------------------

fn write_frame(
    stream: &mut TcpStream,
    session_id: &[u8; 16],
    frame: &LogicalFrame,
) -> Result<()> {
    let mut buf = Vec::with_capacity(TCP_FRAME_HEADER_LEN as usize + frame.payload.len());
    buf.extend_from_slice(FRAME_MAGIC);
    buf.extend_from_slice(&(frame.payload.len() as u32).to_le_bytes());
    buf.push(frame.msg_type);
    buf.extend_from_slice(session_id);
    buf.extend_from_slice(&frame.layer.to_le_bytes());
    buf.extend_from_slice(&frame.payload);
    stream
        .write_all(&buf)
        .map_err(|e| Error::Transport(format!("send failed: {e}")))
}

fn read_frame(stream: &mut TcpStream, session_id: &[u8; 16]) -> Result<LogicalFrame> {
    let mut header = [0u8; TCP_FRAME_HEADER_LEN as usize];
    stream
        .read_exact(&mut header)
        .map_err(|e| Error::Transport(format!("recv failed: {e}")))?;
    if &header[0..4] != FRAME_MAGIC {
        return Err(Error::Transport("bad frame magic".into()));
    }
    let len = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let msg_type = header[8];
    if &header[9..25] != session_id {
        return Err(Error::Desync("frame for a different session".into()));
    }
    let layer = u32::from_le_bytes(header[25..29].try_into().unwrap());
    let mut payload = vec![0u8; len];
    stream
        .read_exact(&mut payload)
        .map_err(|e| Error::Transport(format!("recv failed: {e}")))?;
    Ok(LogicalFrame { msg_type, layer, payload })
}

pub struct TcpChannel {
    party: PartyId,
    session_id: [u8; 16],
    next_tx: TcpStream,
    prev_tx: TcpStream,
    from_next: Receiver<LogicalFrame>,
    from_prev: Receiver<LogicalFrame>,
    seal: Option<ChannelSeal>,
    send_counter: u64,
}

/// Authenticated-encryption wrap for the data plane, enabled by a
/// pre-shared session key. Measurement runs leave it off so byte counters
/// reflect the protocol alone.
#[derive(Clone)]
pub struct ChannelSeal {
    key: [u8; 32],
}

impl ChannelSeal {
    pub fn new(psk: [u8; 32]) -> ChannelSeal {
        ChannelSeal { key: psk }
    }

    /// Per-frame overhead added by the wrap.
    pub const OVERHEAD: u64 = 12 + 16; // nonce + tag

    fn cipher(&self) -> chacha20poly1305::ChaCha20Poly1305 {
        use chacha20poly1305::KeyInit;
        chacha20poly1305::ChaCha20Poly1305::new(&self.key.into())
    }

    fn seal(&self, from: PartyId, counter: u64, plaintext: &[u8]) -> Vec<u8> {
        use chacha20poly1305::aead::Aead;
        let mut nonce = [0u8; 12];
        nonce[0] = from.0;
        nonce[4..12].copy_from_slice(&counter.to_le_bytes());
        let ct = self
            .cipher()
            .encrypt(chacha20poly1305::Nonce::from_slice(&nonce), plaintext)
            .expect("aead seal");
        let mut out = nonce.to_vec();
        out.extend_from_slice(&ct);
        out
    }

    fn open(&self, sealed: &[u8]) -> Result<Vec<u8>> {
        use chacha20poly1305::aead::Aead;
        if sealed.len() < 12 + 16 {
            return Err(Error::Transport("sealed frame too short".into()));
        }
        self.cipher()
            .decrypt(
                chacha20poly1305::Nonce::from_slice(&sealed[..12]),
                &sealed[12..],
            )
            .map_err(|_| Error::Transport("frame authentication failed".into()))
    }
}

/// Connects this party to its two peers over TCP.
///
/// Parties with a lower id accept connections from higher ids; the address
/// list gives each party's listen address. Each established stream gets a
/// dedicated reader thread so symmetric bulk sends cannot deadlock.
pub fn connect_tcp(
    party: PartyId,
    session_id: [u8; 16],
    listener: &TcpListener,
    peer_addrs: &[String; 3],
) -> Result<TcpChannel> {
    connect_tcp_sealed(party, session_id, listener, peer_addrs, None)
}

/// [`connect_tcp`] with an optional authenticated-encryption wrap over
/// every data-plane frame.
pub fn connect_tcp_sealed(
    party: PartyId,
    session_id: [u8; 16],
    listener: &TcpListener,
    peer_addrs: &[String; 3],
    seal: Option<ChannelSeal>,
) -> Result<TcpChannel> {
    let mut streams: [Option<TcpStream>; 3] = [None, None, None];
    // Dial lower-numbered peers.
    for peer in 0..party.0 {
        let addr = &peer_addrs[peer as usize];
        let mut attempt = 0;
        let stream = loop {
            match TcpStream::connect(addr) {
                Ok(s) => break s,
                Err(e) if attempt < 50 => {
                    attempt += 1;
                    std::thread::sleep(Duration::from_millis(100));
                    let _ = e;
                }
                Err(e) => {
                    return Err(Error::Transport(format!(
                        "party {} unreachable at {addr}: {e}",
                        peer
                    )))
                }
            }
        };
        let mut s = stream;
        s.set_nodelay(true).ok();
        // Identify ourselves.
        write_frame(
            &mut s,
            &session_id,
            &LogicalFrame { msg_type: MSG_TYPE_HELLO, layer: u32::MAX, payload: vec![party.0] },
        )?;
        streams[peer as usize] = Some(s);
    }
    // Accept higher-numbered peers, bounded by a deadline so a missing
    // peer turns into a session abort instead of a hang.
    listener.set_nonblocking(true).ok();
    let deadline = std::time::Instant::now() + RECV_TIMEOUT;
    for _ in (party.0 + 1)..3 {
        let mut s = loop {
            match listener.accept() {
                Ok((s, _)) => break s,
                Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    if std::time::Instant::now() > deadline {
                        return Err(Error::SessionAbort(
                            "timed out waiting for a peer connection".into(),
                        ));
                    }
                    std::thread::sleep(Duration::from_millis(20));
                }
                Err(e) => return Err(Error::Transport(format!("accept failed: {e}"))),
            }
        };
        s.set_nonblocking(false).ok();
        s.set_nodelay(true).ok();
        let f = read_frame(&mut s, &session_id)?;
        if f.msg_type != MSG_TYPE_HELLO || f.payload.len() != 1 {
            return Err(Error::Transport("bad peer introduction".into()));
        }
        let peer = f.payload[0];
        if peer as usize >= 3 || streams[peer as usize].is_some() {
            return Err(Error::Transport("duplicate peer introduction".into()));
        }
        streams[peer as usize] = Some(s);
    }

    let take = |streams: &mut [Option<TcpStream>; 3], id: PartyId| -> Result<TcpStream> {
        streams[id.index()]
            .take()
            .ok_or_else(|| Error::Transport(format!("missing stream to party {}", id.0)))
    };
    let next_stream = take(&mut streams, party.next())?;
    let prev_stream = take(&mut streams, party.prev())?;

    let spawn_reader = |stream: &TcpStream| -> Result<Receiver<LogicalFrame>> {
        let (tx, rx) = channel();
        let mut stream = stream
            .try_clone()
            .map_err(|e| Error::Transport(format!("clone failed: {e}")))?;
        std::thread::spawn(move || loop {
            match read_frame(&mut stream, &session_id) {
                Ok(f) => {
                    if tx.send(f).is_err() {
                        break;
                    }
                }
                Err(_) => break,
            }
        });
        Ok(rx)
    };
    let from_next = spawn_reader(&next_stream)?;
    let from_prev = spawn_reader(&prev_stream)?;
    Ok(TcpChannel {
        party,
        session_id,
        next_tx: next_stream,
        prev_tx: prev_stream,
        from_next,
        from_prev,
        seal,
        send_counter: 0,
    })
}

impl SessionChannel for TcpChannel {
    fn party(&self) -> PartyId {
        self.party
    }

    fn exchange(
        &mut self,
        layer: u32,
        io: LayerIo,
        stats: &mut TranscriptStats,
    ) -> Result<(Option<Vec<u8>>, Option<Vec<u8>>)> {
        stats.online_rounds += 1;
        stats.frame_header_len =
            TCP_FRAME_HEADER_LEN + self.seal.as_ref().map_or(0, |_| ChannelSeal::OVERHEAD);
        if let Some(payload) = io.to_next {
            stats.transcript.absorb(layer, true, &payload);
            let wire = match &self.seal {
                Some(seal) => {
                    self.send_counter += 1;
                    seal.seal(self.party, self.send_counter, &payload)
                }
                None => payload,
            };
            stats.bytes_sent += wire.len() as u64 + TCP_FRAME_HEADER_LEN;
            stats.frames_sent += 1;
            write_frame(
                &mut self.next_tx,
                &self.session_id,
                &LogicalFrame { msg_type: MSG_TYPE_LAYER, layer, payload: wire },
            )?;
        }
        if let Some(payload) = io.to_prev {
            stats.transcript.absorb(layer, false, &payload);
            let wire = match &self.seal {
                Some(seal) => {
                    self.send_counter += 1;
                    seal.seal(self.party, self.send_counter, &payload)
                }
                None => payload,
            };
            stats.bytes_sent += wire.len() as u64 + TCP_FRAME_HEADER_LEN;
            stats.frames_sent += 1;
            write_frame(
                &mut self.prev_tx,
                &self.session_id,
                &LogicalFrame { msg_type: MSG_TYPE_LAYER, layer, payload: wire },
            )?;
        }
        let mut unwrap = |f: LogicalFrame| -> Result<Vec<u8>> {
            match &self.seal {
                Some(seal) => seal.open(&f.payload),
                None => Ok(f.payload),
            }
        };
        let mut from_next = None;
        let mut from_prev = None;
        if io.expect_next {
            let f = recv_timeout(&self.from_next, self.party.next())?;
            check_frame(&f, layer, self.party.next())?;
            from_next = Some(unwrap(f)?);
        }
        if io.expect_prev {
            let f = recv_timeout(&self.from_prev, self.party.prev())?;
            check_frame(&f, layer, self.party.prev())?;
            from_prev = Some(unwrap(f)?);
        }
        Ok((from_next, from_prev))
    }

    fn hello(&mut self, info: &[u8]) -> Result<[Vec<u8>; 2]> {
        for stream in [&mut self.next_tx, &mut self.prev_tx] {
            write_frame(
                stream,
                &self.session_id,
                &LogicalFrame {
                    msg_type: MSG_TYPE_HELLO,
                    layer: u32::MAX,
                    payload: info.to_vec(),
                },
            )?;
        }
        let a = recv_timeout(&self.from_next, self.party.next())?;
        let b = recv_timeout(&self.from_prev, self.party.prev())?;
        for f in [&a, &b] {
            if f.msg_type != MSG_TYPE_HELLO {
                return Err(Error::Desync("expected hello".into()));
            }
        }
        Ok([a.payload, b.payload])
    }
}

/// Runs the same party closure on three threads over a loopback session and
/// returns the three results in party order. Panics in a party thread are
/// converted into errors.
pub fn run_local_session<T, F>(session_id: [u8; 16], f: F) -> Result<[T; 3]>
where
    T: Send + 'static,
    F: Fn(PartyId, LocalChannel) -> Result<T> + Send + Sync + 'static,
{
    let channels = LocalHub::session(session_id);
    let f = Arc::new(f);
    let results: Arc<Mutex<[Option<Result<T>>; 3]>> = Arc::new(Mutex::new([None, None, None]));
    let mut handles = Vec::new();
    for ch in channels {
        let f = f.clone();
        let results = results.clone();
        let party = ch.party();
        handles.push(std::thread::spawn(move || {
            let out = f(party, ch);
            results.lock().unwrap()[party.index()] = Some(out);
        }));
    }
    for h in handles {
        h.join()
            .map_err(|_| Error::SessionAbort("party thread panicked".into()))?;
    }
    let mut guard = results.lock().unwrap();
    let mut out = Vec::with_capacity(3);
    for slot in guard.iter_mut() {
        out.push(slot.take().ok_or_else(|| {
            Error::SessionAbort("party produced no result".into())
        })??);
    }
    let mut it = out.into_iter();
    Ok([it.next().unwrap(), it.next().unwrap(), it.next().unwrap()])
}
