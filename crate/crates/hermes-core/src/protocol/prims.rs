//! Pluggable public-key primitives: signatures, the hybrid public-key
//! encryption used for key-share bundles, and consumer certificates.
//!
//! The default signature mode produces 512-bit signatures so a signed
//! booking packs into exactly ten 128-bit blocks (benchmark-mode message
//! size); an RSA-2048 mode exists as well but yields 22 blocks and is
//! flagged non-benchmark.

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Nonce};
use rand::{CryptoRng, RngCore};
use rsa::signature::{SignatureEncoding, Signer as RsaSigner, Verifier as RsaVerifier};
use rsa::RsaPrivateKey;
use serde::{Deserialize, Serialize};
use sha3::{Digest, Sha3_256, Sha3_512};

use crate::{Error, Result};

/// Which signature instantiation backs the abstract sign/verify contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignatureMode {
    /// 512-bit signatures (Ed25519); keeps the signed booking at 10 blocks.
    Compact512,
    /// RSA-2048 with PKCS#1 v1.5 padding; 2048-bit signatures, 22 blocks.
    Rsa2048,
}

#[derive(Clone)]
enum SigningInner {
    Ed(ed25519_dalek::SigningKey),
    Rsa(Box<rsa::pkcs1v15::SigningKey<sha2::Sha256>>),
}

#[derive(Clone)]
enum VerifyingInner {
    Ed(ed25519_dalek::VerifyingKey),
    Rsa(Box<rsa::pkcs1v15::VerifyingKey<sha2::Sha256>>),
}

#[derive(Clone)]
pub struct SigningKey(SigningInner);

#[derive(Clone)]
pub struct VerifyingKey(VerifyingInner);

impl std::fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SigningKey(..)")
    }
}

impl std::fmt::Debug for VerifyingKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "VerifyingKey(..)")
    }
}

impl SigningKey {
    pub fn generate(mode: SignatureMode, rng: &mut (impl RngCore + CryptoRng)) -> (SigningKey, VerifyingKey) {
        match mode {
            SignatureMode::Compact512 => {
                let sk = ed25519_dalek::SigningKey::generate(rng);
                let vk = sk.verifying_key();
                (
                    SigningKey(SigningInner::Ed(sk)),
                    VerifyingKey(VerifyingInner::Ed(vk)),
                )
            }
            SignatureMode::Rsa2048 => {
                let key = RsaPrivateKey::new(rng, 2048).expect("RSA key generation");
                let sk = rsa::pkcs1v15::SigningKey::new(key.clone());
                let vk = rsa::pkcs1v15::VerifyingKey::new(key.to_public_key());
                (
                    SigningKey(SigningInner::Rsa(Box::new(sk))),
                    VerifyingKey(VerifyingInner::Rsa(Box::new(vk))),
                )
            }
        }
    }

    pub fn mode(&self) -> SignatureMode {
        match &self.0 {
            SigningInner::Ed(_) => SignatureMode::Compact512,
            SigningInner::Rsa(_) => SignatureMode::Rsa2048,
        }
    }

    pub fn sign(&self, msg: &[u8]) -> Vec<u8> {
        match &self.0 {
            SigningInner::Ed(k) => k.sign(msg).to_bytes().to_vec(),
            SigningInner::Rsa(k) => k.sign(msg).to_vec(),
        }
    }
}

impl VerifyingKey {
    pub fn verify(&self, msg: &[u8], sig: &[u8]) -> bool {
        match &self.0 {
            VerifyingInner::Ed(k) => {
                let Ok(sig) = ed25519_dalek::Signature::from_slice(sig) else {
                    return false;
                };
                k.verify(msg, &sig).is_ok()
            }
            VerifyingInner::Rsa(k) => {
                let Ok(sig) = rsa::pkcs1v15::Signature::try_from(sig) else {
                    return false;
                };
                k.verify(msg, &sig).is_ok()
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        match &self.0 {
            VerifyingInner::Ed(k) => k.to_bytes().to_vec(),
            VerifyingInner::Rsa(k) => {
                use rsa::pkcs1::EncodeRsaPublicKey;
                k.as_ref().to_pkcs1_der().expect("RSA pubkey encoding").into_vec()
            }
        }
    }

    pub fn from_bytes(mode: SignatureMode, bytes: &[u8]) -> Result<VerifyingKey> {
        match mode {
            SignatureMode::Compact512 => {
                let arr: [u8; 32] = bytes
                    .try_into()
                    .map_err(|_| Error::Signature("bad public key length".into()))?;
                let vk = ed25519_dalek::VerifyingKey::from_bytes(&arr)
                    .map_err(|e| Error::Signature(format!("bad public key: {e}")))?;
                Ok(VerifyingKey(VerifyingInner::Ed(vk)))
            }
            SignatureMode::Rsa2048 => {
                use rsa::pkcs1::DecodeRsaPublicKey;
                let pk = rsa::RsaPublicKey::from_pkcs1_der(bytes)
                    .map_err(|e| Error::Signature(format!("bad public key: {e}")))?;
                Ok(VerifyingKey(VerifyingInner::Rsa(Box::new(
                    rsa::pkcs1v15::VerifyingKey::new(pk),
                ))))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Hybrid public-key encryption (KEM + DEM with integrity)
// ---------------------------------------------------------------------------

/// X25519 key pair for receiving key-share bundles.
#[derive(Clone)]
pub struct KemKeyPair {
    secret: x25519_dalek::StaticSecret,
    pub public: [u8; 32],
}

impl std::fmt::Debug for KemKeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "KemKeyPair({})", hex::encode(self.public))
    }
}

impl KemKeyPair {
    pub fn generate(rng: &mut (impl RngCore + CryptoRng)) -> KemKeyPair {
        let secret = x25519_dalek::StaticSecret::random_from_rng(rng);
        let public = x25519_dalek::PublicKey::from(&secret).to_bytes();
        KemKeyPair { secret, public }
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.secret.to_bytes()
    }

    pub fn from_secret_bytes(bytes: [u8; 32]) -> KemKeyPair {
        let secret = x25519_dalek::StaticSecret::from(bytes);
        let public = x25519_dalek::PublicKey::from(&secret).to_bytes();
        KemKeyPair { secret, public }
    }
}

fn dem_key(eph_pub: &[u8; 32], recipient_pub: &[u8; 32], shared: &[u8; 32]) -> [u8; 32] {
    let mut h = Sha3_256::new();
    h.update(b"HERMES-KEM-v1");
    h.update(eph_pub);
    h.update(recipient_pub);
    h.update(shared);
    h.finalize().into()
}

/// Seals `plaintext` to the recipient: ephemeral X25519 exchange, then an
/// authenticated cipher. Output: ephemeral public key || AEAD ciphertext.
pub fn kem_encrypt(
    recipient_pub: &[u8; 32],
    plaintext: &[u8],
    rng: &mut (impl RngCore + CryptoRng),
) -> Vec<u8> {
    let eph = x25519_dalek::EphemeralSecret::random_from_rng(rng);
    let eph_pub = x25519_dalek::PublicKey::from(&eph).to_bytes();
    let shared = eph
        .diffie_hellman(&x25519_dalek::PublicKey::from(*recipient_pub))
        .to_bytes();
    let key = dem_key(&eph_pub, recipient_pub, &shared);
    let cipher = ChaCha20Poly1305::new(&key.into());
    // The key is single-use, so a fixed nonce is fine.
    let ct = cipher
        .encrypt(Nonce::from_slice(&[0u8; 12]), plaintext)
        .expect("AEAD encryption");
    let mut out = eph_pub.to_vec();
    out.extend_from_slice(&ct);
    out
}

/// Opens a sealed bundle; any tampering fails authentication.
pub fn kem_decrypt(keys: &KemKeyPair, sealed: &[u8]) -> Result<Vec<u8>> {
    if sealed.len() < 32 + 16 {
        return Err(Error::KemDecrypt("sealed bundle too short".into()));
    }
    let eph_pub: [u8; 32] = sealed[..32].try_into().unwrap();
    let shared = keys
        .secret
        .diffie_hellman(&x25519_dalek::PublicKey::from(eph_pub))
        .to_bytes();
    let key = dem_key(&eph_pub, &keys.public, &shared);
    let cipher = ChaCha20Poly1305::new(&key.into());
    cipher
        .decrypt(Nonce::from_slice(&[0u8; 12]), &sealed[32..])
        .map_err(|_| Error::KemDecrypt("authentication failed".into()))
}

// ---------------------------------------------------------------------------
// Consumer certificates
// ---------------------------------------------------------------------------

/// A self-contained consumer certificate: display subject plus the public
/// key the vehicle challenges against. Its SHA3-512 digest is pinned inside
/// the booking details.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificate {
    pub subject: String,
    pub challenge_pubkey: [u8; 32],
}

impl Certificate {
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("certificate serialization")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Certificate> {
        serde_json::from_slice(bytes)
            .map_err(|e| Error::Encoding(format!("bad certificate: {e}")))
    }

    /// SHA3-512 digest, the 64-byte value embedded in booking details.
    pub fn digest(&self) -> [u8; 64] {
        Sha3_512::digest(self.to_bytes()).into()
    }
}
