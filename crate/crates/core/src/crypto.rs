// Licensed under the Apache-2.0 license

//! Primitive operations used by every other module.
//!
//! Instantiation: AES-256-GCM for authenticated encryption, SHA-256 for
//! hashing, HMAC-SHA256 for keyed digests, HKDF-SHA256 for labelled key
//! derivation and ECIES over X25519 for wrapping symmetric keys to a public
//! key. Everything draws randomness from an explicit [`SecureRng`] so whole
//! simulations are reproducible from a seed.

use std::fmt;

use aes_gcm::aead::{Aead, Payload};
use aes_gcm::{Aes256Gcm, KeyInit};
use hkdf::Hkdf;
use hmac::{Hmac, Mac};
use rand_chacha::ChaCha20Rng;
use rand_core::{Rng, SeedableRng};
use sha2::{Digest as _, Sha256};
use subtle::ConstantTimeEq;
use thiserror::Error;
use x25519_dalek::{PublicKey as XPublicKey, StaticSecret};

use crate::wire::{Reader, WireError, Writer};

pub const KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;
pub const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("authentication failure")]
    AuthenticationFailure,
    #[error("public-key decryption failure")]
    DecryptionFailure,
    #[error("key derivation label must not be empty")]
    EmptyLabel,
    #[error("entropy source failure: {0}")]
    Entropy(String),
    #[error("malformed ciphertext: {0}")]
    Malformed(#[from] WireError),
}

/// Seeded CSPRNG handle. Every actor owns one.
pub struct SecureRng {
    inner: ChaCha20Rng,
    #[cfg(debug_assertions)]
    used_nonces: std::collections::HashSet<([u8; DIGEST_LEN], [u8; NONCE_LEN])>,
}

impl SecureRng {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        Self {
            inner: ChaCha20Rng::from_seed(seed),
            #[cfg(debug_assertions)]
            used_nonces: Default::default(),
        }
    }

    /// Child stream bound to `label`; independent of how much the parent has
    /// been drawn from.
    pub fn derive(master_seed: &[u8], label: &str) -> Self {
        let mut h = Sha256::new();
        h.update(b"softip/rng/");
        h.update((master_seed.len() as u32).to_be_bytes());
        h.update(master_seed);
        h.update(label.as_bytes());
        Self::from_seed(h.finalize().into())
    }

    pub fn from_os() -> Result<Self, CryptoError> {
        let mut seed = [0u8; 32];
        getrandom::fill(&mut seed).map_err(|e| CryptoError::Entropy(e.to_string()))?;
        Ok(Self::from_seed(seed))
    }

    pub fn fill(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst);
    }

    pub fn array<const N: usize>(&mut self) -> [u8; N] {
        let mut out = [0u8; N];
        self.fill(&mut out);
        out
    }

    pub fn vec(&mut self, len: usize) -> Vec<u8> {
        let mut out = vec![0u8; len];
        self.fill(&mut out);
        out
    }

    fn fresh_nonce(&mut self, _key: &SymKey) -> Nonce {
        let nonce = Nonce(self.array());
        #[cfg(debug_assertions)]
        {
            let fresh = self.used_nonces.insert((hash(&_key.0).0, nonce.0));
            debug_assert!(fresh, "AEAD nonce reused under one key");
        }
        nonce
    }
}

impl fmt::Debug for SecureRng {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecureRng")
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SymKey([u8; KEY_LEN]);

impl SymKey {
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        Self(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        bytes.try_into().ok().map(Self)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for SymKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymKey({})", &hash(&self.0).to_hex()[..8])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Nonce(pub [u8; NONCE_LEN]);

/// `{X}_K` on the wire: nonce, detached tag and ciphertext body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AeadCiphertext {
    pub nonce: Nonce,
    pub body: Vec<u8>,
    pub tag: [u8; TAG_LEN],
}

impl AeadCiphertext {
    /// nonce (12) || tag (16) || body (4-byte length prefix).
    pub fn encode_into(&self, w: &mut Writer) {
        w.raw(&self.nonce.0).raw(&self.tag).bytes(&self.body);
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let nonce = Nonce(r.array()?);
        let tag = r.array()?;
        let body = r.bytes()?.to_vec();
        Ok(Self { nonce, body, tag })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MacTag(pub [u8; DIGEST_LEN]);

pub fn gen_sym_key(rng: &mut SecureRng) -> SymKey {
    SymKey(rng.array())
}

fn cipher(key: &SymKey) -> Aes256Gcm {
    Aes256Gcm::new_from_slice(&key.0).expect("32-byte key")
}

pub fn aead_encrypt(key: &SymKey, plaintext: &[u8], aad: &[u8], rng: &mut SecureRng) -> AeadCiphertext {
    let nonce = rng.fresh_nonce(key);
    aead_encrypt_with_nonce(key, nonce, plaintext, aad)
}

/// Deterministic-nonce variant; callers are responsible for freshness.
pub fn aead_encrypt_with_nonce(key: &SymKey, nonce: Nonce, plaintext: &[u8], aad: &[u8]) -> AeadCiphertext {
    let mut out = cipher(key)
        .encrypt(aes_gcm::Nonce::from_slice(&nonce.0), Payload { msg: plaintext, aad })
        .expect("AES-GCM encryption cannot fail for in-memory buffers");
    let split = out.len() - TAG_LEN;
    let mut tag = [0u8; TAG_LEN];
    tag.copy_from_slice(&out[split..]);
    out.truncate(split);
    AeadCiphertext { nonce, body: out, tag }
}

pub fn aead_decrypt(key: &SymKey, ct: &AeadCiphertext, aad: &[u8]) -> Result<Vec<u8>, CryptoError> {
    let mut joined = Vec::with_capacity(ct.body.len() + TAG_LEN);
    joined.extend_from_slice(&ct.body);
    joined.extend_from_slice(&ct.tag);
    cipher(key)
        .decrypt(aes_gcm::Nonce::from_slice(&ct.nonce.0), Payload { msg: &joined, aad })
        .map_err(|_| CryptoError::AuthenticationFailure)
}

/// Decrypts the wire encoding of an [`AeadCiphertext`]; malformed input is
/// reported as an authentication failure.
pub fn aead_decrypt_encoded(key: &SymKey, encoded: &[u8], aad: &[u8]) -> Result<Vec<u8>, CryptoError> {
    let mut r = Reader::new(encoded);
    let ct = AeadCiphertext::decode_from(&mut r).map_err(|_| CryptoError::AuthenticationFailure)?;
    r.finish().map_err(|_| CryptoError::AuthenticationFailure)?;
    aead_decrypt(key, &ct, aad)
}

pub fn hash(message: &[u8]) -> Digest {
    Digest(Sha256::digest(message).into())
}

/// Hash over several fields, each length-prefixed so boundaries are unambiguous.
pub fn hash_parts(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u32).to_be_bytes());
        h.update(p);
    }
    Digest(h.finalize().into())
}

type HmacSha256 = Hmac<Sha256>;

pub fn mac(key: &SymKey, message: &[u8]) -> MacTag {
    mac_raw(&key.0, message)
}

fn mac_raw(key: &[u8], message: &[u8]) -> MacTag {
    let mut m = <HmacSha256 as Mac>::new_from_slice(key).expect("HMAC accepts any key length");
    m.update(message);
    MacTag(m.finalize().into_bytes().into())
}

pub fn mac_verify(key: &SymKey, message: &[u8], tag: &MacTag) -> bool {
    let expected = mac(key, message);
    expected.0.ct_eq(&tag.0).into()
}

pub fn derive_key(master: &SymKey, label: &str) -> Result<SymKey, CryptoError> {
    if label.is_empty() {
        return Err(CryptoError::EmptyLabel);
    }
    Ok(derive_key_bytes(master, label.as_bytes()))
}

/// HKDF-SHA256 expand with arbitrary `info`; used where the label carries
/// binary context such as handshake challenges.
pub fn derive_key_bytes(master: &SymKey, info: &[u8]) -> SymKey {
    let hk = Hkdf::<Sha256>::new(Some(b"softip/kdf/v1"), &master.0);
    let mut out = [0u8; KEY_LEN];
    hk.expand(info, &mut out).expect("32 bytes is a valid HKDF length");
    SymKey(out)
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PublicKeyBytes(pub [u8; 32]);

impl fmt::Debug for PublicKeyBytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", hex::encode(&self.0[..8]))
    }
}

#[derive(Clone)]
pub struct PrivateKey(StaticSecret);

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrivateKey(..)")
    }
}

impl PrivateKey {
    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }
}

#[derive(Debug, Clone)]
pub struct KeyPair {
    pub public: PublicKeyBytes,
    pub private: PrivateKey,
    pub key_id: Digest,
}

pub fn gen_keypair(rng: &mut SecureRng) -> KeyPair {
    let secret = StaticSecret::from(rng.array::<32>());
    let public = PublicKeyBytes(XPublicKey::from(&secret).to_bytes());
    KeyPair {
        key_id: hash(&public.0),
        public,
        private: PrivateKey(secret),
    }
}

const ECIES_LEN: usize = 32 + NONCE_LEN + TAG_LEN;

fn ecies_key(shared: &[u8; 32], ephemeral: &[u8; 32], recipient: &[u8; 32]) -> SymKey {
    let hk = Hkdf::<Sha256>::new(Some(b"softip/ecies/v1"), shared);
    let mut info = Vec::with_capacity(64);
    info.extend_from_slice(ephemeral);
    info.extend_from_slice(recipient);
    let mut out = [0u8; KEY_LEN];
    hk.expand(&info, &mut out).expect("32 bytes is a valid HKDF length");
    SymKey(out)
}

/// ECIES wrap: ephemeral public (32) || nonce (12) || tag (16) || body.
pub fn pub_encrypt(public: &PublicKeyBytes, message: &[u8], rng: &mut SecureRng) -> Vec<u8> {
    let eph = StaticSecret::from(rng.array::<32>());
    let eph_pub = XPublicKey::from(&eph).to_bytes();
    let shared = eph.diffie_hellman(&XPublicKey::from(public.0));
    let key = ecies_key(shared.as_bytes(), &eph_pub, &public.0);
    let ct = aead_encrypt(&key, message, &eph_pub, rng);
    let mut out = Vec::with_capacity(ECIES_LEN + message.len());
    out.extend_from_slice(&eph_pub);
    out.extend_from_slice(&ct.nonce.0);
    out.extend_from_slice(&ct.tag);
    out.extend_from_slice(&ct.body);
    out
}

pub fn pub_decrypt(keypair: &KeyPair, blob: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if blob.len() < ECIES_LEN {
        return Err(CryptoError::DecryptionFailure);
    }
    let mut eph_pub = [0u8; 32];
    eph_pub.copy_from_slice(&blob[..32]);
    let shared = keypair.private.0.diffie_hellman(&XPublicKey::from(eph_pub));
    if !shared.was_contributory() {
        return Err(CryptoError::DecryptionFailure);
    }
    let key = ecies_key(shared.as_bytes(), &eph_pub, &keypair.public.0);
    let mut nonce = [0u8; NONCE_LEN];
    nonce.copy_from_slice(&blob[32..32 + NONCE_LEN]);
    let mut tag = [0u8; TAG_LEN];
    tag.copy_from_slice(&blob[32 + NONCE_LEN..ECIES_LEN]);
    let ct = AeadCiphertext {
        nonce: Nonce(nonce),
        tag,
        body: blob[ECIES_LEN..].to_vec(),
    };
    aead_decrypt(&key, &ct, &eph_pub).map_err(|_| CryptoError::DecryptionFailure)
}
