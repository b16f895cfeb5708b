// Licensed under the Apache-2.0 license

use std::collections::BTreeMap;

use crate::crypto::{aead_encrypt, gen_sym_key, pub_encrypt, AeadCiphertext, PublicKeyBytes, SecureRng, SymKey};
use crate::wire::{Reader, WireError, Writer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scheme {
    Simple = 1,
    Advanced = 2,
}

impl Scheme {
    fn from_tag(tag: u8) -> Result<Self, WireError> {
        match tag {
            1 => Ok(Scheme::Simple),
            2 => Ok(Scheme::Advanced),
            t => Err(WireError::UnknownTag(t)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvelopeHeader {
    pub scheme: Scheme,
    pub app_id: String,
    pub version: u64,
}

impl EnvelopeHeader {
    fn encode_into(&self, w: &mut Writer) {
        w.u8(self.scheme as u8).str(&self.app_id).u64(self.version);
    }

    /// Associated data for the bitstream ciphertext.
    pub fn aad(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode_into(&mut w);
        w.finish()
    }
}

/// `header || key_blob || {BS}_K`, with the header bound as AEAD associated data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedBitstreamEnvelope {
    pub header: EnvelopeHeader,
    pub key_blob: Option<Vec<u8>>,
    pub ct: AeadCiphertext,
}

impl EncryptedBitstreamEnvelope {
    /// Simple scheme: `{BS}_{K_HAP}`, built by the HWV.
    pub fn seal_simple(k_hap: &SymKey, app_id: &str, version: u64, bitstream: &[u8], rng: &mut SecureRng) -> Self {
        let header = EnvelopeHeader {
            scheme: Scheme::Simple,
            app_id: app_id.to_string(),
            version,
        };
        let ct = aead_encrypt(k_hap, bitstream, &header.aad(), rng);
        Self {
            header,
            key_blob: None,
            ct,
        }
    }

    /// Advanced scheme: `{K_s}_{pub} || {BS}_{K_s}`. Returns the session key
    /// so the caller can account for it; it is never part of the envelope in clear.
    pub fn seal_advanced(
        recipient: &PublicKeyBytes,
        app_id: &str,
        version: u64,
        bitstream: &[u8],
        rng: &mut SecureRng,
    ) -> (Self, SymKey) {
        let session_key = gen_sym_key(rng);
        let header = EnvelopeHeader {
            scheme: Scheme::Advanced,
            app_id: app_id.to_string(),
            version,
        };
        let key_blob = pub_encrypt(recipient, session_key.as_bytes(), rng);
        let ct = aead_encrypt(&session_key, bitstream, &header.aad(), rng);
        let env = Self {
            header,
            key_blob: Some(key_blob),
            ct,
        };
        (env, session_key)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.header.encode_into(&mut w);
        w.bytes(self.key_blob.as_deref().unwrap_or(&[]));
        self.ct.encode_into(&mut w);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let header = EnvelopeHeader {
            scheme: Scheme::from_tag(r.u8()?)?,
            app_id: r.str()?.to_string(),
            version: r.u64()?,
        };
        let blob = r.bytes()?;
        let key_blob = match (header.scheme, blob.is_empty()) {
            (Scheme::Simple, true) => None,
            (Scheme::Advanced, false) => Some(blob.to_vec()),
            (Scheme::Simple, false) => return Err(WireError::Invalid("key blob in simple envelope")),
            (Scheme::Advanced, true) => return Err(WireError::Invalid("advanced envelope without key blob")),
        };
        let ct = AeadCiphertext::decode_from(&mut r)?;
        r.finish()?;
        Ok(Self { header, key_blob, ct })
    }
}

/// Untrusted host storage. Holds envelope bytes only.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StorageMedium {
    records: BTreeMap<String, Vec<u8>>,
}

impl StorageMedium {
    pub fn read(&self, app_id: &str) -> Option<&[u8]> {
        self.records.get(app_id).map(Vec::as_slice)
    }

    pub fn write(&mut self, app_id: &str, envelope: Vec<u8>) {
        self.records.insert(app_id.to_string(), envelope);
    }

    pub fn remove(&mut self, app_id: &str) -> Option<Vec<u8>> {
        self.records.remove(app_id)
    }

    pub fn records(&self) -> &BTreeMap<String, Vec<u8>> {
        &self.records
    }
}
