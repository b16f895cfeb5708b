// Licensed under the Apache-2.0 license

//! Hardware Acceleration Platform emulator: the only trusted component on
//! the end-user side.

mod envelope;
mod registry;

use std::collections::BTreeMap;

pub use envelope::{EncryptedBitstreamEnvelope, EnvelopeHeader, Scheme, StorageMedium};
pub use registry::{HapId, HwvRegistry, RegistryEntry};

use crate::crypto::{
    aead_decrypt, gen_keypair, gen_sym_key, hash, pub_decrypt, Digest, KeyPair, PublicKeyBytes, SecureRng, SymKey,
};
use crate::daa::{
    self, Basename, DaaCredential, DaaError, DaaSignature, GroupParams, IssuerPublicKey, IssuerService, MemberSecret,
    Scalar,
};
use crate::wire::{WireError, Writer};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HapError {
    #[error("serial {0:?} already provisioned")]
    DuplicateSerial(String),
    #[error("authentication failure")]
    AuthenticationFailure,
    #[error("decryption failure")]
    DecryptionFailure,
    #[error("downgrade rejected: {app_id} v{version} < installed v{installed}")]
    DowngradeRejected {
        app_id: String,
        version: u64,
        installed: u64,
    },
    #[error("envelope scheme mismatch")]
    SchemeMismatch,
    #[error("no DAA credential for counter {0}")]
    NotJoined(u64),
    #[error("no attestation keypair")]
    NoKeypair,
    #[error("malformed envelope: {0}")]
    Malformed(#[from] WireError),
    #[error(transparent)]
    Daa(#[from] DaaError),
}

/// What the host learns from a successful load.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadReceipt {
    pub app_id: String,
    pub version: u64,
    pub digest: Digest,
}

impl LoadReceipt {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.str(&self.app_id).u64(self.version).raw(&self.digest.0);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = crate::wire::Reader::new(bytes);
        let receipt = Self {
            app_id: r.str()?.to_string(),
            version: r.u64()?,
            digest: Digest(r.array()?),
        };
        r.finish()?;
        Ok(receipt)
    }
}

/// A fresh public key and a DAA signature binding it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attestation {
    pub public: PublicKeyBytes,
    pub signature: DaaSignature,
}

/// Message signed by the HAP when attesting a keypair.
pub fn attest_message(public: &PublicKeyBytes, context: &[u8]) -> Vec<u8> {
    let mut w = Writer::new();
    w.str("softip/attest-key").raw(&public.0).bytes(context);
    w.finish()
}

struct Loaded {
    app_id: String,
    version: u64,
    bitstream: Vec<u8>,
}

struct DaaContext {
    params: GroupParams,
    issuer: IssuerPublicKey,
    credentials: BTreeMap<u64, DaaCredential>,
}

pub struct HapDevice {
    id: HapId,
    k_hap: SymKey,
    endorsement: SymKey,
    member: MemberSecret,
    daa: Option<DaaContext>,
    keyring: Vec<KeyPair>,
    installed_versions: BTreeMap<String, u64>,
    fpga_slot: Option<Loaded>,
    rng: SecureRng,
}

impl std::fmt::Debug for HapDevice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HapDevice")
            .field("id", &self.id)
            .finish_non_exhaustive()
    }
}

/// Manufactures a device and records its keys in the HWV registry.
pub fn hap_provision(registry: &HwvRegistry, serial: &str, rng: &mut SecureRng) -> Result<HapDevice, HapError> {
    let id = HapId::from_serial(serial);
    let k_hap = gen_sym_key(rng);
    let endorsement = gen_sym_key(rng);
    let entry = RegistryEntry {
        serial: serial.to_string(),
        k_hap: k_hap.clone(),
        endorsement: endorsement.clone(),
        revoked: false,
    };
    if !registry.insert(id, entry) {
        return Err(HapError::DuplicateSerial(serial.to_string()));
    }
    let mut device_rng = SecureRng::from_seed(rng.array());
    let member = MemberSecret::generate(&mut device_rng);
    Ok(HapDevice {
        id,
        k_hap,
        endorsement,
        member,
        daa: None,
        keyring: Vec::new(),
        installed_versions: BTreeMap::new(),
        fpga_slot: None,
        rng: device_rng,
    })
}

pub fn hap_get_id(dev: &HapDevice) -> HapId {
    dev.id
}

impl HapDevice {
    pub fn id(&self) -> HapId {
        self.id
    }

    /// Runs DAA setup (endorsement check) and join for `counter`.
    pub fn join(
        &mut self,
        issuer: &IssuerService,
        directory: &dyn daa::EndorsementDirectory,
        counter: u64,
    ) -> Result<(), HapError> {
        let ticket = daa::daa_setup(issuer, &self.id.0, &self.endorsement, directory, &mut self.rng)?;
        let cred = daa::daa_join(issuer, &self.member, counter, Some(&ticket), &mut self.rng)?;
        let ctx = match &mut self.daa {
            Some(ctx) if ctx.issuer.key_id == issuer.public().key_id => ctx,
            slot => slot.insert(DaaContext {
                params: issuer.params().clone(),
                issuer: issuer.public().clone(),
                credentials: BTreeMap::new(),
            }),
        };
        ctx.credentials.insert(counter, cred);
        Ok(())
    }

    pub fn is_joined(&self, counter: u64) -> bool {
        self.daa.as_ref().is_some_and(|c| c.credentials.contains_key(&counter))
    }

    /// Generates a fresh keypair and signs its public key with DAA.
    pub fn attest_keypair(
        &mut self,
        basename: &Basename,
        counter: u64,
        context: &[u8],
    ) -> Result<Attestation, HapError> {
        let ctx = self.daa.as_ref().ok_or(HapError::NotJoined(counter))?;
        let cred = ctx.credentials.get(&counter).ok_or(HapError::NotJoined(counter))?;
        let kp = gen_keypair(&mut self.rng);
        let msg = attest_message(&kp.public, context);
        let signature = daa::daa_sign(
            &ctx.params,
            &ctx.issuer,
            &self.member,
            cred,
            &msg,
            basename,
            counter,
            &mut self.rng,
        )?;
        let public = kp.public;
        self.keyring.push(kp);
        Ok(Attestation { public, signature })
    }

    pub fn load_simple(&mut self, envelope: &[u8]) -> Result<LoadReceipt, HapError> {
        let env = EncryptedBitstreamEnvelope::decode(envelope).map_err(|_| HapError::AuthenticationFailure)?;
        if env.header.scheme != Scheme::Simple {
            return Err(HapError::SchemeMismatch);
        }
        let bs = aead_decrypt(&self.k_hap, &env.ct, &env.header.aad()).map_err(|_| HapError::AuthenticationFailure)?;
        self.commit(&env.header, bs)
    }

    pub fn load_advanced(&mut self, envelope: &[u8]) -> Result<LoadReceipt, HapError> {
        let env = EncryptedBitstreamEnvelope::decode(envelope).map_err(|_| HapError::AuthenticationFailure)?;
        if env.header.scheme != Scheme::Advanced {
            return Err(HapError::SchemeMismatch);
        }
        if self.keyring.is_empty() {
            return Err(HapError::NoKeypair);
        }
        let blob = env.key_blob.as_deref().unwrap_or_default();
        let session_key = self
            .keyring
            .iter()
            .rev()
            .find_map(|kp| pub_decrypt(kp, blob).ok())
            .and_then(|k| SymKey::from_slice(&k))
            .ok_or(HapError::DecryptionFailure)?;
        let bs = aead_decrypt(&session_key, &env.ct, &env.header.aad()).map_err(|_| HapError::AuthenticationFailure)?;
        self.commit(&env.header, bs)
    }

    /// Loads by envelope scheme.
    pub fn load(&mut self, envelope: &[u8]) -> Result<LoadReceipt, HapError> {
        match envelope.first() {
            Some(&t) if t == Scheme::Advanced as u8 => self.load_advanced(envelope),
            _ => self.load_simple(envelope),
        }
    }

    fn commit(&mut self, header: &EnvelopeHeader, bitstream: Vec<u8>) -> Result<LoadReceipt, HapError> {
        let installed = self.installed_versions.get(&header.app_id).copied().unwrap_or(0);
        if header.version < installed {
            return Err(HapError::DowngradeRejected {
                app_id: header.app_id.clone(),
                version: header.version,
                installed,
            });
        }
        self.installed_versions.insert(header.app_id.clone(), header.version);
        let receipt = LoadReceipt {
            app_id: header.app_id.clone(),
            version: header.version,
            digest: hash(&bitstream),
        };
        self.fpga_slot = Some(Loaded {
            app_id: header.app_id.clone(),
            version: header.version,
            bitstream,
        });
        Ok(receipt)
    }

    pub fn installed_version(&self, app_id: &str) -> Option<u64> {
        self.installed_versions.get(app_id).copied()
    }

    pub fn installed_versions(&self) -> &BTreeMap<String, u64> {
        &self.installed_versions
    }

    /// Digest of the bitstream currently configured on the fabric.
    pub fn fpga_digest(&self) -> Option<Digest> {
        self.fpga_slot.as_ref().map(|l| hash(&l.bitstream))
    }

    pub fn fpga_app(&self) -> Option<(&str, u64)> {
        self.fpga_slot.as_ref().map(|l| (l.app_id.as_str(), l.version))
    }

    /// Simulates physical key extraction from a broken device, as needed to
    /// populate a rogue list. Not reachable through any protocol message.
    pub fn compromise(&self, counter: u64) -> Scalar {
        self.member.effective_key(counter)
    }

    /// Audit hook for taint scans: every secret byte string the device holds.
    pub fn audit_secrets(&self) -> Vec<(String, Vec<u8>)> {
        let mut out = vec![
            ("k_hap".to_string(), self.k_hap.as_bytes().to_vec()),
            ("endorsement".to_string(), self.endorsement.as_bytes().to_vec()),
            ("member_seed".to_string(), self.member.seed_bytes().to_vec()),
        ];
        if let Some(ctx) = &self.daa {
            for counter in ctx.credentials.keys() {
                out.push((
                    format!("member_key[{counter}]"),
                    self.member.effective_key(*counter).to_bytes().to_vec(),
                ));
            }
        }
        for (i, kp) in self.keyring.iter().enumerate() {
            out.push((format!("private_key[{i}]"), kp.private.to_bytes().to_vec()));
        }
        out
    }

    /// Test hook: whether the fabric holds exactly these plaintext bytes.
    pub fn fpga_holds(&self, bitstream: &[u8]) -> bool {
        self.fpga_slot.as_ref().is_some_and(|l| l.bitstream == bitstream)
    }
}

pub fn hap_load_simple(dev: &mut HapDevice, envelope: &[u8]) -> Result<LoadReceipt, HapError> {
    dev.load_simple(envelope)
}

pub fn hap_load_advanced(dev: &mut HapDevice, envelope: &[u8]) -> Result<LoadReceipt, HapError> {
    dev.load_advanced(envelope)
}

pub fn hap_attest_keypair(
    dev: &mut HapDevice,
    basename: &Basename,
    counter: u64,
    context: &[u8],
) -> Result<Attestation, HapError> {
    dev.attest_keypair(basename, counter, context)
}

#[cfg(test)]
mod tests;
