// Licensed under the Apache-2.0 license

//! Issuer role: platform-health check (setup), blind credential issuance
//! (join) and the rogue oracle.

use std::collections::BTreeSet;
use std::sync::{Mutex, RwLock};

use bls12_381::{G1Projective, G2Projective, Scalar};

use super::params::{g1_bytes, g2_bytes, hash_to_scalar, random_nonzero_scalar, random_scalar, GroupParams};
use super::rogue::RogueList;
use super::signature::BaseSpec;
use super::DaaError;
use crate::crypto::{self, hash, mac, Digest, MacTag, SecureRng, SymKey};

#[derive(Debug, Clone)]
pub struct IssuerPublicKey {
    pub w: G2Projective,
    pub key_id: Digest,
}

impl IssuerPublicKey {
    fn from_w(w: G2Projective) -> Self {
        Self {
            key_id: hash(&g2_bytes(&w)),
            w,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IssuerKeyPair {
    secret: Scalar,
    pub public: IssuerPublicKey,
    pub params: GroupParams,
}

impl IssuerKeyPair {
    pub fn generate(params: GroupParams, rng: &mut SecureRng) -> Self {
        let secret = random_nonzero_scalar(rng);
        let public = IssuerPublicKey::from_w(params.g2 * secret);
        Self { secret, public, params }
    }
}

/// Looks up the endorsement key provisioned into a device at manufacture.
pub trait EndorsementDirectory {
    fn endorsement(&self, device_id: &[u8]) -> Option<EndorsementRecord>;
}

#[derive(Debug, Clone)]
pub struct EndorsementRecord {
    pub key: SymKey,
    pub revoked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SetupChallenge {
    pub nonce: [u8; 32],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndorsementProof {
    pub device_id: Vec<u8>,
    pub tag: MacTag,
}

pub(crate) fn endorsement_message(nonce: &[u8; 32], device_id: &[u8]) -> Vec<u8> {
    crypto::hash_parts(&[b"softip/daa/setup", nonce, device_id]).0.to_vec()
}

pub fn endorse(endorsement_key: &SymKey, device_id: &[u8], challenge: &SetupChallenge) -> EndorsementProof {
    EndorsementProof {
        device_id: device_id.to_vec(),
        tag: mac(endorsement_key, &endorsement_message(&challenge.nonce, device_id)),
    }
}

/// Proof that setup passed; its nonce must be echoed by the join request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SetupTicket {
    pub join_nonce: [u8; 32],
}

/// Schnorr proof of knowledge of `(f, s')` with `C = h0*s' + h1*f`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitmentProof {
    pub c: Scalar,
    pub z_blind: Scalar,
    pub z_key: Scalar,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinRequest {
    pub join_nonce: [u8; 32],
    pub commitment: G1Projective,
    pub proof: CommitmentProof,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinResponse {
    pub a: G1Projective,
    pub e: Scalar,
    pub s_issuer: Scalar,
}

pub(crate) fn commitment_challenge(nonce: &[u8; 32], commitment: &G1Projective, t: &G1Projective) -> Scalar {
    hash_to_scalar(&[b"softip/daa/join", nonce, &g1_bytes(commitment), &g1_bytes(t)])
}

/// Issuer service shared by HWV endpoints: key material plus the
/// synchronized setup-session table and rogue list.
#[derive(Debug)]
pub struct IssuerService {
    keys: IssuerKeyPair,
    pending: Mutex<BTreeSet<[u8; 32]>>,
    rogue: RwLock<RogueList>,
}

impl IssuerService {
    pub fn new(keys: IssuerKeyPair) -> Self {
        Self {
            keys,
            pending: Mutex::new(BTreeSet::new()),
            rogue: RwLock::new(RogueList::default()),
        }
    }

    pub fn public(&self) -> &IssuerPublicKey {
        &self.keys.public
    }

    pub fn params(&self) -> &GroupParams {
        &self.keys.params
    }

    pub fn setup_challenge(&self, rng: &mut SecureRng) -> SetupChallenge {
        SetupChallenge { nonce: rng.array() }
    }

    /// Checks the platform's endorsement. No member secret is involved.
    pub fn setup(
        &self,
        challenge: &SetupChallenge,
        proof: &EndorsementProof,
        directory: &dyn EndorsementDirectory,
    ) -> Result<SetupTicket, DaaError> {
        let record = directory
            .endorsement(&proof.device_id)
            .ok_or(DaaError::EndorsementInvalid)?;
        let msg = endorsement_message(&challenge.nonce, &proof.device_id);
        if !crypto::mac_verify(&record.key, &msg, &proof.tag) {
            return Err(DaaError::EndorsementInvalid);
        }
        if record.revoked {
            return Err(DaaError::EndorsementRevoked);
        }
        let join_nonce = crypto::hash_parts(&[b"softip/daa/join-nonce", &challenge.nonce, &proof.device_id]).0;
        self.pending.lock().expect("issuer lock").insert(join_nonce);
        Ok(SetupTicket { join_nonce })
    }

    /// Blind issuance: sees only the hiding commitment and its proof.
    pub fn issue(&self, req: &JoinRequest, rng: &mut SecureRng) -> Result<JoinResponse, DaaError> {
        if !self.pending.lock().expect("issuer lock").remove(&req.join_nonce) {
            return Err(DaaError::SetupNotDone);
        }
        let p = &self.keys.params;
        let t = p.h0 * req.proof.z_blind + p.h1 * req.proof.z_key - req.commitment * req.proof.c;
        if commitment_challenge(&req.join_nonce, &req.commitment, &t) != req.proof.c {
            return Err(DaaError::IssuerRejects);
        }
        let (e, inv) = loop {
            let e = random_scalar(rng);
            if let Some(inv) = Option::<Scalar>::from((self.keys.secret + e).invert()) {
                break (e, inv);
            }
        };
        let s_issuer = random_scalar(rng);
        let a = (p.g1 + p.h0 * s_issuer + req.commitment) * inv;
        Ok(JoinResponse { a, e, s_issuer })
    }

    pub fn rogue_add(&self, exposed_secret: Scalar) {
        self.rogue.write().expect("rogue lock").add(exposed_secret);
    }

    pub fn rogue_query(&self, pseudonym: &G1Projective, base: &BaseSpec) -> bool {
        self.rogue.read().expect("rogue lock").matches(&base.point(), pseudonym)
    }

    pub fn rogue_list(&self) -> RogueList {
        self.rogue.read().expect("rogue lock").clone()
    }
}

pub fn rogue_query(issuer: &IssuerService, pseudonym: &G1Projective, base: &BaseSpec) -> bool {
    issuer.rogue_query(pseudonym, base)
}
