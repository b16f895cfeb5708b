// Licensed under the Apache-2.0 license

//! Direct Anonymous Attestation over BLS12-381.
//!
//! Credentials are BBS+ signatures on a hidden member key `f`; signatures
//! carry a pseudonym `K = J*f` over a basename-derived (or random) base `J`.

mod issuer;
mod member;
mod params;
mod rogue;
mod signature;

pub use bls12_381::{G1Projective, Scalar};
pub use issuer::{
    endorse, rogue_query, CommitmentProof, EndorsementDirectory, EndorsementProof, EndorsementRecord, IssuerKeyPair,
    IssuerPublicKey, IssuerService, JoinRequest, JoinResponse, SetupChallenge, SetupTicket,
};
pub use member::{DaaCredential, JoinSession, MemberSecret};
pub use params::{g1_bytes, g1_from_bytes, hash_to_g1, hash_to_scalar, GroupParams, Profile};
pub use rogue::{rogue_add, RogueList};
pub use signature::{daa_link, daa_sign, daa_verify, daa_verify_encoded, BaseSpec, DaaSignature, SignatureProof};

use crate::crypto::{SecureRng, SymKey};
use crate::wire::WireError;

pub const SCHEME_TAG: u8 = 0x01;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Basename(pub Option<Vec<u8>>);

impl Basename {
    pub fn named(bsn: impl AsRef<[u8]>) -> Self {
        Self(Some(bsn.as_ref().to_vec()))
    }

    pub fn none() -> Self {
        Self(None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyResult {
    Accept,
    RejectInvalid,
    RejectRogue,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DaaError {
    #[error("endorsement invalid")]
    EndorsementInvalid,
    #[error("endorsement revoked")]
    EndorsementRevoked,
    #[error("join attempted before setup")]
    SetupNotDone,
    #[error("issuer rejects commitment proof")]
    IssuerRejects,
    #[error("issued credential does not verify")]
    InvalidCredential,
    #[error("credential does not match effective key")]
    CredentialMismatch,
    #[error("linking requires a basename")]
    BasenameAbsent,
    #[error("unknown scheme tag {0:#04x}")]
    UnknownScheme(u8),
    #[error("malformed encoding: {0}")]
    Wire(#[from] WireError),
}

/// Runs the endorsement challenge-response against the issuer.
pub fn daa_setup(
    issuer: &IssuerService,
    device_id: &[u8],
    endorsement_key: &SymKey,
    directory: &dyn EndorsementDirectory,
    rng: &mut SecureRng,
) -> Result<SetupTicket, DaaError> {
    let challenge = issuer.setup_challenge(rng);
    let proof = endorse(endorsement_key, device_id, &challenge);
    issuer.setup(&challenge, &proof, directory)
}

/// Blind issuance of a credential on the effective key for `counter`.
pub fn daa_join(
    issuer: &IssuerService,
    member: &MemberSecret,
    counter: u64,
    ticket: Option<&SetupTicket>,
    rng: &mut SecureRng,
) -> Result<DaaCredential, DaaError> {
    let ticket = ticket.ok_or(DaaError::SetupNotDone)?;
    let (session, req) = JoinSession::begin(issuer.params(), member, counter, ticket, rng);
    let resp = issuer.issue(&req, rng)?;
    session.finish(issuer.params(), issuer.public(), &resp)
}
