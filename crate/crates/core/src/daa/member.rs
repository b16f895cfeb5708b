// Licensed under the Apache-2.0 license

//! Member (HAP-side) secrets, the join protocol and credentials.

use bls12_381::{multi_miller_loop, G1Affine, G1Projective, G2Affine, G2Prepared, Gt, Scalar};
use group::Curve;

use super::issuer::{commitment_challenge, CommitmentProof, IssuerPublicKey, JoinRequest, JoinResponse, SetupTicket};
use super::params::{g1_bytes, hash_to_scalar, random_scalar, read_g1, read_scalar, GroupParams, Profile};
use super::{DaaError, SCHEME_TAG};
use crate::crypto::{Digest, SecureRng};
use crate::wire::{Reader, WireError, Writer};

/// The member seed `f0`. Effective keys are derived per counter.
#[derive(Clone)]
pub struct MemberSecret {
    seed: [u8; 32],
    profile: Profile,
}

impl std::fmt::Debug for MemberSecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("MemberSecret(<redacted>)")
    }
}

impl MemberSecret {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        Self {
            seed,
            profile: Profile::Standard,
        }
    }

    pub fn generate(rng: &mut SecureRng) -> Self {
        Self::from_seed(rng.array())
    }

    /// Toy profile: `f = seed16 + counter`, so the whole key space is 2^16.
    #[cfg(any(test, feature = "toy-params"))]
    pub fn toy(seed16: u16) -> Self {
        let mut seed = [0u8; 32];
        seed[..2].copy_from_slice(&seed16.to_le_bytes());
        Self {
            seed,
            profile: Profile::Toy16,
        }
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    pub fn seed_bytes(&self) -> &[u8; 32] {
        &self.seed
    }

    pub fn effective_key(&self, counter: u64) -> Scalar {
        match self.profile {
            Profile::Standard => hash_to_scalar(&[b"softip/daa/member", &self.seed, &counter.to_be_bytes()]),
            #[cfg(any(test, feature = "toy-params"))]
            Profile::Toy16 => {
                let base = u16::from_le_bytes([self.seed[0], self.seed[1]]) as u64;
                Scalar::from((base + counter) & 0xffff)
            }
        }
    }
}

/// Anonymous membership certificate `(A, e, s)` with
/// `e(A, w + g2*e) = e(g1 + h0*s + h1*f, g2)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DaaCredential {
    pub a: G1Projective,
    pub e: Scalar,
    pub s: Scalar,
    pub counter: u64,
    pub issuer_key_id: Digest,
}

impl DaaCredential {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(SCHEME_TAG)
            .bytes(&g1_bytes(&self.a))
            .bytes(&self.e.to_bytes())
            .bytes(&self.s.to_bytes())
            .u64(self.counter)
            .raw(&self.issuer_key_id.0);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DaaError> {
        let mut r = Reader::new(bytes);
        let tag = r.u8()?;
        if tag != SCHEME_TAG {
            return Err(DaaError::UnknownScheme(tag));
        }
        let cred = Self {
            a: read_g1(&mut r)?,
            e: read_scalar(&mut r)?,
            s: read_scalar(&mut r)?,
            counter: r.u64()?,
            issuer_key_id: Digest(r.array()?),
        };
        r.finish()?;
        Ok(cred)
    }

    /// Pairing check of the credential against an effective key.
    pub fn matches(&self, params: &GroupParams, issuer: &IssuerPublicKey, f: &Scalar) -> bool {
        if self.issuer_key_id != issuer.key_id || bool::from(self.a.is_identity()) {
            return false;
        }
        let b = params.g1 + params.h0 * self.s + params.h1 * f;
        let lhs_g2 = G2Prepared::from((issuer.w + params.g2 * self.e).to_affine());
        let rhs_g2 = G2Prepared::from(params.g2.to_affine());
        let neg_b: G1Affine = (-b).to_affine();
        pairing_product_is_one(&[(&self.a.to_affine(), &lhs_g2), (&neg_b, &rhs_g2)])
    }
}

pub(crate) fn pairing_product_is_one(terms: &[(&G1Affine, &G2Prepared)]) -> bool {
    multi_miller_loop(terms).final_exponentiation() == Gt::identity()
}

pub(crate) fn g2_prepared(p: &bls12_381::G2Projective) -> G2Prepared {
    G2Prepared::from(G2Affine::from(p))
}

/// Member-side join state between request and response.
pub struct JoinSession {
    counter: u64,
    f: Scalar,
    s_blind: Scalar,
}

impl JoinSession {
    /// Commits to `f` under a random blinding and proves knowledge of both.
    pub fn begin(
        params: &GroupParams,
        member: &MemberSecret,
        counter: u64,
        ticket: &SetupTicket,
        rng: &mut SecureRng,
    ) -> (Self, JoinRequest) {
        let f = member.effective_key(counter);
        let s_blind = random_scalar(rng);
        let commitment = params.h0 * s_blind + params.h1 * f;
        let (rho_s, rho_f) = (random_scalar(rng), random_scalar(rng));
        let t = params.h0 * rho_s + params.h1 * rho_f;
        let c = commitment_challenge(&ticket.join_nonce, &commitment, &t);
        let proof = CommitmentProof {
            c,
            z_blind: rho_s + c * s_blind,
            z_key: rho_f + c * f,
        };
        let req = JoinRequest {
            join_nonce: ticket.join_nonce,
            commitment,
            proof,
        };
        (Self { counter, f, s_blind }, req)
    }

    pub fn finish(
        self,
        params: &GroupParams,
        issuer: &IssuerPublicKey,
        resp: &JoinResponse,
    ) -> Result<DaaCredential, DaaError> {
        let cred = DaaCredential {
            a: resp.a,
            e: resp.e,
            s: self.s_blind + resp.s_issuer,
            counter: self.counter,
            issuer_key_id: issuer.key_id,
        };
        if !cred.matches(params, issuer, &self.f) {
            return Err(DaaError::InvalidCredential);
        }
        Ok(cred)
    }
}

impl JoinRequest {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(SCHEME_TAG)
            .raw(&self.join_nonce)
            .bytes(&g1_bytes(&self.commitment))
            .bytes(&self.proof.c.to_bytes())
            .bytes(&self.proof.z_blind.to_bytes())
            .bytes(&self.proof.z_key.to_bytes());
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DaaError> {
        let mut r = Reader::new(bytes);
        let tag = r.u8()?;
        if tag != SCHEME_TAG {
            return Err(DaaError::UnknownScheme(tag));
        }
        let req = Self {
            join_nonce: r.array()?,
            commitment: read_g1(&mut r)?,
            proof: CommitmentProof {
                c: read_scalar(&mut r)?,
                z_blind: read_scalar(&mut r)?,
                z_key: read_scalar(&mut r)?,
            },
        };
        r.finish()?;
        Ok(req)
    }
}

impl JoinResponse {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(SCHEME_TAG)
            .bytes(&g1_bytes(&self.a))
            .bytes(&self.e.to_bytes())
            .bytes(&self.s_issuer.to_bytes());
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        if r.u8()? != SCHEME_TAG {
            return Err(WireError::Invalid("scheme tag"));
        }
        let resp = Self {
            a: read_g1(&mut r)?,
            e: read_scalar(&mut r)?,
            s_issuer: read_scalar(&mut r)?,
        };
        r.finish()?;
        Ok(resp)
    }
}
