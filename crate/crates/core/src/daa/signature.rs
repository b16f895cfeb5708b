// Licensed under the Apache-2.0 license

use bls12_381::{G1Projective, Scalar};
use group::Curve;

use super::issuer::IssuerPublicKey;
use super::member::{g2_prepared, pairing_product_is_one, DaaCredential, MemberSecret};
use super::params::{
    g1_bytes, hash_to_g1, hash_to_scalar, random_nonzero_scalar, random_scalar, read_g1, read_scalar, GroupParams,
};
use super::rogue::RogueList;
use super::{Basename, DaaError, VerifyResult, SCHEME_TAG};
use crate::crypto::{hash, Digest, SecureRng};
use crate::wire::{Reader, WireError, Writer};

/// Pseudonym base: named (linkable) or fresh per signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BaseSpec {
    Named(Vec<u8>),
    Random([u8; 32]),
}

impl BaseSpec {
    pub fn point(&self) -> G1Projective {
        match self {
            BaseSpec::Named(bsn) => hash_to_g1(&[b"softip/daa/bsn", bsn]),
            BaseSpec::Random(nonce) => hash_to_g1(&[b"softip/daa/random-base", nonce]),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode_into(&mut w);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let base = Self::decode_from(&mut r)?;
        r.finish()?;
        Ok(base)
    }

    fn encode_into(&self, w: &mut Writer) {
        match self {
            BaseSpec::Named(bsn) => w.u8(1).bytes(bsn),
            BaseSpec::Random(nonce) => w.u8(2).raw(nonce),
        };
    }

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, WireError> {
        match r.u8()? {
            1 => Ok(BaseSpec::Named(r.bytes()?.to_vec())),
            2 => Ok(BaseSpec::Random(r.array()?)),
            t => Err(WireError::UnknownTag(t)),
        }
    }

    fn matches(&self, basename: &Basename) -> bool {
        match (self, &basename.0) {
            (BaseSpec::Named(a), Some(b)) => a == b,
            (BaseSpec::Random(_), None) => true,
            _ => false,
        }
    }
}

/// Fiat-Shamir proof of knowledge of `(f, e, r2, r3, s')` for a randomized
/// credential plus the pseudonym relation `K = J*f`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureProof {
    pub a_prime: G1Projective,
    pub a_bar: G1Projective,
    pub d: G1Projective,
    pub c: Scalar,
    pub z_e: Scalar,
    pub z_r2: Scalar,
    pub z_r3: Scalar,
    pub z_s: Scalar,
    pub z_f: Scalar,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DaaSignature {
    pub base: BaseSpec,
    pub pseudonym: G1Projective,
    pub proof: SignatureProof,
    pub message_digest: Digest,
    pub issuer_key_id: Digest,
}

struct Commitments {
    t1: G1Projective,
    t2: G1Projective,
    t3: G1Projective,
}

fn challenge(
    issuer_key_id: &Digest,
    base: &BaseSpec,
    j: &G1Projective,
    k: &G1Projective,
    proof: &SignatureProof,
    t: &Commitments,
    digest: &Digest,
) -> Scalar {
    let base_enc = base.encode();
    hash_to_scalar(&[
        b"softip/daa/sign",
        &issuer_key_id.0,
        &base_enc,
        &g1_bytes(&proof.a_prime),
        &g1_bytes(&proof.a_bar),
        &g1_bytes(&proof.d),
        &g1_bytes(j),
        &g1_bytes(k),
        &g1_bytes(&t.t1),
        &g1_bytes(&t.t2),
        &g1_bytes(&t.t3),
        &digest.0,
    ])
}

/// Signs without checking that `cred` belongs to `f`. A mismatched pair
/// yields a signature that fails verification.
pub(crate) fn sign_with_key(
    params: &GroupParams,
    cred: &DaaCredential,
    f: &Scalar,
    message: &[u8],
    basename: &Basename,
    rng: &mut SecureRng,
) -> DaaSignature {
    let base = match &basename.0 {
        Some(bsn) => BaseSpec::Named(bsn.clone()),
        None => BaseSpec::Random(rng.array()),
    };
    let j = base.point();
    let k = j * f;

    let r1 = random_nonzero_scalar(rng);
    let r2 = random_scalar(rng);
    let r3 = r1.invert().unwrap();
    let b = params.g1 + params.h0 * cred.s + params.h1 * f;
    let a_prime = cred.a * r1;
    let a_bar = a_prime * (-cred.e) + b * r1;
    let d = b * r1 - params.h0 * r2;
    let s_prime = cred.s - r2 * r3;

    let [rho_e, rho_r2, rho_r3, rho_s, rho_f] = [(); 5].map(|_| random_scalar(rng));
    let t = Commitments {
        t1: a_prime * (-rho_e) + params.h0 * rho_r2,
        t2: d * rho_r3 - params.h0 * rho_s - params.h1 * rho_f,
        t3: j * rho_f,
    };
    let message_digest = hash(message);
    let mut proof = SignatureProof {
        a_prime,
        a_bar,
        d,
        c: Scalar::zero(),
        z_e: Scalar::zero(),
        z_r2: Scalar::zero(),
        z_r3: Scalar::zero(),
        z_s: Scalar::zero(),
        z_f: Scalar::zero(),
    };
    let c = challenge(&cred.issuer_key_id, &base, &j, &k, &proof, &t, &message_digest);
    proof.c = c;
    proof.z_e = rho_e + c * cred.e;
    proof.z_r2 = rho_r2 + c * r2;
    proof.z_r3 = rho_r3 + c * r3;
    proof.z_s = rho_s + c * s_prime;
    proof.z_f = rho_f + c * f;
    DaaSignature {
        base,
        pseudonym: k,
        proof,
        message_digest,
        issuer_key_id: cred.issuer_key_id,
    }
}

#[allow(clippy::too_many_arguments)]
pub fn daa_sign(
    params: &GroupParams,
    issuer: &IssuerPublicKey,
    member: &MemberSecret,
    cred: &DaaCredential,
    message: &[u8],
    basename: &Basename,
    counter: u64,
    rng: &mut SecureRng,
) -> Result<DaaSignature, DaaError> {
    let f = member.effective_key(counter);
    if cred.counter != counter || !cred.matches(params, issuer, &f) {
        return Err(DaaError::CredentialMismatch);
    }
    Ok(sign_with_key(params, cred, &f, message, basename, rng))
}

fn proof_valid(
    params: &GroupParams,
    issuer: &IssuerPublicKey,
    message: &[u8],
    sig: &DaaSignature,
    basename: &Basename,
) -> bool {
    let p = &sig.proof;
    if sig.issuer_key_id != issuer.key_id
        || sig.message_digest != hash(message)
        || !sig.base.matches(basename)
        || bool::from(p.a_prime.is_identity())
    {
        return false;
    }
    let j = sig.base.point();
    let k = sig.pseudonym;
    let c = p.c;
    let t = Commitments {
        t1: p.a_prime * (-p.z_e) + params.h0 * p.z_r2 - (p.a_bar - p.d) * c,
        t2: p.d * p.z_r3 - params.h0 * p.z_s - params.h1 * p.z_f - params.g1 * c,
        t3: j * p.z_f - k * c,
    };
    if challenge(&sig.issuer_key_id, &sig.base, &j, &k, p, &t, &sig.message_digest) != c {
        return false;
    }
    let w = g2_prepared(&issuer.w);
    let g2 = g2_prepared(&params.g2);
    let neg_a_bar = (-p.a_bar).to_affine();
    pairing_product_is_one(&[(&p.a_prime.to_affine(), &w), (&neg_a_bar, &g2)])
}

pub fn daa_verify(
    params: &GroupParams,
    issuer: &IssuerPublicKey,
    message: &[u8],
    sig: &DaaSignature,
    basename: &Basename,
    rogue: &RogueList,
) -> VerifyResult {
    if !proof_valid(params, issuer, message, sig, basename) {
        return VerifyResult::RejectInvalid;
    }
    if rogue.matches(&sig.base.point(), &sig.pseudonym) {
        return VerifyResult::RejectRogue;
    }
    VerifyResult::Accept
}

/// Verifies an encoded signature; undecodable input is `RejectInvalid`.
pub fn daa_verify_encoded(
    params: &GroupParams,
    issuer: &IssuerPublicKey,
    message: &[u8],
    sig: &[u8],
    basename: &Basename,
    rogue: &RogueList,
) -> VerifyResult {
    match DaaSignature::decode(sig) {
        Ok(sig) => daa_verify(params, issuer, message, &sig, basename, rogue),
        Err(_) => VerifyResult::RejectInvalid,
    }
}

pub fn daa_link(sig1: &DaaSignature, sig2: &DaaSignature, basename: &Basename) -> Result<bool, DaaError> {
    if basename.0.is_none() {
        return Err(DaaError::BasenameAbsent);
    }
    Ok(sig1.base.matches(basename) && sig2.base.matches(basename) && sig1.pseudonym == sig2.pseudonym)
}

impl DaaSignature {
    pub fn encode(&self) -> Vec<u8> {
        let p = &self.proof;
        let mut w = Writer::new();
        w.u8(SCHEME_TAG);
        self.base.encode_into(&mut w);
        w.bytes(&g1_bytes(&self.pseudonym))
            .bytes(&g1_bytes(&p.a_prime))
            .bytes(&g1_bytes(&p.a_bar))
            .bytes(&g1_bytes(&p.d));
        for s in [p.c, p.z_e, p.z_r2, p.z_r3, p.z_s, p.z_f] {
            w.bytes(&s.to_bytes());
        }
        w.raw(&self.message_digest.0).raw(&self.issuer_key_id.0);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DaaError> {
        let mut r = Reader::new(bytes);
        let tag = r.u8()?;
        if tag != SCHEME_TAG {
            return Err(DaaError::UnknownScheme(tag));
        }
        let base = BaseSpec::decode_from(&mut r)?;
        let pseudonym = read_g1(&mut r)?;
        let proof = SignatureProof {
            a_prime: read_g1(&mut r)?,
            a_bar: read_g1(&mut r)?,
            d: read_g1(&mut r)?,
            c: read_scalar(&mut r)?,
            z_e: read_scalar(&mut r)?,
            z_r2: read_scalar(&mut r)?,
            z_r3: read_scalar(&mut r)?,
            z_s: read_scalar(&mut r)?,
            z_f: read_scalar(&mut r)?,
        };
        let sig = Self {
            base,
            pseudonym,
            proof,
            message_digest: Digest(r.array()?),
            issuer_key_id: Digest(r.array()?),
        };
        r.finish()?;
        Ok(sig)
    }
}
