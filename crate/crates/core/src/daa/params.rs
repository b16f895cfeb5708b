// Licensed under the Apache-2.0 license

use bls12_381::hash_to_curve::{ExpandMsgXmd, HashToCurve};
use bls12_381::{G1Affine, G1Projective, G2Projective, Scalar};
use group::Curve;
use sha2::{Digest as _, Sha512};

use crate::crypto::SecureRng;
use crate::wire::{Reader, WireError};

const HASH_TO_G1_DST: &[u8] = b"SOFTIP-DAA-V01-CS01-with-BLS12381G1_XMD:SHA-256_SSWU_RO_";

/// Which member-secret space is in use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Profile {
    #[default]
    Standard,
    /// 16-bit secrets for brute-force oracles. Never used outside tests.
    #[cfg(any(test, feature = "toy-params"))]
    Toy16,
}

/// BLS12-381: prime-order groups G1, G2 (order ~2^255) with a pairing into GT.
#[derive(Debug, Clone)]
pub struct GroupParams {
    pub g1: G1Projective,
    pub g2: G2Projective,
    pub h0: G1Projective,
    pub h1: G1Projective,
}

impl Default for GroupParams {
    fn default() -> Self {
        Self {
            g1: G1Projective::generator(),
            g2: G2Projective::generator(),
            h0: hash_to_g1(&[b"softip/daa/generator/h0"]),
            h1: hash_to_g1(&[b"softip/daa/generator/h1"]),
        }
    }
}

pub fn hash_to_g1(parts: &[&[u8]]) -> G1Projective {
    let mut msg = Vec::new();
    for p in parts {
        msg.extend_from_slice(&(p.len() as u32).to_be_bytes());
        msg.extend_from_slice(p);
    }
    <G1Projective as HashToCurve<ExpandMsgXmd<sha2::Sha256>>>::hash_to_curve([msg.as_slice()], HASH_TO_G1_DST)
}

pub fn hash_to_scalar(parts: &[&[u8]]) -> Scalar {
    let mut h = Sha512::new();
    for p in parts {
        h.update((p.len() as u32).to_be_bytes());
        h.update(p);
    }
    Scalar::from_bytes_wide(&h.finalize().into())
}

pub fn random_scalar(rng: &mut SecureRng) -> Scalar {
    Scalar::from_bytes_wide(&rng.array::<64>())
}

pub fn random_nonzero_scalar(rng: &mut SecureRng) -> Scalar {
    loop {
        let s = random_scalar(rng);
        if s != Scalar::zero() {
            return s;
        }
    }
}

pub fn g1_bytes(p: &G1Projective) -> [u8; 48] {
    p.to_affine().to_compressed()
}

pub fn g2_bytes(p: &G2Projective) -> [u8; 96] {
    p.to_affine().to_compressed()
}

pub fn g1_from_bytes(bytes: &[u8; 48]) -> Option<G1Projective> {
    Option::<G1Affine>::from(G1Affine::from_compressed(bytes)).map(G1Projective::from)
}

pub fn read_g1(r: &mut Reader<'_>) -> Result<G1Projective, WireError> {
    let raw = r.bytes()?;
    let arr: [u8; 48] = raw.try_into().map_err(|_| WireError::Invalid("G1 length"))?;
    g1_from_bytes(&arr).ok_or(WireError::Invalid("G1 point"))
}

pub fn read_scalar(r: &mut Reader<'_>) -> Result<Scalar, WireError> {
    let raw = r.bytes()?;
    let arr: [u8; 32] = raw.try_into().map_err(|_| WireError::Invalid("scalar length"))?;
    Option::from(Scalar::from_bytes(&arr)).ok_or(WireError::Invalid("non-canonical scalar"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_independent_valid_points() {
        let p = GroupParams::default();
        for g in [p.h0, p.h1] {
            assert!(!bool::from(g.is_identity()));
            assert!(bool::from(g.to_affine().is_torsion_free()));
        }
        assert_ne!(p.h0, p.h1);
        assert_ne!(p.h0, p.g1);
    }

    #[test]
    fn group_order_is_at_least_2_250() {
        // -1 mod r, little-endian: the top byte of r - 1 is 0x73, so r > 2^254.
        let minus_one = (-Scalar::one()).to_bytes();
        assert_eq!(minus_one[31], 0x73);
    }

    #[test]
    fn hash_to_g1_is_deterministic_and_separating() {
        assert_eq!(hash_to_g1(&[b"a"]), hash_to_g1(&[b"a"]));
        assert_ne!(hash_to_g1(&[b"a"]), hash_to_g1(&[b"b"]));
        assert_ne!(hash_to_g1(&[b"ab"]), hash_to_g1(&[b"a", b"b"]));
    }
}
