// Licensed under the Apache-2.0 license

use proptest::prelude::*;

use super::*;
use crate::daa::{daa_verify, IssuerKeyPair, RogueList, VerifyResult};

fn rng(seed: u8) -> SecureRng {
    SecureRng::from_seed([seed; 32])
}

fn issuer(seed: u8) -> IssuerService {
    IssuerService::new(IssuerKeyPair::generate(GroupParams::default(), &mut rng(seed)))
}

fn simple_env(
    registry: &HwvRegistry,
    dev: &HapDevice,
    app: &str,
    version: u64,
    bs: &[u8],
    r: &mut SecureRng,
) -> Vec<u8> {
    let k = registry.k_hap(&dev.id()).unwrap();
    EncryptedBitstreamEnvelope::seal_simple(&k, app, version, bs, r).encode()
}

#[test]
fn provisioned_devices_are_distinct_and_registered() {
    let reg = HwvRegistry::new();
    let mut r = rng(1);
    let a = hap_provision(&reg, "SN-A", &mut r).unwrap();
    let b = hap_provision(&reg, "SN-B", &mut r).unwrap();
    assert_ne!(a.id(), b.id());
    assert_ne!(
        reg.k_hap(&a.id()).unwrap().as_bytes(),
        reg.k_hap(&b.id()).unwrap().as_bytes()
    );
    // Registry oracle: the registered key is the one the device decrypts with.
    let env = simple_env(&reg, &a, "x", 1, b"bits", &mut r);
    let mut a = a;
    assert!(a.load_simple(&env).is_ok());
    assert_eq!(reg.lookup(&a.id()).unwrap().serial, "SN-A");
}

#[test]
fn duplicate_serial_is_rejected() {
    let reg = HwvRegistry::new();
    let mut r = rng(2);
    hap_provision(&reg, "SN-A", &mut r).unwrap();
    assert_eq!(
        hap_provision(&reg, "SN-A", &mut r).unwrap_err(),
        HapError::DuplicateSerial("SN-A".into())
    );
    assert_eq!(reg.len(), 1);
}

#[test]
fn id_is_serial_digest_prefix_and_stable() {
    let reg = HwvRegistry::new();
    let dev = hap_provision(&reg, "SN-A", &mut rng(3)).unwrap();
    let digest = crate::crypto::hash(b"SN-A");
    assert_eq!(hap_get_id(&dev).0, digest.0[..16]);
    assert_eq!(hap_get_id(&dev), hap_get_id(&dev));
}

#[test]
fn simple_load_is_per_device() {
    let reg = HwvRegistry::new();
    let mut r = rng(4);
    let mut a = hap_provision(&reg, "A", &mut r).unwrap();
    let mut b = hap_provision(&reg, "B", &mut r).unwrap();
    let env = simple_env(&reg, &a, "app", 1, b"bitstream", &mut r);
    let receipt = hap_load_simple(&mut a, &env).unwrap();
    assert_eq!(receipt.digest, crate::crypto::hash(b"bitstream"));
    assert_eq!(receipt.version, 1);
    assert!(a.fpga_holds(b"bitstream"));
    assert_eq!(hap_load_simple(&mut b, &env), Err(HapError::AuthenticationFailure));
    assert_eq!(b.fpga_digest(), None);
}

#[test]
fn downgrade_is_rejected_and_state_unchanged() {
    let reg = HwvRegistry::new();
    let mut r = rng(5);
    let mut dev = hap_provision(&reg, "A", &mut r).unwrap();
    let v1 = simple_env(&reg, &dev, "app", 1, b"old", &mut r);
    let v2 = simple_env(&reg, &dev, "app", 2, b"new", &mut r);
    dev.load_simple(&v1).unwrap();
    dev.load_simple(&v2).unwrap();
    let before = dev.fpga_digest();
    assert_eq!(
        dev.load_simple(&v1),
        Err(HapError::DowngradeRejected {
            app_id: "app".into(),
            version: 1,
            installed: 2
        })
    );
    assert_eq!(dev.fpga_digest(), before);
    assert_eq!(dev.installed_version("app"), Some(2));
    // Same version reloads fine.
    assert!(dev.load_simple(&v2).is_ok());
}

#[test]
fn scheme_mismatch_is_reported() {
    let reg = HwvRegistry::new();
    let mut r = rng(6);
    let mut dev = hap_provision(&reg, "A", &mut r).unwrap();
    let env = simple_env(&reg, &dev, "app", 1, b"x", &mut r);
    assert_eq!(dev.load_advanced(&env), Err(HapError::SchemeMismatch));
}

#[test]
fn tampered_header_fails_authentication() {
    let reg = HwvRegistry::new();
    let mut r = rng(7);
    let mut dev = hap_provision(&reg, "A", &mut r).unwrap();
    let k = reg.k_hap(&dev.id()).unwrap();
    let mut env = EncryptedBitstreamEnvelope::seal_simple(&k, "app", 1, b"x", &mut r);
    env.header.app_id = "apq".into();
    assert_eq!(dev.load_simple(&env.encode()), Err(HapError::AuthenticationFailure));
    assert_eq!(dev.installed_version("apq"), None);
}

#[test]
fn attest_requires_join() {
    let reg = HwvRegistry::new();
    let mut dev = hap_provision(&reg, "A", &mut rng(8)).unwrap();
    assert_eq!(
        dev.attest_keypair(&Basename::named("s"), 0, b"ctx").unwrap_err(),
        HapError::NotJoined(0)
    );
}

#[test]
fn attestation_verifies_and_keys_are_fresh() {
    let reg = HwvRegistry::new();
    let iss = issuer(9);
    let mut dev = hap_provision(&reg, "A", &mut rng(9)).unwrap();
    dev.join(&iss, &reg, 0).unwrap();
    let bsn = Basename::named("storeA");
    let a1 = hap_attest_keypair(&mut dev, &bsn, 0, b"order-1").unwrap();
    let a2 = hap_attest_keypair(&mut dev, &bsn, 0, b"order-2").unwrap();
    assert_ne!(a1.public, a2.public);
    let msg = attest_message(&a1.public, b"order-1");
    assert_eq!(
        daa_verify(
            iss.params(),
            iss.public(),
            &msg,
            &a1.signature,
            &bsn,
            &RogueList::default()
        ),
        VerifyResult::Accept
    );
    // The signature binds the key: a different key with the same signature fails.
    let swapped = attest_message(&a2.public, b"order-1");
    assert_eq!(
        daa_verify(
            iss.params(),
            iss.public(),
            &swapped,
            &a1.signature,
            &bsn,
            &RogueList::default()
        ),
        VerifyResult::RejectInvalid
    );
}

#[test]
fn revoked_endorsement_blocks_join() {
    let reg = HwvRegistry::new();
    let iss = issuer(10);
    let mut dev = hap_provision(&reg, "A", &mut rng(10)).unwrap();
    reg.revoke_endorsement(&dev.id());
    assert_eq!(
        dev.join(&iss, &reg, 0),
        Err(HapError::Daa(DaaError::EndorsementRevoked))
    );
    assert!(!dev.is_joined(0));
}

#[test]
fn advanced_load_roundtrip_and_wrong_device() {
    let reg = HwvRegistry::new();
    let iss = issuer(11);
    let mut r = rng(11);
    let mut a = hap_provision(&reg, "A", &mut r).unwrap();
    let mut b = hap_provision(&reg, "B", &mut r).unwrap();
    a.join(&iss, &reg, 0).unwrap();
    b.join(&iss, &reg, 0).unwrap();
    assert_eq!(b.load_advanced(&[2, 0, 0, 0, 0]), Err(HapError::AuthenticationFailure));
    let bsn = Basename::named("s");
    let att = a.attest_keypair(&bsn, 0, b"o").unwrap();
    b.attest_keypair(&bsn, 0, b"o").unwrap();
    let (env, ks) = EncryptedBitstreamEnvelope::seal_advanced(&att.public, "app", 1, b"secret-bs", &mut r);
    let bytes = env.encode();
    let receipt = hap_load_advanced(&mut a, &bytes).unwrap();
    assert_eq!(receipt.digest, crate::crypto::hash(b"secret-bs"));
    assert_eq!(b.load_advanced(&bytes), Err(HapError::DecryptionFailure));
    // AD binding: relabelled app id.
    let mut bad = env.clone();
    bad.header.app_id = "other".into();
    assert_eq!(a.load_advanced(&bad.encode()), Err(HapError::AuthenticationFailure));
    // Device secrets never include the session key (it is not retained).
    assert!(a.audit_secrets().iter().all(|(_, s)| s.as_slice() != ks.as_bytes()));
}

#[test]
fn advanced_load_without_keypair() {
    let reg = HwvRegistry::new();
    let mut r = rng(12);
    let mut dev = hap_provision(&reg, "A", &mut r).unwrap();
    let kp = crate::crypto::gen_keypair(&mut r);
    let (env, _) = EncryptedBitstreamEnvelope::seal_advanced(&kp.public, "app", 1, b"x", &mut r);
    assert_eq!(dev.load_advanced(&env.encode()), Err(HapError::NoKeypair));
}

#[test]
fn boundary_outputs_carry_no_secrets() {
    let reg = HwvRegistry::new();
    let iss = issuer(13);
    let mut r = rng(13);
    let mut dev = hap_provision(&reg, "A", &mut r).unwrap();
    dev.join(&iss, &reg, 0).unwrap();
    let bs = r.vec(4096);
    let att = dev.attest_keypair(&Basename::named("s"), 0, b"o").unwrap();
    let (env, _) = EncryptedBitstreamEnvelope::seal_advanced(&att.public, "app", 1, &bs, &mut r);
    let receipt = dev.load_advanced(&env.encode()).unwrap();
    let mut outputs = vec![
        receipt.encode(),
        att.public.0.to_vec(),
        att.signature.encode(),
        dev.id().0.to_vec(),
    ];
    outputs.push(format!("{dev:?}").into_bytes());
    let mut secrets: Vec<Vec<u8>> = dev.audit_secrets().into_iter().map(|(_, s)| s).collect();
    secrets.push(bs[..64].to_vec());
    for out in &outputs {
        for s in &secrets {
            assert!(!out.windows(s.len()).any(|w| w == s.as_slice()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prop_accepted_versions_never_decrease(versions in proptest::collection::vec(1u64..6, 1..12)) {
        let reg = HwvRegistry::new();
        let mut r = rng(20);
        let mut dev = hap_provision(&reg, "A", &mut r).unwrap();
        let mut accepted = Vec::new();
        for v in versions {
            let env = simple_env(&reg, &dev, "app", v, &v.to_be_bytes(), &mut r);
            let before = (dev.installed_version("app"), dev.fpga_digest());
            match dev.load_simple(&env) {
                Ok(rc) => accepted.push(rc.version),
                Err(HapError::DowngradeRejected { .. }) => {
                    prop_assert_eq!(before, (dev.installed_version("app"), dev.fpga_digest()));
                }
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }
        prop_assert!(accepted.windows(2).all(|w| w[0] <= w[1]));
    }
}
