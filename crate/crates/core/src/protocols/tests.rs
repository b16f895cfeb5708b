// Licensed under the Apache-2.0 license

use super::*;
use crate::actors::{PaymentPolicy, PaymentStatus, HWV, STORE, SWP};
use crate::hap::HapId;
use crate::netsim::{taint_scan, Action, AdversaryPolicy, HostField, MateError, Outcome, Rule};

fn simple(seed: u64) -> ScenarioConfig {
    ScenarioConfig::demo(SchemeName::Simple, seed, 2)
}

fn advanced(seed: u64) -> ScenarioConfig {
    ScenarioConfig::demo(SchemeName::Advanced, seed, 2)
}

#[test]
fn honest_simple_purchase_conforms_and_loads() {
    let mut w = World::new(simple(1)).unwrap();
    let t = run_simple_purchase(&mut w);
    assert_eq!(t.outcome, Outcome::Success);
    check_conformance(Flow::Simple, 0, &t).unwrap();
    let bs = w.bitstream("fir-filter", 1).unwrap();
    assert!(w.hap(0).device().fpga_holds(bs));
    assert_eq!(w.host(0).loaded_version("fir-filter"), Some(1));
    assert!(w.swp().is_simple_customer(&w.hap(0).device().id().0, "fir-filter"));
    assert!(taint_scan(&t.records, &w.secrets()).is_empty());
    assert_eq!(w.store().open_orders(), 0);
}

#[test]
fn honest_advanced_purchase_conforms_and_loads() {
    let mut w = World::new(advanced(2)).unwrap();
    let t = run_advanced_purchase(&mut w);
    assert_eq!(t.outcome, Outcome::Success, "{}", t.export().lines().last().unwrap());
    check_conformance(Flow::Advanced, 0, &t).unwrap();
    assert!(w.hap(0).device().fpga_holds(w.bitstream("fir-filter", 1).unwrap()));
    assert_eq!(w.swp().advanced_customers(), 1);
    assert_eq!(w.pg().status(1), Some(PaymentStatus::Captured));
    assert!(taint_scan(&t.records, &w.secrets()).is_empty());
}

#[test]
fn simple_and_advanced_leave_identical_fabric() {
    let mut ws = World::new(simple(3)).unwrap();
    let mut wa = World::new(advanced(3)).unwrap();
    assert!(run_simple_purchase(&mut ws).outcome.is_success());
    assert!(run_advanced_purchase(&mut wa).outcome.is_success());
    let ds = ws.hap(0).device().fpga_digest().unwrap();
    assert_eq!(Some(ds), wa.hap(0).device().fpga_digest());
}

#[test]
fn wrong_scheme_is_refused() {
    let mut w = World::new(simple(1)).unwrap();
    let t = run_advanced_purchase(&mut w);
    assert!(matches!(&t.outcome, Outcome::Abort { actor, error, .. } if actor == WORLD && error == "SchemeMismatch"));
    assert!(t.records.is_empty());
}

#[test]
fn declined_payment_halts_before_any_bitstream_traffic() {
    let mut cfg = simple(4);
    cfg.payment_policy = PaymentPolicy::DeclineAll;
    let mut w = World::new(cfg).unwrap();
    let t = run_simple_purchase(&mut w);
    assert!(matches!(&t.outcome, Outcome::Abort { actor, error, .. } if actor == STORE && error == "PaymentDeclined"));
    let labels: Vec<String> = t.protocol_events().into_iter().map(|e| e.label).collect();
    assert_eq!(labels, ["purchase", "charge-request", "payment-result"]);
    assert!(t.records.iter().all(|r| r.src != SWP && r.dst != SWP && r.dst != HWV));
}

#[test]
fn update_bypasses_store_and_bumps_version() {
    let mut w = World::new(simple(5)).unwrap();
    assert!(run_simple_purchase(&mut w).outcome.is_success());
    assert_eq!(w.release_version("fir-filter"), Some(2));
    let t = run_simple_update(&mut w, "fir-filter");
    assert_eq!(t.outcome, Outcome::Success);
    check_conformance(Flow::SimpleUpdate, 0, &t).unwrap();
    assert!(t.records.iter().all(|r| r.src != STORE && r.dst != STORE));
    assert_eq!(w.hap(0).device().installed_version("fir-filter"), Some(2));
    assert!(w.hap(0).device().fpga_holds(w.bitstream("fir-filter", 2).unwrap()));

    let again = run_simple_update(&mut w, "fir-filter");
    assert_eq!(again.outcome, Outcome::Success);
    assert_eq!(again.protocol_events().len(), 2, "up to date: check and offer only");
}

#[test]
fn update_without_purchase_is_not_a_customer() {
    let mut w = World::new(simple(6)).unwrap();
    w.release_version("fir-filter");
    let t = run_simple_update(&mut w, "fir-filter");
    assert!(matches!(&t.outcome, Outcome::Abort { actor, error, .. } if actor == SWP && error == "NotACustomer"));
}

#[test]
fn repeated_runs_reload_same_version() {
    let mut w = World::new(simple(7)).unwrap();
    assert!(run_simple_purchase(&mut w).outcome.is_success());
    let digest = w.hap(0).device().fpga_digest();
    for _ in 0..3 {
        assert!(run_app(&mut w, 0, "fir-filter").outcome.is_success());
        assert_eq!(w.hap(0).device().installed_version("fir-filter"), Some(1));
        assert_eq!(w.hap(0).device().fpga_digest(), digest);
    }
}

#[test]
fn corrupted_medium_fails_authentication() {
    let mut cfg = simple(8);
    cfg.adversary = AdversaryPolicy::mate(vec![]);
    let (mut w, t) = run_flow(&cfg, Flow::Simple, AdversaryPolicy::mate(vec![])).unwrap();
    assert!(t.outcome.is_success());
    let mut m = w.mate(0).unwrap();
    let mut env = m.read(&HostField::Medium("fir-filter".into())).unwrap();
    let n = env.len();
    env[n - 3] ^= 0x40;
    m.write(&HostField::Medium("fir-filter".into()), env).unwrap();
    let t = run_app(&mut w, 0, "fir-filter");
    assert!(
        matches!(&t.outcome, Outcome::Abort { actor, error, .. } if actor == "HAP0" && error == "AuthenticationFailure")
    );
}

#[test]
fn mate_hooks_need_mate_mode_and_never_reach_the_hap() {
    let mut w = World::new(simple(9)).unwrap();
    assert_eq!(w.mate(0).err(), Some(MateError::MateModeRequired));
    w.set_policy(AdversaryPolicy::mate(vec![]));
    assert!(run_simple_purchase(&mut w).outcome.is_success());
    let m = w.mate(0).unwrap();
    let env = m.read(&HostField::Medium("fir-filter".into())).unwrap();
    assert_eq!(env[0], crate::hap::Scheme::Simple as u8);
    assert_eq!(
        m.read(&HostField::Hap("k_hap".into())),
        Err(MateError::HapAccessDenied("k_hap".into()))
    );
    let mut m = w.mate(0).unwrap();
    assert!(m.write(&HostField::Hap("installed_versions".into()), vec![]).is_err());
    assert_eq!(m.read(&HostField::Account).unwrap(), b"user0");
    assert_eq!(m.medium_apps(), vec!["fir-filter".to_string()]);
}

#[test]
fn downgrade_is_rejected() {
    let (w, t) = run_flow(&simple(10), Flow::Downgrade, AdversaryPolicy::none()).unwrap();
    assert!(
        matches!(&t.outcome, Outcome::Abort { actor, error, .. } if actor == "HAP0" && error == "DowngradeRejected"),
        "{}",
        t.outcome
    );
    assert!(w.hap(0).device().fpga_holds(w.bitstream("fir-filter", 2).unwrap()));
}

#[test]
fn envelope_is_useless_on_another_device() {
    let mut cfg = simple(11);
    cfg.adversary = AdversaryPolicy::mate(vec![]);
    let mut w = World::new(cfg).unwrap();
    assert!(run_simple_purchase(&mut w).outcome.is_success());
    let env = w
        .mate(0)
        .unwrap()
        .read(&HostField::Medium("fir-filter".into()))
        .unwrap();
    w.mate(1)
        .unwrap()
        .write(&HostField::Medium("fir-filter".into()), env)
        .unwrap();
    let t = run_app(&mut w, 1, "fir-filter");
    assert!(
        matches!(&t.outcome, Outcome::Abort { actor, error, .. } if actor == "HAP1" && error == "AuthenticationFailure")
    );
    assert!(w.hap(1).device().fpga_digest().is_none());
}

#[test]
fn host_lying_about_its_device_hits_unknown_device() {
    let mut w = World::new(simple(12)).unwrap();
    w.set_policy(AdversaryPolicy::mate(vec![]));
    let ghost = HapId::from_serial("never-made");
    w.mate(0)
        .unwrap()
        .write(&HostField::DeviceId, ghost.0.to_vec())
        .unwrap();
    let t = run_simple_purchase(&mut w);
    assert!(matches!(&t.outcome, Outcome::Abort { actor, error, .. } if actor == HWV && error == "UnknownDevice"));
}

#[test]
fn rogue_and_forged_devices_never_get_an_envelope() {
    for (status, actor, error) in [
        (DaaStatus::Rogue, SWP, "AttestationRogue"),
        (DaaStatus::Forged, SWP, "AttestationInvalid"),
        (DaaStatus::NotJoined, "HAP0", "NotJoined"),
        (DaaStatus::RevokedEndorsement, "HAP0", "NotJoined"),
    ] {
        let mut cfg = advanced(13);
        cfg.devices[0].daa = status;
        let mut w = World::new(cfg).unwrap();
        let t = run_advanced_purchase(&mut w);
        assert!(
            matches!(&t.outcome, Outcome::Abort { actor: a, error: e, .. } if a == actor && e == error),
            "{status:?}: {}",
            t.outcome
        );
        assert!(t
            .records
            .iter()
            .all(|r| r.label != "deliver-envelope" && r.label != "package"));
        assert!(w.hap(0).device().fpga_digest().is_none());
        assert_eq!(w.pg().status(1), Some(PaymentStatus::Refunded));
    }
}

#[test]
fn hwv_sees_nothing_identifying_in_advanced_run() {
    let mut w = World::new(advanced(14)).unwrap();
    assert!(run_advanced_purchase(&mut w).outcome.is_success());
    let id = w.hap(0).device().id().0;
    let bs = w.bitstream("fir-filter", 1).unwrap().to_vec();
    for (_, msg) in w.hwv().inbox() {
        assert!(!msg.windows(16).any(|x| x == id));
        assert!(!msg.windows(b"fir-filter".len()).any(|x| x == b"fir-filter"));
        assert!(!msg.windows(32).any(|x| bs.windows(32).step_by(1024).any(|c| c == x)));
    }
    assert_eq!(w.hwv().inbox().len(), 1);
}

#[test]
fn lost_credentials_time_out_at_swp() {
    let policy = AdversaryPolicy::mitm(vec![Rule::on("EU0", SWP, "credentials", Action::Drop)]);
    let (w, t) = run_flow(&advanced(15), Flow::Advanced, policy).unwrap();
    assert!(matches!(&t.outcome, Outcome::Abort { actor, error, .. } if actor == SWP && error == "OrderTimeout"));
    assert_eq!(w.pg().status(1), Some(PaymentStatus::Refunded));
}

#[test]
fn planted_leak_is_caught() {
    let mut cfg = simple(16);
    cfg.faults.leak_bitstream = true;
    let mut w = World::new(cfg).unwrap();
    let t = run_simple_purchase(&mut w);
    assert!(t.outcome.is_success());
    let v = taint_scan(&t.records, &w.secrets());
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].dst, crate::actors::DEBUG_SINK);
}

#[test]
fn same_seed_same_transcript() {
    let run = |seed| {
        let mut w = World::new(advanced(seed)).unwrap();
        run_advanced_purchase(&mut w).export()
    };
    assert_eq!(run(17), run(17));
    assert_ne!(run(17), run(18));
}

#[test]
fn config_roundtrip_and_validation() {
    let cfg = simple(19);
    let text = cfg.to_toml();
    assert_eq!(ScenarioConfig::from_toml(&text).unwrap(), cfg);
    let mut broken = cfg.clone();
    broken.psks.pop();
    assert!(matches!(broken.validate(), Err(ConfigError::Invalid(_))));
    let mut broken = cfg.clone();
    broken.devices[1].serial = broken.devices[0].serial.clone();
    assert!(broken.validate().is_err());
    let mut broken = cfg;
    broken.buyer = 5;
    assert!(broken.validate().is_err());
    assert!(matches!(
        ScenarioConfig::from_toml("schema = ["),
        Err(ConfigError::Parse(_))
    ));
}

#[test]
fn golden_files_parse() {
    for flow in [Flow::Simple, Flow::SimpleUpdate, Flow::Advanced] {
        let g = golden(flow, 0);
        assert!(!g.is_empty());
        assert!(g.iter().all(|e| !e.description.is_empty()));
    }
    assert_eq!(
        golden(Flow::Simple, 0)
            .iter()
            .filter(|e| e.interaction != "load")
            .map(|e| &e.interaction)
            .collect::<std::collections::BTreeSet<_>>()
            .len(),
        7
    );
    assert_eq!(
        golden(Flow::Advanced, 0)
            .iter()
            .filter(|e| e.interaction != "load")
            .map(|e| &e.interaction)
            .collect::<std::collections::BTreeSet<_>>()
            .len(),
        6
    );
    assert_eq!(golden(Flow::Simple, 1)[0].src, "EU1");
}
