// Licensed under the Apache-2.0 license

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{ConfigError, DaaStatus, ScenarioConfig};
use super::flows::{run_flow, Flow};
use super::world::{World, WORLD};
use crate::actors::{hap_name, host_name, HWV, STORE, SWP};
use crate::netsim::{Action, AdversaryPolicy, Outcome, Rule, Transcript};

/// A named attack: base flow, adversary and the abort it must produce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackScenario {
    pub name: String,
    pub flow: Flow,
    /// Overrides the buyer device's DAA state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<DaaStatus>,
    #[serde(default)]
    pub adversary: AdversaryPolicy,
    pub expect_actor: String,
    pub expect_error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackSuite {
    #[serde(default, rename = "scenario")]
    pub scenarios: Vec<AttackScenario>,
}

impl AttackSuite {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("suite serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub expected: String,
    pub actual: Outcome,
    /// Every HAP fabric is empty or holds a genuine bitstream.
    pub fabric_clean: bool,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}\t{}\texpected abort {}\tgot {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.expected,
            self.actual
        )
    }
}

fn fabric_clean(world: &World) -> bool {
    (0..world.device_count()).all(|i| {
        world
            .hap(i)
            .device()
            .fpga_digest()
            .is_none_or(|d| world.is_genuine_digest(&d))
    })
}

pub fn run_attack(config: &ScenarioConfig, scenario: &AttackScenario) -> Result<(Verdict, Transcript), ConfigError> {
    let mut cfg = config.clone();
    if let Some(status) = scenario.device {
        cfg.devices[cfg.buyer].daa = status;
    }
    let (world, transcript) = run_flow(&cfg, scenario.flow, scenario.adversary.clone())?;
    let clean = fabric_clean(&world);
    let matches = matches!(&transcript.outcome,
        Outcome::Abort { actor, error, .. } if *actor == scenario.expect_actor && *error == scenario.expect_error);
    let verdict = Verdict {
        name: scenario.name.clone(),
        pass: matches && clean,
        expected: format!("{} {}", scenario.expect_actor, scenario.expect_error),
        actual: transcript.outcome.clone(),
        fabric_clean: clean,
    };
    Ok((verdict, transcript))
}

fn is_local(a: &str, b: &str) -> bool {
    let idx = |s: &str, p: &str| s.strip_prefix(p).map(str::to_string);
    matches!((idx(a, "EU"), idx(b, "HAP")), (Some(x), Some(y)) if x == y)
        || matches!((idx(a, "HAP"), idx(b, "EU")), (Some(x), Some(y)) if x == y)
}

/// Tamper, replay and impersonation against every network message of the
/// honest runs, plus drop, injection, MATE and device-state scenarios.
pub fn generate_suite(config: &ScenarioConfig) -> Result<AttackSuite, ConfigError> {
    let mut scenarios = Vec::new();
    for flow in [Flow::Simple, Flow::SimpleUpdate, Flow::Advanced] {
        let (_, honest) = run_flow(config, flow, AdversaryPolicy::none())?;
        if !honest.outcome.is_success() {
            return Err(ConfigError::Invalid(format!(
                "honest {flow} run fails: {}",
                honest.outcome
            )));
        }
        let mut seen: BTreeMap<(String, String, String), u64> = BTreeMap::new();
        for (i, r) in honest.records.iter().enumerate() {
            if is_local(&r.src, &r.dst) {
                continue;
            }
            let n = seen.entry((r.src.clone(), r.dst.clone(), r.label.clone())).or_default();
            *n += 1;
            // A bad hs-init is only noticed when the initiator checks the response.
            let victim = if r.label == "hs-init" { &r.src } else { &r.dst };
            let attacks = [
                (
                    "tamper",
                    Action::Tamper { offset: -1, mask: 0x01 },
                    victim,
                    "AuthenticationFailure",
                ),
                ("replay", Action::Replay { record: None }, &r.dst, "ReplayDetected"),
                ("impersonate", Action::Impersonate, victim, "AuthenticationFailure"),
            ];
            for (kind, action, actor, error) in attacks {
                scenarios.push(AttackScenario {
                    name: format!("{flow}/{kind}/{i:02}:{}->{}:{}#{n}", r.src, r.dst, r.label),
                    flow,
                    device: None,
                    adversary: AdversaryPolicy::mitm(vec![Rule::on(&r.src, &r.dst, &r.label, action).nth(*n)]),
                    expect_actor: actor.clone(),
                    expect_error: error.to_string(),
                });
            }
        }
    }

    let buyer = config.buyer;
    let (eu, hap) = (host_name(buyer), hap_name(buyer));
    let mut extra = |name: &str, flow, device, adversary, actor: &str, error: &str| {
        scenarios.push(AttackScenario {
            name: name.to_string(),
            flow,
            device,
            adversary,
            expect_actor: actor.to_string(),
            expect_error: error.to_string(),
        })
    };
    let none = AdversaryPolicy::none;
    extra(
        "advanced/drop/credentials",
        Flow::Advanced,
        None,
        AdversaryPolicy::mitm(vec![Rule::on(&eu, SWP, "credentials", Action::Drop)]),
        SWP,
        "OrderTimeout",
    );
    extra(
        "advanced/drop/new-customer",
        Flow::Advanced,
        None,
        AdversaryPolicy::mitm(vec![Rule::on(STORE, SWP, "new-customer", Action::Drop)]),
        WORLD,
        "Stalled",
    );
    extra(
        "simple/inject/garbage-to-swp",
        Flow::Simple,
        None,
        AdversaryPolicy::mitm(vec![Rule::on(
            STORE,
            SWP,
            "forward-customer",
            Action::Inject { bytes: "00ff".into() },
        )]),
        SWP,
        "Malformed",
    );
    extra(
        "simple/replay/stale-hs-init-to-store",
        Flow::Simple,
        None,
        AdversaryPolicy::mitm(vec![Rule::on(
            HWV,
            SWP,
            "encrypted-bitstream",
            Action::Replay { record: Some(0) },
        )]),
        STORE,
        "ReplayDetected",
    );
    extra(
        "simple/mate/tamper-load-request",
        Flow::Simple,
        None,
        AdversaryPolicy::mate(vec![Rule::on(
            &eu,
            &hap,
            "load-request",
            Action::Tamper { offset: -1, mask: 0x01 },
        )]),
        &hap,
        "AuthenticationFailure",
    );
    extra(
        "advanced/mate/tamper-load-request",
        Flow::Advanced,
        None,
        AdversaryPolicy::mate(vec![Rule::on(
            &eu,
            &hap,
            "load-request",
            Action::Tamper { offset: -1, mask: 0x01 },
        )]),
        &hap,
        "AuthenticationFailure",
    );
    for label in ["attest-request", "attest-response"] {
        let (src, dst) = if label == "attest-request" {
            (&eu, &hap)
        } else {
            (&hap, &eu)
        };
        extra(
            &format!("advanced/mate/tamper-{label}"),
            Flow::Advanced,
            None,
            AdversaryPolicy::mate(vec![Rule::on(
                src,
                dst,
                label,
                Action::Tamper { offset: -1, mask: 0x01 },
            )]),
            SWP,
            "AttestationInvalid",
        );
    }
    extra(
        "simple/mate/downgrade",
        Flow::Downgrade,
        None,
        none(),
        &hap,
        "DowngradeRejected",
    );
    extra(
        "advanced/device/rogue",
        Flow::Advanced,
        Some(DaaStatus::Rogue),
        none(),
        SWP,
        "AttestationRogue",
    );
    extra(
        "advanced/device/forged",
        Flow::Advanced,
        Some(DaaStatus::Forged),
        none(),
        SWP,
        "AttestationInvalid",
    );
    extra(
        "advanced/device/not-joined",
        Flow::Advanced,
        Some(DaaStatus::NotJoined),
        none(),
        &hap,
        "NotJoined",
    );
    extra(
        "advanced/device/revoked-endorsement",
        Flow::Advanced,
        Some(DaaStatus::RevokedEndorsement),
        none(),
        &hap,
        "NotJoined",
    );
    Ok(AttackSuite { scenarios })
}
