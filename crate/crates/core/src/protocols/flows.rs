// Licensed under the Apache-2.0 license

use serde::{Deserialize, Serialize};

use super::config::{ConfigError, ScenarioConfig, SchemeName};
use super::world::{World, WORLD};
use crate::actors::{host_name, ActorEvent};
use crate::netsim::{AdversaryPolicy, HostField, Outcome, Transcript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flow {
    Simple,
    SimpleUpdate,
    Advanced,
    /// Simple purchase and update, then a MATE rollback of the medium.
    Downgrade,
}

impl Flow {
    pub fn scheme(self) -> SchemeName {
        match self {
            Flow::Advanced => SchemeName::Advanced,
            _ => SchemeName::Simple,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Flow::Simple => "simple",
            Flow::SimpleUpdate => "simple-update",
            Flow::Advanced => "advanced",
            Flow::Downgrade => "downgrade",
        }
    }
}

impl std::fmt::Display for Flow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn loaded(events: &[ActorEvent], host: &str, app_id: &str, version: Option<u64>) -> bool {
    events.iter().any(|e| {
        matches!(e, ActorEvent::AppLoaded { host: h, receipt }
            if h == host && receipt.app_id == app_id && version.is_none_or(|v| receipt.version == v))
    })
}

fn wrong_scheme(world: &mut World, want: SchemeName) -> Option<Transcript> {
    (world.config.scheme != want).then(|| {
        let detail = format!("flow needs the {want:?} scheme");
        world.transcript(Outcome::abort(WORLD, "SchemeMismatch", detail))
    })
}

/// EU `buyer` purchases `app_id`; ends once the HAP has loaded it.
pub fn purchase_app(world: &mut World, buyer: usize, app_id: &str) -> Transcript {
    let host = host_name(buyer);
    if let Err(o) = world.begin(&host, |w, out| w.host_mut(buyer).start_purchase(app_id, out)) {
        return world.transcript(o);
    }
    let outcome = world.run_until(|ev| loaded(ev, &host, app_id, None));
    world.transcript(outcome)
}

pub fn run_simple_purchase(world: &mut World) -> Transcript {
    if let Some(t) = wrong_scheme(world, SchemeName::Simple) {
        return t;
    }
    let (buyer, app) = (world.config.buyer, world.config.apps[0].id.clone());
    purchase_app(world, buyer, &app)
}

pub fn run_advanced_purchase(world: &mut World) -> Transcript {
    if let Some(t) = wrong_scheme(world, SchemeName::Advanced) {
        return t;
    }
    let (buyer, app) = (world.config.buyer, world.config.apps[0].id.clone());
    purchase_app(world, buyer, &app)
}

/// Reduced flow straight to the SWP. Succeeds when the latest version is
/// loaded or the host is already up to date.
pub fn run_simple_update(world: &mut World, app_id: &str) -> Transcript {
    if let Some(t) = wrong_scheme(world, SchemeName::Simple) {
        return t;
    }
    let buyer = world.config.buyer;
    let host = host_name(buyer);
    let latest = world.swp().app(app_id).map(|a| a.current);
    if let Err(o) = world.begin(&host, |w, out| w.host_mut(buyer).start_update(app_id, out)) {
        return world.transcript(o);
    }
    let outcome = world.run_until(|ev| {
        loaded(ev, &host, app_id, latest)
            || ev
                .iter()
                .any(|e| matches!(e, ActorEvent::UpToDate { host: h, app_id: a } if *h == host && a == app_id))
    });
    world.transcript(outcome)
}

/// The user starts an installed app, which reconfigures the HAP from the medium.
pub fn run_app(world: &mut World, i: usize, app_id: &str) -> Transcript {
    let host = host_name(i);
    if let Err(o) = world.begin(&host, |w, out| w.host_mut(i).run_app(app_id, out)) {
        return world.transcript(o);
    }
    let outcome = world.run_until(|ev| loaded(ev, &host, app_id, None));
    world.transcript(outcome)
}

/// Runs `flow` on a fresh world. `policy` is active only during the
/// flow's final phase (the update for `SimpleUpdate`, the rollback run for
/// `Downgrade`); set-up phases run unattacked.
pub fn run_flow(
    config: &ScenarioConfig,
    flow: Flow,
    policy: AdversaryPolicy,
) -> Result<(World, Transcript), ConfigError> {
    let mut cfg = config.clone();
    cfg.scheme = flow.scheme();
    cfg.adversary = AdversaryPolicy::none();
    let mut world = World::new(cfg)?;
    let app = world.config.apps[0].id.clone();
    let buyer = world.config.buyer;
    let t = match flow {
        Flow::Simple => {
            world.set_policy(policy);
            run_simple_purchase(&mut world)
        }
        Flow::Advanced => {
            world.set_policy(policy);
            run_advanced_purchase(&mut world)
        }
        Flow::SimpleUpdate => {
            let t = run_simple_purchase(&mut world);
            if !t.outcome.is_success() {
                return Ok((world, t));
            }
            world.release_version(&app);
            world.set_policy(policy);
            run_simple_update(&mut world, &app)
        }
        Flow::Downgrade => {
            let mut mate = policy;
            mate.mode = crate::netsim::AdversaryMode::Mate;
            world.set_policy(AdversaryPolicy::mate(Vec::new()));
            let t = run_simple_purchase(&mut world);
            if !t.outcome.is_success() {
                return Ok((world, t));
            }
            let old = world.mate(buyer).and_then(|m| m.read(&HostField::Medium(app.clone())));
            world.release_version(&app);
            let t = run_simple_update(&mut world, &app);
            if !t.outcome.is_success() {
                return Ok((world, t));
            }
            let old = old.expect("mate mode grants medium access");
            world
                .mate(buyer)
                .and_then(|mut m| m.write(&HostField::Medium(app.clone()), old))
                .expect("mate mode grants medium access");
            world.set_policy(mate);
            run_app(&mut world, buyer, &app)
        }
    };
    Ok((world, t))
}
