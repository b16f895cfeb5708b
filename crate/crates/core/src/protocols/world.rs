// Licensed under the Apache-2.0 license

use std::collections::BTreeMap;
use std::sync::Arc;

use super::config::{ConfigError, DaaStatus, ScenarioConfig, SchemeName};
use crate::actors::{
    hap_name, host_name, Actor, ActorError, ActorEvent, ChannelTable, EuHostActor, HapActor, HostConfig, HwvActor,
    Listing, Outbox, PaymentGatewayStub, StoreActor, SwpActor, DEBUG_SINK, HWV, PG, STORE, SWP,
};
use crate::crypto::{hash, Digest, SecureRng, SymKey};
use crate::daa::{Basename, GroupParams, IssuerKeyPair, IssuerService};
use crate::hap::{hap_provision, HapError, HwvRegistry, Scheme};
use crate::netsim::{mate_hooks, Bus, MateError, MateHandle, Outcome, Secret, Transcript};

/// Endpoint name used for aborts raised by the orchestrator itself.
pub const WORLD: &str = "world";

/// Upper bound on scheduler steps for one flow.
const MAX_STEPS: u64 = 100_000;

pub struct World {
    pub config: ScenarioConfig,
    seed: [u8; 8],
    bus: Bus,
    store: StoreActor,
    swp: SwpActor,
    hwv: HwvActor,
    pg: PaymentGatewayStub,
    hosts: Vec<EuHostActor>,
    haps: Vec<HapActor>,
    registry: Arc<HwvRegistry>,
    issuer: Arc<IssuerService>,
    bitstreams: BTreeMap<(String, u64), Vec<u8>>,
    events: Vec<ActorEvent>,
    /// Devices whose DAA provisioning failed, with the reason.
    pub provisioning_errors: BTreeMap<usize, String>,
}

impl std::fmt::Debug for World {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("World")
            .field("seed", &self.config.seed)
            .field("bus", &self.bus)
            .finish_non_exhaustive()
    }
}

fn bitstream_for(seed: &[u8], app_id: &str, version: u64, len: usize) -> Vec<u8> {
    SecureRng::derive(seed, &format!("bitstream/{app_id}/v{version}")).vec(len)
}

impl World {
    pub fn new(config: ScenarioConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let seed = config.seed.to_be_bytes();
        let rng_for = |label: &str| SecureRng::derive(&seed, label);
        let mut prov = rng_for("world/provision");

        let registry = Arc::new(HwvRegistry::new());
        let issuer = Arc::new(IssuerService::new(IssuerKeyPair::generate(
            GroupParams::default(),
            &mut prov,
        )));

        let mut devices = Vec::new();
        let mut provisioning_errors = BTreeMap::new();
        for (i, d) in config.devices.iter().enumerate() {
            let mut dev =
                hap_provision(&registry, &d.serial, &mut prov).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            let joined: Result<(), HapError> = match d.daa {
                DaaStatus::Joined => dev.join(&issuer, registry.as_ref(), d.counter),
                DaaStatus::NotJoined => Ok(()),
                DaaStatus::Forged => {
                    let counterfeit = IssuerService::new(IssuerKeyPair::generate(GroupParams::default(), &mut prov));
                    dev.join(&counterfeit, registry.as_ref(), d.counter)
                }
                DaaStatus::Rogue => dev.join(&issuer, registry.as_ref(), d.counter).map(|()| {
                    issuer.rogue_add(dev.compromise(d.counter));
                }),
                DaaStatus::RevokedEndorsement => {
                    registry.revoke_endorsement(&dev.id());
                    dev.join(&issuer, registry.as_ref(), d.counter)
                }
            };
            if let Err(e) = joined {
                provisioning_errors.insert(i, e.to_string());
            }
            devices.push(dev);
        }

        let psk = |a: &str, b: &str| -> SymKey {
            let hex_key = config.psk_hex(a, b).expect("validated");
            SymKey::from_slice(&hex::decode(hex_key).expect("validated")).expect("validated")
        };
        let table = |me: &str| {
            let mut t = ChannelTable::new(me);
            for (a, b) in config.required_pairs() {
                if a == me {
                    t.add_psk(&b, psk(&a, &b));
                } else if b == me {
                    t.add_psk(&a, psk(&a, &b));
                }
            }
            t
        };

        let mut bus = Bus::new(&seed);
        for e in [STORE, SWP, HWV, PG] {
            bus.register(e);
        }
        if config.faults.leak_bitstream {
            bus.register(DEBUG_SINK);
        }
        let scheme: Scheme = config.scheme.into();

        let mut store = StoreActor::new(scheme, table(STORE), rng_for("actor/STORE"));
        let mut swp = SwpActor::new(table(SWP), rng_for("actor/SWP"), config.order_timeout_steps);
        let mut bitstreams = BTreeMap::new();
        for app in &config.apps {
            store.list(
                &app.id,
                Listing {
                    swp: SWP.to_string(),
                    price: app.price,
                },
            );
            let bs = bitstream_for(&seed, &app.id, app.version, app.bitstream_len);
            swp.add_app(&app.id, app.sw.as_bytes().to_vec(), app.version, bs.clone());
            bitstreams.insert((app.id.clone(), app.version), bs);
        }
        if config.scheme == SchemeName::Advanced {
            let basename = config.basename.as_ref().map(Basename::named).unwrap_or_default();
            swp.set_verifier(issuer.params().clone(), issuer.public().clone(), basename);
        }
        if config.faults.leak_bitstream {
            swp.plant_leak();
        }

        let mut hosts = Vec::new();
        let mut haps = Vec::new();
        for (i, (dev, d)) in devices.into_iter().zip(&config.devices).enumerate() {
            let (h, p) = (host_name(i), hap_name(i));
            bus.register(&h);
            bus.register(&p);
            bus.mark_local(&h, &p);
            let user = format!("user{i}");
            store.open_account(&user, &h);
            let mut t = table(&h);
            t.set_local_peer(&p);
            let cfg = HostConfig {
                name: h.clone(),
                hap: p.clone(),
                user,
                id_hap: dev.id(),
                scheme,
                basename: config.basename.as_ref().map(Basename::named).unwrap_or_default(),
                counter: d.counter,
            };
            hosts.push(EuHostActor::new(cfg, t, rng_for(&format!("actor/{h}"))));
            haps.push(HapActor::new(&p, &h, dev, rng_for(&format!("actor/{p}"))));
        }

        let hwv = HwvActor::new(registry.clone(), issuer.clone(), table(HWV), rng_for("actor/HWV"));
        let pg = PaymentGatewayStub::new(config.payment_policy, table(PG), rng_for("actor/PG"));
        bus.set_policy(config.adversary.clone());

        Ok(Self {
            config,
            seed,
            bus,
            store,
            swp,
            hwv,
            pg,
            hosts,
            haps,
            registry,
            issuer,
            bitstreams,
            events: Vec::new(),
            provisioning_errors,
        })
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn set_policy(&mut self, policy: crate::netsim::AdversaryPolicy) {
        self.bus.set_policy(policy);
    }

    pub fn store(&self) -> &StoreActor {
        &self.store
    }

    pub fn swp(&self) -> &SwpActor {
        &self.swp
    }

    pub fn hwv(&self) -> &HwvActor {
        &self.hwv
    }

    pub fn pg(&self) -> &PaymentGatewayStub {
        &self.pg
    }

    pub fn host(&self, i: usize) -> &EuHostActor {
        &self.hosts[i]
    }

    pub fn hap(&self, i: usize) -> &HapActor {
        &self.haps[i]
    }

    pub fn hap_mut(&mut self, i: usize) -> &mut HapActor {
        &mut self.haps[i]
    }

    pub fn registry(&self) -> &HwvRegistry {
        &self.registry
    }

    pub fn issuer(&self) -> &IssuerService {
        &self.issuer
    }

    pub fn device_count(&self) -> usize {
        self.hosts.len()
    }

    pub fn events(&self) -> &[ActorEvent] {
        &self.events
    }

    /// Adversary access to host `i`; requires a MATE policy.
    pub fn mate(&mut self, i: usize) -> Result<MateHandle<'_>, MateError> {
        let policy = self.bus.policy().clone();
        mate_hooks(&policy, &mut self.hosts[i])
    }

    pub fn bitstream(&self, app_id: &str, version: u64) -> Option<&[u8]> {
        self.bitstreams.get(&(app_id.to_string(), version)).map(Vec::as_slice)
    }

    pub fn bitstreams(&self) -> impl Iterator<Item = (&(String, u64), &Vec<u8>)> {
        self.bitstreams.iter()
    }

    /// Whether a digest belongs to any genuine released bitstream.
    pub fn is_genuine_digest(&self, d: &Digest) -> bool {
        self.bitstreams.values().any(|bs| &hash(bs) == d)
    }

    /// Publishes the next version of an app at the SWP; returns it.
    pub fn release_version(&mut self, app_id: &str) -> Option<u64> {
        let app = self.config.apps.iter().find(|a| a.id == app_id)?;
        let len = app.bitstream_len;
        let next = self.swp.app(app_id)?.current + 1;
        let bs = bitstream_for(&self.seed, app_id, next, len);
        let sw = self.swp.app(app_id)?.sw.clone();
        self.swp.add_app(app_id, sw, next, bs.clone());
        self.bitstreams.insert((app_id.to_string(), next), bs);
        Some(next)
    }

    /// All secrets that must never cross the wire in the clear.
    pub fn secrets(&self) -> Vec<Secret> {
        let mut out = Vec::new();
        for ((app, v), bs) in &self.bitstreams {
            out.extend(Secret::chunked(&format!("BS[{app} v{v}]"), bs));
        }
        for (i, hap) in self.haps.iter().enumerate() {
            for (label, bytes) in hap.device().audit_secrets() {
                out.push(Secret::new(format!("{}.{label}", hap_name(i)), bytes));
            }
        }
        for (i, k) in self.swp.session_keys().iter().enumerate() {
            out.push(Secret::new(format!("K_s[{i}]"), k.as_bytes().to_vec()));
        }
        out
    }

    fn actor_mut(&mut self, name: &str) -> Option<&mut dyn Actor> {
        let indexed = |prefix: &str| name.strip_prefix(prefix).and_then(|n| n.parse::<usize>().ok());
        match name {
            STORE => Some(&mut self.store),
            SWP => Some(&mut self.swp),
            HWV => Some(&mut self.hwv),
            PG => Some(&mut self.pg),
            _ => {
                if let Some(i) = indexed("EU") {
                    self.hosts.get_mut(i).map(|h| h as &mut dyn Actor)
                } else if let Some(i) = indexed("HAP") {
                    self.haps.get_mut(i).map(|h| h as &mut dyn Actor)
                } else {
                    None
                }
            }
        }
    }

    fn actor_names(&self) -> Vec<String> {
        let mut names = vec![STORE.to_string(), SWP.to_string(), HWV.to_string(), PG.to_string()];
        for i in 0..self.hosts.len() {
            names.push(host_name(i));
            names.push(hap_name(i));
        }
        names
    }

    fn dispatch(&mut self, src: &str, out: Outbox) -> Result<(), Outcome> {
        self.events.extend(out.events);
        for (dst, label, bytes) in out.sends {
            self.bus
                .send(src, &dst, &label, bytes)
                .map_err(|e| Outcome::abort(src, "UnknownEndpoint", e.to_string()))?;
        }
        Ok(())
    }

    fn abort(&mut self, actor: &str, e: &ActorError) -> Outcome {
        for name in self.actor_names() {
            if let Some(a) = self.actor_mut(&name) {
                a.on_abort();
            }
        }
        Outcome::abort(actor, &e.kind(), e.to_string())
    }

    /// Starts a fresh transcript and lets `kick` emit the first messages from `src`.
    pub(crate) fn begin(
        &mut self,
        src: &str,
        kick: impl FnOnce(&mut Self, &mut Outbox) -> Result<(), ActorError>,
    ) -> Result<(), Outcome> {
        self.bus.take_records();
        self.events.clear();
        let mut out = Outbox::default();
        if let Err(e) = kick(self, &mut out) {
            return Err(self.abort(src, &e));
        }
        self.dispatch(src, out)
    }

    pub(crate) fn host_mut(&mut self, i: usize) -> &mut EuHostActor {
        &mut self.hosts[i]
    }

    /// Drives the scheduler until `done` holds on an idle bus, an actor
    /// fails, or progress stalls.
    pub(crate) fn run_until(&mut self, done: impl Fn(&[ActorEvent]) -> bool) -> Outcome {
        let stall_limit = self.config.order_timeout_steps * 2 + 8;
        let start = self.bus.current_step();
        let mut idle = 0;
        loop {
            if self.bus.current_step() - start > MAX_STEPS {
                return Outcome::abort(WORLD, "StepLimit", format!("no outcome after {MAX_STEPS} steps"));
            }
            if let Some(d) = self.bus.step() {
                idle = 0;
                let mut out = Outbox::default();
                let res = match self.actor_mut(&d.dst) {
                    Some(actor) => actor.on_packet(&d.src, &d.bytes, &mut out),
                    None => Ok(()),
                };
                if let Err(e) = res {
                    return self.abort(&d.dst, &e);
                }
                if let Err(o) = self.dispatch(&d.dst, out) {
                    return o;
                }
                continue;
            }
            if done(&self.events) {
                return Outcome::Success;
            }
            let step = self.bus.current_step();
            for name in self.actor_names() {
                let mut out = Outbox::default();
                let res = self.actor_mut(&name).expect("known actor").on_tick(step, &mut out);
                if let Err(e) = res {
                    return self.abort(&name, &e);
                }
                if let Err(o) = self.dispatch(&name, out) {
                    return o;
                }
            }
            if self.bus.is_idle() {
                idle += 1;
                if idle > stall_limit {
                    return Outcome::abort(WORLD, "Stalled", format!("no progress for {stall_limit} idle steps"));
                }
                self.bus.step();
            }
        }
    }

    /// Packages the records since the last `begin` with end-of-run snapshots.
    pub(crate) fn transcript(&mut self, outcome: Outcome) -> Transcript {
        let records = self.bus.take_records();
        let mut snapshots = BTreeMap::new();
        for name in self.actor_names() {
            let bytes = self.actor_mut(&name).expect("known actor").state_bytes();
            snapshots.insert(name, bytes);
        }
        Transcript {
            records,
            snapshots,
            outcome,
        }
    }
}
