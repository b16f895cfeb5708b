// Licensed under the Apache-2.0 license

use std::collections::{BTreeMap, BTreeSet};

use super::{
    order_context, AckBook, Actor, ActorError, ChannelTable, Message, Nonce16, Outbox, DEBUG_SINK, HWV, STORE, SWP,
};
use crate::crypto::{PublicKeyBytes, SecureRng, SymKey};
use crate::daa::{daa_verify, g1_bytes, Basename, DaaSignature, GroupParams, IssuerPublicKey, RogueList, VerifyResult};
use crate::hap::{attest_message, EncryptedBitstreamEnvelope};
use crate::wire::Writer;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppRecord {
    pub sw: Vec<u8>,
    /// Bitstream plaintext per released version.
    pub versions: BTreeMap<u64, Vec<u8>>,
    pub current: u64,
}

#[derive(Debug, Clone)]
enum RequestFor {
    Purchase { order_id: u64 },
    Update { ref_id: u64, host: String, nonce: Nonce16 },
}

#[derive(Debug, Clone)]
struct EncryptionRequest {
    for_: RequestFor,
    app_id: String,
    version: u64,
    nonce: Nonce16,
}

#[derive(Debug, Clone)]
struct StashedCredentials {
    public: [u8; 32],
    signature: Vec<u8>,
    since: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum OrderState {
    AwaitingCredentials { since: Option<u64> },
    Verifying,
    Delivered,
}

#[derive(Debug, Clone)]
struct AdvancedOrder {
    app_id: String,
    state: OrderState,
}

#[derive(Debug, Clone)]
struct RogueCheck {
    order_id: u64,
    public: [u8; 32],
    pseudonym: [u8; 48],
    nonce: Nonce16,
}

#[derive(Debug)]
pub struct SwpActor {
    apps: BTreeMap<String, AppRecord>,
    customers_simple: BTreeMap<[u8; 16], BTreeSet<String>>,
    /// Advanced customers are known only by basename pseudonym.
    customers_advanced: BTreeMap<[u8; 48], BTreeSet<String>>,
    orders: BTreeMap<u64, AdvancedOrder>,
    stash: BTreeMap<u64, StashedCredentials>,
    requests: BTreeMap<u64, EncryptionRequest>,
    checks: BTreeMap<u64, RogueCheck>,
    session_keys: Vec<SymKey>,
    next_id: u64,
    daa: Option<(GroupParams, IssuerPublicKey)>,
    basename: Basename,
    order_timeout_steps: u64,
    leak_bitstream: bool,
    acks: AckBook,
    channels: ChannelTable,
    rng: SecureRng,
}

impl SwpActor {
    pub fn new(channels: ChannelTable, rng: SecureRng, order_timeout_steps: u64) -> Self {
        Self {
            apps: BTreeMap::new(),
            customers_simple: BTreeMap::new(),
            customers_advanced: BTreeMap::new(),
            orders: BTreeMap::new(),
            stash: BTreeMap::new(),
            requests: BTreeMap::new(),
            checks: BTreeMap::new(),
            session_keys: Vec::new(),
            next_id: 1,
            daa: None,
            basename: Basename::none(),
            order_timeout_steps,
            leak_bitstream: false,
            acks: AckBook::default(),
            channels,
            rng,
        }
    }

    /// Enables the advanced flow: verification key and expected basename.
    pub fn set_verifier(&mut self, params: GroupParams, issuer: IssuerPublicKey, basename: Basename) {
        self.daa = Some((params, issuer));
        self.basename = basename;
    }

    /// Fault injection: also sends every bitstream to the debug sink in the clear.
    pub fn plant_leak(&mut self) {
        self.leak_bitstream = true;
    }

    pub fn add_app(&mut self, app_id: &str, sw: Vec<u8>, version: u64, bitstream: Vec<u8>) {
        let rec = self.apps.entry(app_id.to_string()).or_insert_with(|| AppRecord {
            sw,
            versions: BTreeMap::new(),
            current: version,
        });
        rec.versions.insert(version, bitstream);
        rec.current = rec.current.max(version);
    }

    pub fn app(&self, app_id: &str) -> Option<&AppRecord> {
        self.apps.get(app_id)
    }

    pub fn is_simple_customer(&self, id_hap: &[u8; 16], app_id: &str) -> bool {
        self.customers_simple
            .get(id_hap)
            .is_some_and(|apps| apps.contains(app_id))
    }

    pub fn advanced_customers(&self) -> usize {
        self.customers_advanced.len()
    }

    pub fn session_keys(&self) -> &[SymKey] {
        &self.session_keys
    }

    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn request_encryption(
        &mut self,
        for_: RequestFor,
        app_id: &str,
        id_hap: [u8; 16],
        out: &mut Outbox,
    ) -> Result<(), ActorError> {
        let app = self
            .apps
            .get(app_id)
            .ok_or_else(|| ActorError::UnknownApp(app_id.to_string()))?;
        let version = app.current;
        let bitstream = app.versions[&version].clone();
        let request_id = self.fresh_id();
        let nonce = self.rng.array();
        if self.leak_bitstream {
            out.push(
                DEBUG_SINK,
                "debug-leak",
                Message::DebugLeak {
                    bytes: bitstream.clone(),
                }
                .encode(),
            );
        }
        self.requests.insert(
            request_id,
            EncryptionRequest {
                for_,
                app_id: app_id.to_string(),
                version,
                nonce,
            },
        );
        let msg = Message::EncryptRequest {
            request_id,
            app_id: app_id.to_string(),
            version,
            id_hap,
            bitstream,
            nonce,
        };
        self.channels.send(HWV, msg, &mut self.rng, out)
    }

    fn deliver(&mut self, order_id: u64, envelope: Vec<u8>, app_id: &str, out: &mut Outbox) -> Result<(), ActorError> {
        let sw = self.apps[app_id].sw.clone();
        let nonce = self.rng.array();
        self.acks.expect(STORE, order_id, nonce);
        let msg = Message::DeliverEnvelope {
            order_id,
            sw,
            envelope,
            nonce,
        };
        self.channels.send(STORE, msg, &mut self.rng, out)
    }

    /// DAA-Verify against the configured basename, then the HWV rogue oracle.
    fn verify_credentials(
        &mut self,
        order_id: u64,
        public: [u8; 32],
        signature: &[u8],
        out: &mut Outbox,
    ) -> Result<(), ActorError> {
        let (params, issuer) = self.daa.as_ref().ok_or(ActorError::AttestationInvalid)?;
        let sig = DaaSignature::decode(signature).map_err(|_| ActorError::AttestationInvalid)?;
        let msg = attest_message(&PublicKeyBytes(public), &order_context(order_id));
        if daa_verify(params, issuer, &msg, &sig, &self.basename, &RogueList::default()) != VerifyResult::Accept {
            return Err(ActorError::AttestationInvalid);
        }
        if let Some(o) = self.orders.get_mut(&order_id) {
            o.state = OrderState::Verifying;
        }
        let query_id = self.fresh_id();
        let nonce = self.rng.array();
        let pseudonym = g1_bytes(&sig.pseudonym);
        self.checks.insert(
            query_id,
            RogueCheck {
                order_id,
                public,
                pseudonym,
                nonce,
            },
        );
        let query = Message::RogueQuery {
            query_id,
            pseudonym,
            base: sig.base.encode(),
            nonce,
        };
        self.channels.send(HWV, query, &mut self.rng, out)
    }

    fn handle(&mut self, from: &str, msg: Message, out: &mut Outbox) -> Result<(), ActorError> {
        match msg {
            Message::ForwardCustomer {
                order_id,
                app_id,
                id_hap,
                nonce,
            } if from == STORE => {
                if !self.apps.contains_key(&app_id) {
                    return Err(ActorError::UnknownApp(app_id));
                }
                self.channels
                    .send(from, Message::Ack { id: order_id, nonce }, &mut self.rng, out)?;
                self.customers_simple.entry(id_hap).or_default().insert(app_id.clone());
                self.request_encryption(RequestFor::Purchase { order_id }, &app_id, id_hap, out)
            }
            Message::EncryptedBitstream {
                request_id,
                envelope,
                nonce,
            } if from == HWV => {
                let req = match self.requests.remove(&request_id) {
                    Some(r) if r.nonce == nonce => r,
                    _ => return Err(ActorError::AckMismatch),
                };
                match req.for_ {
                    RequestFor::Purchase { order_id } => self.deliver(order_id, envelope, &req.app_id, out),
                    RequestFor::Update { ref_id, host, nonce } => {
                        self.acks.expect(&host, ref_id, nonce);
                        let msg = Message::UpdatePackage {
                            ref_id,
                            app_id: req.app_id,
                            version: req.version,
                            envelope,
                            nonce,
                        };
                        self.channels.send(&host, msg, &mut self.rng, out)
                    }
                }
            }
            Message::NewCustomer {
                order_id,
                app_id,
                nonce,
            } if from == STORE => {
                if !self.apps.contains_key(&app_id) {
                    return Err(ActorError::UnknownApp(app_id));
                }
                self.channels
                    .send(from, Message::Ack { id: order_id, nonce }, &mut self.rng, out)?;
                self.orders.insert(
                    order_id,
                    AdvancedOrder {
                        app_id,
                        state: OrderState::AwaitingCredentials { since: None },
                    },
                );
                match self.stash.remove(&order_id) {
                    Some(c) => self.verify_credentials(order_id, c.public, &c.signature, out),
                    None => Ok(()),
                }
            }
            Message::Credentials {
                order_id,
                public,
                signature,
                nonce,
            } => {
                self.channels
                    .send(from, Message::Ack { id: order_id, nonce }, &mut self.rng, out)?;
                match self.orders.get(&order_id).map(|o| &o.state) {
                    Some(OrderState::AwaitingCredentials { .. }) => {
                        self.verify_credentials(order_id, public, &signature, out)
                    }
                    Some(_) => Err(ActorError::UnknownOrder(order_id)),
                    None => {
                        // Credentials can overtake the STORE notification.
                        self.stash.insert(
                            order_id,
                            StashedCredentials {
                                public,
                                signature,
                                since: None,
                            },
                        );
                        Ok(())
                    }
                }
            }
            Message::RogueAnswer { query_id, rogue, nonce } if from == HWV => {
                let check = match self.checks.remove(&query_id) {
                    Some(c) if c.nonce == nonce => c,
                    _ => return Err(ActorError::AckMismatch),
                };
                if rogue {
                    return Err(ActorError::AttestationRogue);
                }
                let order = self
                    .orders
                    .get_mut(&check.order_id)
                    .ok_or(ActorError::UnknownOrder(check.order_id))?;
                order.state = OrderState::Delivered;
                let app_id = order.app_id.clone();
                let app = &self.apps[&app_id];
                let (version, bitstream) = (app.current, app.versions[&app.current].clone());
                let (env, session_key) = EncryptedBitstreamEnvelope::seal_advanced(
                    &PublicKeyBytes(check.public),
                    &app_id,
                    version,
                    &bitstream,
                    &mut self.rng,
                );
                self.session_keys.push(session_key);
                self.customers_advanced
                    .entry(check.pseudonym)
                    .or_default()
                    .insert(app_id.clone());
                self.deliver(check.order_id, env.encode(), &app_id, out)
            }
            Message::UpdateCheck {
                ref_id,
                app_id,
                installed: _,
                nonce,
            } => {
                let latest = self
                    .apps
                    .get(&app_id)
                    .ok_or_else(|| ActorError::UnknownApp(app_id.clone()))?
                    .current;
                let offer = Message::UpdateOffer {
                    ref_id,
                    app_id,
                    latest,
                    nonce,
                };
                self.channels.send(from, offer, &mut self.rng, out)
            }
            Message::UpdateRequest {
                ref_id,
                app_id,
                id_hap,
                nonce,
            } => {
                if !self.is_simple_customer(&id_hap, &app_id) {
                    return Err(ActorError::NotACustomer(app_id));
                }
                let for_ = RequestFor::Update {
                    ref_id,
                    host: from.to_string(),
                    nonce,
                };
                self.request_encryption(for_, &app_id, id_hap, out)
            }
            Message::Ack { id, nonce } => self.acks.confirm(from, id, &nonce),
            other => Err(ActorError::unexpected(&other, from)),
        }
    }
}

impl Actor for SwpActor {
    fn name(&self) -> &str {
        SWP
    }

    fn on_packet(&mut self, from: &str, bytes: &[u8], out: &mut Outbox) -> Result<(), ActorError> {
        match self.channels.receive(from, bytes, &mut self.rng, out)? {
            Some(msg) => self.handle(from, msg, out),
            None => Ok(()),
        }
    }

    /// Pending advanced orders (and orphaned credentials) expire after
    /// `order_timeout_steps` idle steps.
    fn on_tick(&mut self, step: u64, _out: &mut Outbox) -> Result<(), ActorError> {
        let timeout = self.order_timeout_steps;
        let expired = |since: &mut Option<u64>| match since {
            None => {
                *since = Some(step);
                false
            }
            Some(s) => step.saturating_sub(*s) >= timeout,
        };
        for (id, o) in self.orders.iter_mut() {
            if let OrderState::AwaitingCredentials { since } = &mut o.state {
                if expired(since) {
                    return Err(ActorError::OrderTimeout(*id));
                }
            }
        }
        for (id, c) in self.stash.iter_mut() {
            if expired(&mut c.since) {
                return Err(ActorError::OrderTimeout(*id));
            }
        }
        Ok(())
    }

    fn on_abort(&mut self) {
        self.orders.clear();
        self.stash.clear();
        self.requests.clear();
        self.checks.clear();
        self.acks.clear();
        self.channels.reset_pending();
    }

    fn state_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u32(self.apps.len() as u32);
        for (id, app) in &self.apps {
            w.str(id).bytes(&app.sw).u64(app.current).u32(app.versions.len() as u32);
            for (v, bs) in &app.versions {
                w.u64(*v).bytes(bs);
            }
        }
        w.u32(self.customers_simple.len() as u32);
        for (id, apps) in &self.customers_simple {
            w.raw(id).u32(apps.len() as u32);
            for a in apps {
                w.str(a);
            }
        }
        w.u32(self.customers_advanced.len() as u32);
        for (nym, apps) in &self.customers_advanced {
            w.raw(nym).u32(apps.len() as u32);
            for a in apps {
                w.str(a);
            }
        }
        w.u32(self.orders.len() as u32);
        for (id, o) in &self.orders {
            w.u64(*id).str(&o.app_id);
        }
        w.u32(self.session_keys.len() as u32);
        for k in &self.session_keys {
            w.raw(k.as_bytes());
        }
        w.finish()
    }
}
