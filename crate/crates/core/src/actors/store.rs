// Licensed under the Apache-2.0 license

use std::collections::BTreeMap;

use super::{AckBook, Actor, ActorError, ChannelTable, Message, Nonce16, Outbox, PG, STORE};
use crate::crypto::SecureRng;
use crate::hap::Scheme;
use crate::wire::Writer;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Listing {
    pub swp: String,
    pub price: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Charging,
    /// Advanced: waiting for the SWP to acknowledge the new customer.
    NotifyingSwp,
    Confirmed,
    Forwarded,
    Capturing,
    Published,
    Done,
}

#[derive(Debug, Clone)]
struct Order {
    user: String,
    host: String,
    app_id: String,
    purchase_nonce: Nonce16,
    pending_nonce: Nonce16,
    stage: Stage,
    package: Option<(Vec<u8>, Vec<u8>)>,
}

#[derive(Debug)]
pub struct StoreActor {
    scheme: Scheme,
    catalog: BTreeMap<String, Listing>,
    accounts: BTreeMap<String, String>,
    pending: BTreeMap<u64, Order>,
    published: BTreeMap<(String, String), (Vec<u8>, Vec<u8>)>,
    next_order: u64,
    acks: AckBook,
    channels: ChannelTable,
    rng: SecureRng,
}

impl StoreActor {
    pub fn new(scheme: Scheme, channels: ChannelTable, rng: SecureRng) -> Self {
        Self {
            scheme,
            catalog: BTreeMap::new(),
            accounts: BTreeMap::new(),
            pending: BTreeMap::new(),
            published: BTreeMap::new(),
            next_order: 1,
            acks: AckBook::default(),
            channels,
            rng,
        }
    }

    pub fn list(&mut self, app_id: &str, listing: Listing) {
        self.catalog.insert(app_id.to_string(), listing);
    }

    /// Registers a user account reachable at `host` endpoint.
    pub fn open_account(&mut self, user: &str, host: &str) {
        self.accounts.insert(user.to_string(), host.to_string());
    }

    pub fn published(&self, user: &str, app_id: &str) -> Option<&(Vec<u8>, Vec<u8>)> {
        self.published.get(&(user.to_string(), app_id.to_string()))
    }

    pub fn open_orders(&self) -> usize {
        self.pending.values().filter(|o| o.stage != Stage::Done).count()
    }

    fn order(&mut self, order_id: u64, want: &[Stage]) -> Result<&mut Order, ActorError> {
        match self.pending.get_mut(&order_id) {
            Some(o) if want.contains(&o.stage) => Ok(o),
            _ => Err(ActorError::UnknownOrder(order_id)),
        }
    }

    fn publish(&mut self, order_id: u64, out: &mut Outbox) -> Result<(), ActorError> {
        let nonce = self.rng.array();
        let order = self.order(order_id, &[Stage::Forwarded, Stage::Confirmed, Stage::Capturing])?;
        let (sw, envelope) = order.package.take().ok_or(ActorError::UnknownOrder(order_id))?;
        order.stage = Stage::Published;
        let (user, host, app_id) = (order.user.clone(), order.host.clone(), order.app_id.clone());
        self.published
            .insert((user, app_id.clone()), (sw.clone(), envelope.clone()));
        self.acks.expect(&host, order_id, nonce);
        let msg = Message::Package {
            order_id,
            app_id,
            sw,
            envelope,
            nonce,
        };
        self.channels.send(&host, msg, &mut self.rng, out)
    }

    fn handle(&mut self, from: &str, msg: Message, out: &mut Outbox) -> Result<(), ActorError> {
        match msg {
            Message::Purchase { user, app_id, nonce } => {
                if self.accounts.get(&user).map(String::as_str) != Some(from) {
                    return Err(ActorError::UnknownAccount(user));
                }
                let price = self
                    .catalog
                    .get(&app_id)
                    .ok_or_else(|| ActorError::UnknownApp(app_id.clone()))?
                    .price;
                let order_id = self.next_order;
                self.next_order += 1;
                let charge_nonce = self.rng.array();
                self.pending.insert(
                    order_id,
                    Order {
                        user,
                        host: from.to_string(),
                        app_id,
                        purchase_nonce: nonce,
                        pending_nonce: charge_nonce,
                        stage: Stage::Charging,
                        package: None,
                    },
                );
                let charge = Message::ChargeRequest {
                    order_id,
                    amount: price,
                    nonce: charge_nonce,
                };
                self.channels.send(PG, charge, &mut self.rng, out)
            }
            Message::PaymentResult {
                order_id,
                approved,
                nonce,
            } if from == PG => {
                let scheme = self.scheme;
                let fresh = self.rng.array();
                let order = self.order(order_id, &[Stage::Charging])?;
                if order.pending_nonce != nonce {
                    return Err(ActorError::AckMismatch);
                }
                if !approved {
                    return Err(ActorError::PaymentDeclined(order_id));
                }
                let app_id = order.app_id.clone();
                if scheme == Scheme::Advanced {
                    order.stage = Stage::NotifyingSwp;
                    let swp = self.catalog[&app_id].swp.clone();
                    self.acks.expect(&swp, order_id, fresh);
                    let notify = Message::NewCustomer {
                        order_id,
                        app_id,
                        nonce: fresh,
                    };
                    self.channels.send(&swp, notify, &mut self.rng, out)
                } else {
                    self.confirm(order_id, out)
                }
            }
            Message::Ack { id, nonce } => {
                self.acks.confirm(from, id, &nonce)?;
                match self.pending.get_mut(&id) {
                    Some(o) if o.stage == Stage::NotifyingSwp => self.confirm(id, out),
                    Some(o) if o.stage == Stage::Published && o.host == from => {
                        o.stage = Stage::Done;
                        Ok(())
                    }
                    _ => Ok(()),
                }
            }
            Message::HapIdentity {
                order_id,
                id_hap,
                nonce,
            } if self.scheme == Scheme::Simple => {
                let fresh = self.rng.array();
                let order = self.order(order_id, &[Stage::Confirmed])?;
                if order.host != from {
                    return Err(ActorError::UnknownOrder(order_id));
                }
                order.stage = Stage::Forwarded;
                let app_id = order.app_id.clone();
                self.channels
                    .send(from, Message::Ack { id: order_id, nonce }, &mut self.rng, out)?;
                let swp = self.catalog[&app_id].swp.clone();
                self.acks.expect(&swp, order_id, fresh);
                let fwd = Message::ForwardCustomer {
                    order_id,
                    app_id,
                    id_hap,
                    nonce: fresh,
                };
                self.channels.send(&swp, fwd, &mut self.rng, out)
            }
            Message::DeliverEnvelope {
                order_id,
                sw,
                envelope,
                nonce,
            } => {
                let scheme = self.scheme;
                let capture_nonce = self.rng.array();
                let want = if scheme == Scheme::Simple {
                    Stage::Forwarded
                } else {
                    Stage::Confirmed
                };
                let app_id = self.order(order_id, &[want])?.app_id.clone();
                if self.catalog.get(&app_id).map(|l| l.swp.as_str()) != Some(from) {
                    return Err(ActorError::UnknownOrder(order_id));
                }
                let order = self.order(order_id, &[want])?;
                order.package = Some((sw, envelope));
                if scheme == Scheme::Advanced {
                    order.stage = Stage::Capturing;
                    order.pending_nonce = capture_nonce;
                }
                self.channels
                    .send(from, Message::Ack { id: order_id, nonce }, &mut self.rng, out)?;
                if scheme == Scheme::Advanced {
                    let capture = Message::Capture {
                        order_id,
                        nonce: capture_nonce,
                    };
                    self.channels.send(PG, capture, &mut self.rng, out)
                } else {
                    self.publish(order_id, out)
                }
            }
            Message::Captured { order_id, nonce } if from == PG => {
                let order = self.order(order_id, &[Stage::Capturing])?;
                if order.pending_nonce != nonce {
                    return Err(ActorError::AckMismatch);
                }
                self.publish(order_id, out)
            }
            other => Err(ActorError::unexpected(&other, from)),
        }
    }

    fn confirm(&mut self, order_id: u64, out: &mut Outbox) -> Result<(), ActorError> {
        let order = self.order(order_id, &[Stage::Charging, Stage::NotifyingSwp])?;
        order.stage = Stage::Confirmed;
        let msg = Message::OrderConfirmed {
            order_id,
            app_id: order.app_id.clone(),
            nonce: order.purchase_nonce,
        };
        let host = order.host.clone();
        self.channels.send(&host, msg, &mut self.rng, out)
    }
}

impl Actor for StoreActor {
    fn name(&self) -> &str {
        STORE
    }

    fn on_packet(&mut self, from: &str, bytes: &[u8], out: &mut Outbox) -> Result<(), ActorError> {
        match self.channels.receive(from, bytes, &mut self.rng, out)? {
            Some(msg) => self.handle(from, msg, out),
            None => Ok(()),
        }
    }

    fn on_abort(&mut self) {
        self.pending.clear();
        self.acks.clear();
        self.channels.reset_pending();
    }

    fn state_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u32(self.catalog.len() as u32);
        for (app, l) in &self.catalog {
            w.str(app).str(&l.swp).u64(l.price);
        }
        w.u32(self.accounts.len() as u32);
        for (user, host) in &self.accounts {
            w.str(user).str(host);
        }
        w.u32(self.pending.len() as u32);
        for (id, o) in &self.pending {
            w.u64(*id).str(&o.user).str(&o.app_id).u8(o.stage as u8);
        }
        w.u32(self.published.len() as u32);
        for ((user, app), (sw, env)) in &self.published {
            w.str(user).str(app).bytes(sw).bytes(env);
        }
        w.finish()
    }
}
