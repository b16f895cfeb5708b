// Licensed under the Apache-2.0 license

use std::collections::BTreeMap;

use super::{
    order_context, AckBook, Actor, ActorError, ActorEvent, ChannelTable, Message, Nonce16, Outbox, STORE, SWP,
};
use crate::crypto::SecureRng;
use crate::daa::Basename;
use crate::hap::{HapId, LoadReceipt, Scheme, StorageMedium};
use crate::wire::Writer;

#[derive(Debug, Clone)]
pub struct HostConfig {
    pub name: String,
    pub hap: String,
    pub user: String,
    pub id_hap: HapId,
    pub scheme: Scheme,
    pub basename: Basename,
    pub counter: u64,
}

#[derive(Debug, Clone)]
struct PendingPurchase {
    app_id: String,
    nonce: Nonce16,
    order_id: Option<u64>,
}

#[derive(Debug, Clone)]
struct PendingUpdate {
    app_id: String,
    nonce: Nonce16,
}

/// The untrusted end-user platform around the HAP.
#[derive(Debug)]
pub struct EuHostActor {
    cfg: HostConfig,
    pub(crate) medium: StorageMedium,
    pub(crate) installed: BTreeMap<String, Vec<u8>>,
    loaded: BTreeMap<String, u64>,
    purchase: Option<PendingPurchase>,
    updates: BTreeMap<u64, PendingUpdate>,
    next_ref: u64,
    acks: AckBook,
    channels: ChannelTable,
    rng: SecureRng,
}

impl EuHostActor {
    pub fn new(cfg: HostConfig, channels: ChannelTable, rng: SecureRng) -> Self {
        Self {
            cfg,
            medium: StorageMedium::default(),
            installed: BTreeMap::new(),
            loaded: BTreeMap::new(),
            purchase: None,
            updates: BTreeMap::new(),
            next_ref: 1,
            acks: AckBook::default(),
            channels,
            rng,
        }
    }

    pub fn config(&self) -> &HostConfig {
        &self.cfg
    }

    pub fn user(&self) -> &str {
        &self.cfg.user
    }

    pub(crate) fn set_user(&mut self, user: String) {
        self.cfg.user = user;
    }

    pub(crate) fn set_device_id(&mut self, id: HapId) {
        self.cfg.id_hap = id;
    }

    pub fn medium(&self) -> &StorageMedium {
        &self.medium
    }

    pub fn installed_sw(&self, app_id: &str) -> Option<&[u8]> {
        self.installed.get(app_id).map(Vec::as_slice)
    }

    /// Last version the HAP reported loading.
    pub fn loaded_version(&self, app_id: &str) -> Option<u64> {
        self.loaded.get(app_id).copied()
    }

    pub fn start_purchase(&mut self, app_id: &str, out: &mut Outbox) -> Result<(), ActorError> {
        let nonce = self.rng.array();
        self.purchase = Some(PendingPurchase {
            app_id: app_id.to_string(),
            nonce,
            order_id: None,
        });
        let msg = Message::Purchase {
            user: self.cfg.user.clone(),
            app_id: app_id.to_string(),
            nonce,
        };
        self.channels.send(STORE, msg, &mut self.rng, out)
    }

    /// Asks the SWP directly whether a newer version exists.
    pub fn start_update(&mut self, app_id: &str, out: &mut Outbox) -> Result<(), ActorError> {
        let ref_id = self.next_ref;
        self.next_ref += 1;
        let nonce = self.rng.array();
        self.updates.insert(
            ref_id,
            PendingUpdate {
                app_id: app_id.to_string(),
                nonce,
            },
        );
        let msg = Message::UpdateCheck {
            ref_id,
            app_id: app_id.to_string(),
            installed: self.loaded_version(app_id).unwrap_or(0),
            nonce,
        };
        self.channels.send(SWP, msg, &mut self.rng, out)
    }

    /// Starting an application triggers a HAP reconfiguration from the medium.
    pub fn run_app(&mut self, app_id: &str, out: &mut Outbox) -> Result<(), ActorError> {
        let envelope = self
            .medium
            .read(app_id)
            .ok_or_else(|| ActorError::NotInstalled(app_id.to_string()))?
            .to_vec();
        let hap = self.cfg.hap.clone();
        let msg = Message::LoadRequest {
            app_id: app_id.to_string(),
            envelope,
        };
        self.channels.send(&hap, msg, &mut self.rng, out)
    }

    fn install(
        &mut self,
        app_id: &str,
        sw: Option<Vec<u8>>,
        envelope: Vec<u8>,
        out: &mut Outbox,
    ) -> Result<(), ActorError> {
        self.medium.write(app_id, envelope);
        if let Some(sw) = sw {
            self.installed.insert(app_id.to_string(), sw);
        }
        self.run_app(app_id, out)
    }

    fn handle(&mut self, from: &str, msg: Message, out: &mut Outbox) -> Result<(), ActorError> {
        let hap = self.cfg.hap.clone();
        match msg {
            Message::OrderConfirmed {
                order_id,
                app_id,
                nonce,
            } if from == STORE => {
                let p = self.purchase.as_mut().ok_or(ActorError::UnknownOrder(order_id))?;
                if p.nonce != nonce || p.app_id != app_id || p.order_id.is_some() {
                    return Err(ActorError::AckMismatch);
                }
                p.order_id = Some(order_id);
                match self.cfg.scheme {
                    Scheme::Simple => {
                        let fresh = self.rng.array();
                        self.acks.expect(STORE, order_id, fresh);
                        let msg = Message::HapIdentity {
                            order_id,
                            id_hap: self.cfg.id_hap.0,
                            nonce: fresh,
                        };
                        self.channels.send(STORE, msg, &mut self.rng, out)
                    }
                    Scheme::Advanced => {
                        let msg = Message::AttestRequest {
                            basename: self.cfg.basename.0.clone().unwrap_or_default(),
                            counter: self.cfg.counter,
                            context: order_context(order_id),
                        };
                        self.channels.send(&hap, msg, &mut self.rng, out)
                    }
                }
            }
            Message::AttestResponse { public, signature } if from == hap => {
                let order_id =
                    self.purchase
                        .as_ref()
                        .and_then(|p| p.order_id)
                        .ok_or_else(|| ActorError::UnexpectedMessage {
                            label: "attest-response".into(),
                            from: from.to_string(),
                        })?;
                let fresh = self.rng.array();
                self.acks.expect(SWP, order_id, fresh);
                let msg = Message::Credentials {
                    order_id,
                    public,
                    signature,
                    nonce: fresh,
                };
                self.channels.send(SWP, msg, &mut self.rng, out)
            }
            Message::Package {
                order_id,
                app_id,
                sw,
                envelope,
                nonce,
            } if from == STORE => {
                match &self.purchase {
                    Some(p) if p.order_id == Some(order_id) && p.app_id == app_id => {}
                    _ => return Err(ActorError::UnknownOrder(order_id)),
                }
                self.purchase = None;
                self.channels
                    .send(STORE, Message::Ack { id: order_id, nonce }, &mut self.rng, out)?;
                self.install(&app_id, Some(sw), envelope, out)
            }
            Message::UpdateOffer {
                ref_id,
                app_id,
                latest,
                nonce,
            } if from == SWP => {
                match self.updates.get(&ref_id) {
                    Some(u) if u.nonce == nonce && u.app_id == app_id => {}
                    _ => return Err(ActorError::AckMismatch),
                }
                if latest <= self.loaded_version(&app_id).unwrap_or(0) {
                    self.updates.remove(&ref_id);
                    out.events.push(ActorEvent::UpToDate {
                        host: self.cfg.name.clone(),
                        app_id,
                    });
                    return Ok(());
                }
                let fresh = self.rng.array();
                self.updates.get_mut(&ref_id).expect("checked above").nonce = fresh;
                let msg = Message::UpdateRequest {
                    ref_id,
                    app_id,
                    id_hap: self.cfg.id_hap.0,
                    nonce: fresh,
                };
                self.channels.send(SWP, msg, &mut self.rng, out)
            }
            Message::UpdatePackage {
                ref_id,
                app_id,
                version: _,
                envelope,
                nonce,
            } if from == SWP => {
                match self.updates.remove(&ref_id) {
                    Some(u) if u.nonce == nonce && u.app_id == app_id => {}
                    _ => return Err(ActorError::AckMismatch),
                }
                self.channels
                    .send(SWP, Message::Ack { id: ref_id, nonce }, &mut self.rng, out)?;
                self.install(&app_id, None, envelope, out)
            }
            Message::LoadResult { receipt } if from == hap => {
                let receipt = LoadReceipt::decode(&receipt)?;
                self.loaded.insert(receipt.app_id.clone(), receipt.version);
                out.events.push(ActorEvent::AppLoaded {
                    host: self.cfg.name.clone(),
                    receipt,
                });
                Ok(())
            }
            Message::Ack { id, nonce } => self.acks.confirm(from, id, &nonce),
            other => Err(ActorError::unexpected(&other, from)),
        }
    }
}

impl Actor for EuHostActor {
    fn name(&self) -> &str {
        &self.cfg.name
    }

    fn on_packet(&mut self, from: &str, bytes: &[u8], out: &mut Outbox) -> Result<(), ActorError> {
        match self.channels.receive(from, bytes, &mut self.rng, out)? {
            Some(msg) => self.handle(from, msg, out),
            None => Ok(()),
        }
    }

    fn on_abort(&mut self) {
        self.purchase = None;
        self.updates.clear();
        self.acks.clear();
        self.channels.reset_pending();
    }

    fn state_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.str(&self.cfg.user).raw(&self.cfg.id_hap.0);
        w.u32(self.medium.records().len() as u32);
        for (app, env) in self.medium.records() {
            w.str(app).bytes(env);
        }
        w.u32(self.installed.len() as u32);
        for (app, sw) in &self.installed {
            w.str(app).bytes(sw);
        }
        w.u32(self.loaded.len() as u32);
        for (app, v) in &self.loaded {
            w.str(app).u64(*v);
        }
        w.finish()
    }
}
