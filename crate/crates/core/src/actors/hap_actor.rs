// Licensed under the Apache-2.0 license

use super::{Actor, ActorError, ChannelTable, Message, Outbox};
use crate::crypto::SecureRng;
use crate::daa::Basename;
use crate::hap::HapDevice;
use crate::wire::Writer;

/// Bus endpoint for the trusted HAP; reachable only from its own host.
#[derive(Debug)]
pub struct HapActor {
    name: String,
    host: String,
    device: HapDevice,
    channels: ChannelTable,
    rng: SecureRng,
}

impl HapActor {
    pub fn new(name: &str, host: &str, device: HapDevice, rng: SecureRng) -> Self {
        let mut channels = ChannelTable::new(name);
        channels.set_local_peer(host);
        Self {
            name: name.to_string(),
            host: host.to_string(),
            device,
            channels,
            rng,
        }
    }

    pub fn device(&self) -> &HapDevice {
        &self.device
    }

    pub fn device_mut(&mut self) -> &mut HapDevice {
        &mut self.device
    }
}

impl Actor for HapActor {
    fn name(&self) -> &str {
        &self.name
    }

    fn on_packet(&mut self, from: &str, bytes: &[u8], out: &mut Outbox) -> Result<(), ActorError> {
        let Some(msg) = self.channels.receive(from, bytes, &mut self.rng, out)? else {
            return Ok(());
        };
        let reply = match msg {
            Message::LoadRequest { app_id: _, envelope } => {
                let receipt = self.device.load(&envelope)?;
                Message::LoadResult {
                    receipt: receipt.encode(),
                }
            }
            Message::AttestRequest {
                basename,
                counter,
                context,
            } => {
                let basename = if basename.is_empty() {
                    Basename::none()
                } else {
                    Basename::named(basename)
                };
                let att = self.device.attest_keypair(&basename, counter, &context)?;
                Message::AttestResponse {
                    public: att.public.0,
                    signature: att.signature.encode(),
                }
            }
            other => return Err(ActorError::unexpected(&other, from)),
        };
        let host = self.host.clone();
        self.channels.send(&host, reply, &mut self.rng, out)
    }

    /// Public information only: identity, installed versions, loaded digest.
    fn state_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.device.id().0);
        w.u32(self.device.installed_versions().len() as u32);
        for (app, v) in self.device.installed_versions() {
            w.str(app).u64(*v);
        }
        match self.device.fpga_digest() {
            Some(d) => w.bool(true).raw(&d.0),
            None => w.bool(false),
        };
        w.finish()
    }
}
