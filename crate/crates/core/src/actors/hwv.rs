// Licensed under the Apache-2.0 license

use std::sync::Arc;

use super::{Actor, ActorError, ChannelTable, Message, Outbox, HWV};
use crate::crypto::SecureRng;
use crate::daa::{g1_from_bytes, BaseSpec, IssuerService};
use crate::hap::{EncryptedBitstreamEnvelope, HapId, HwvRegistry};
use crate::wire::{WireError, Writer};

/// Hardware vendor: device registry, envelope service and DAA issuer.
#[derive(Debug)]
pub struct HwvActor {
    registry: Arc<HwvRegistry>,
    issuer: Arc<IssuerService>,
    /// Every application message received, in plaintext, for need-to-know audits.
    inbox: Vec<(String, Vec<u8>)>,
    channels: ChannelTable,
    rng: SecureRng,
}

impl HwvActor {
    pub fn new(registry: Arc<HwvRegistry>, issuer: Arc<IssuerService>, channels: ChannelTable, rng: SecureRng) -> Self {
        Self {
            registry,
            issuer,
            inbox: Vec::new(),
            channels,
            rng,
        }
    }

    pub fn inbox(&self) -> &[(String, Vec<u8>)] {
        &self.inbox
    }

    pub fn clear_inbox(&mut self) {
        self.inbox.clear();
    }
}

/// Answers whether a pseudonym traces to a rogue-listed secret.
pub fn hwv_rogue_service(issuer: &IssuerService, pseudonym: &[u8; 48], base: &[u8]) -> Result<bool, ActorError> {
    let k = g1_from_bytes(pseudonym).ok_or(WireError::Invalid("pseudonym not on curve"))?;
    let base = BaseSpec::decode(base)?;
    Ok(issuer.rogue_query(&k, &base))
}

impl Actor for HwvActor {
    fn name(&self) -> &str {
        HWV
    }

    fn on_packet(&mut self, from: &str, bytes: &[u8], out: &mut Outbox) -> Result<(), ActorError> {
        let Some(msg) = self.channels.receive(from, bytes, &mut self.rng, out)? else {
            return Ok(());
        };
        self.inbox.push((from.to_string(), msg.encode()));
        let reply = match msg {
            Message::EncryptRequest {
                request_id,
                app_id,
                version,
                id_hap,
                bitstream,
                nonce,
            } => {
                let k_hap = self.registry.k_hap(&HapId(id_hap)).ok_or(ActorError::UnknownDevice)?;
                let env = EncryptedBitstreamEnvelope::seal_simple(&k_hap, &app_id, version, &bitstream, &mut self.rng);
                Message::EncryptedBitstream {
                    request_id,
                    envelope: env.encode(),
                    nonce,
                }
            }
            Message::RogueQuery {
                query_id,
                pseudonym,
                base,
                nonce,
            } => Message::RogueAnswer {
                query_id,
                rogue: hwv_rogue_service(&self.issuer, &pseudonym, &base)?,
                nonce,
            },
            other => return Err(ActorError::unexpected(&other, from)),
        };
        self.channels.send(from, reply, &mut self.rng, out)
    }

    fn on_abort(&mut self) {
        self.channels.reset_pending();
    }

    fn state_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u32(self.inbox.len() as u32);
        for (from, m) in &self.inbox {
            w.str(from).bytes(m);
        }
        w.finish()
    }
}
