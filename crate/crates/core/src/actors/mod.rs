// Licensed under the Apache-2.0 license

//! Protocol participants as single-threaded state machines driven by the bus.

mod hap_actor;
mod host;
mod hwv;
pub mod messages;
mod pg;
mod store;
mod swp;

use std::collections::{BTreeMap, BTreeSet};

pub use hap_actor::HapActor;
pub use host::{EuHostActor, HostConfig};
pub use hwv::{hwv_rogue_service, HwvActor};
pub use messages::{Message, Nonce16};
pub use pg::{pg_process, PaymentDecision, PaymentGatewayStub, PaymentPolicy, PaymentStatus};
pub use store::{Listing, StoreActor};
pub use swp::{AppRecord, SwpActor};

use crate::channel::{ChannelError, ChannelState, InitiatorHandshake, Packet, PeerIdentity, ResponderHandshake};
use crate::crypto::{hash_parts, Digest, SecureRng, SymKey};
use crate::hap::{HapError, LoadReceipt};
use crate::wire::WireError;

pub const STORE: &str = "STORE";
pub const SWP: &str = "SWP";
pub const HWV: &str = "HWV";
pub const PG: &str = "PG";
/// Sink endpoint that only exists when the planted-leak fault is enabled.
pub const DEBUG_SINK: &str = "DEBUG";

pub fn host_name(i: usize) -> String {
    format!("EU{i}")
}

pub fn hap_name(i: usize) -> String {
    format!("HAP{i}")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ActorError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Hap(#[from] HapError),
    #[error("malformed message: {0}")]
    Malformed(#[from] WireError),
    #[error("unexpected {label} from {from}")]
    UnexpectedMessage { label: String, from: String },
    #[error("no pre-shared key for {0}")]
    NoPsk(String),
    #[error("payment declined for order {0}")]
    PaymentDeclined(u64),
    #[error("unknown order {0}")]
    UnknownOrder(u64),
    #[error("unknown app {0:?}")]
    UnknownApp(String),
    #[error("unknown account {0:?}")]
    UnknownAccount(String),
    #[error("device not in registry")]
    UnknownDevice,
    #[error("not a customer for {0:?}")]
    NotACustomer(String),
    #[error("attestation does not verify")]
    AttestationInvalid,
    #[error("attesting device is marked rogue")]
    AttestationRogue,
    #[error("acknowledgment does not match an outstanding request")]
    AckMismatch,
    #[error("order {0} timed out")]
    OrderTimeout(u64),
    #[error("app {0:?} not installed")]
    NotInstalled(String),
}

impl ActorError {
    /// Stable error name used in transcripts and verdicts.
    pub fn kind(&self) -> String {
        let s = match self {
            ActorError::Channel(e) => match e {
                ChannelError::AuthenticationFailure => "AuthenticationFailure",
                ChannelError::ReplayDetected { .. } => "ReplayDetected",
                ChannelError::SequenceGap { .. } => "SequenceGap",
                ChannelError::ChannelNotEstablished => "ChannelNotEstablished",
                ChannelError::UnexpectedPeer(_) => "UnexpectedPeer",
                ChannelError::Wire(_) => "Malformed",
            },
            ActorError::Hap(e) => match e {
                HapError::DuplicateSerial(_) => "DuplicateSerial",
                HapError::AuthenticationFailure => "AuthenticationFailure",
                HapError::DecryptionFailure => "DecryptionFailure",
                HapError::DowngradeRejected { .. } => "DowngradeRejected",
                HapError::SchemeMismatch => "SchemeMismatch",
                HapError::NotJoined(_) => "NotJoined",
                HapError::NoKeypair => "NoKeypair",
                HapError::Malformed(_) => "Malformed",
                HapError::Daa(_) => "DaaError",
            },
            ActorError::Malformed(_) => "Malformed",
            ActorError::UnexpectedMessage { .. } => "UnexpectedMessage",
            ActorError::NoPsk(_) => "NoPsk",
            ActorError::PaymentDeclined(_) => "PaymentDeclined",
            ActorError::UnknownOrder(_) => "UnknownOrder",
            ActorError::UnknownApp(_) => "UnknownApp",
            ActorError::UnknownAccount(_) => "UnknownAccount",
            ActorError::UnknownDevice => "UnknownDevice",
            ActorError::NotACustomer(_) => "NotACustomer",
            ActorError::AttestationInvalid => "AttestationInvalid",
            ActorError::AttestationRogue => "AttestationRogue",
            ActorError::AckMismatch => "AckMismatch",
            ActorError::OrderTimeout(_) => "OrderTimeout",
            ActorError::NotInstalled(_) => "NotInstalled",
        };
        s.to_string()
    }

    pub(crate) fn unexpected(msg: &Message, from: &str) -> Self {
        ActorError::UnexpectedMessage {
            label: msg.label().to_string(),
            from: from.to_string(),
        }
    }
}

/// Things the orchestrator needs to know that are not bus traffic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActorEvent {
    AppLoaded { host: String, receipt: LoadReceipt },
    UpToDate { host: String, app_id: String },
}

#[derive(Debug, Default)]
pub struct Outbox {
    pub sends: Vec<(String, String, Vec<u8>)>,
    pub events: Vec<ActorEvent>,
}

impl Outbox {
    pub fn push(&mut self, dst: &str, label: &str, bytes: Vec<u8>) {
        self.sends.push((dst.to_string(), label.to_string(), bytes));
    }
}

pub trait Actor {
    fn name(&self) -> &str;
    fn on_packet(&mut self, from: &str, bytes: &[u8], out: &mut Outbox) -> Result<(), ActorError>;
    /// Called when the bus is idle.
    fn on_tick(&mut self, _step: u64, _out: &mut Outbox) -> Result<(), ActorError> {
        Ok(())
    }
    /// Release per-order state after a protocol abort.
    fn on_abort(&mut self) {}
    fn state_bytes(&self) -> Vec<u8>;
}

/// Per-actor view of its secure channels, keyed by peer endpoint.
pub struct ChannelTable {
    me: String,
    psks: BTreeMap<String, SymKey>,
    local_peer: Option<String>,
    established: BTreeMap<String, ChannelState>,
    initiating: BTreeMap<String, InitiatorHandshake>,
    responding: BTreeMap<String, ResponderHandshake>,
    queued: BTreeMap<String, Vec<Message>>,
    seen_handshakes: BTreeSet<Digest>,
}

impl std::fmt::Debug for ChannelTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChannelTable")
            .field("me", &self.me)
            .field("established", &self.established.keys().collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

impl ChannelTable {
    pub fn new(me: &str) -> Self {
        Self {
            me: me.to_string(),
            psks: BTreeMap::new(),
            local_peer: None,
            established: BTreeMap::new(),
            initiating: BTreeMap::new(),
            responding: BTreeMap::new(),
            queued: BTreeMap::new(),
            seen_handshakes: BTreeSet::new(),
        }
    }

    pub fn add_psk(&mut self, peer: &str, psk: SymKey) {
        self.psks.insert(peer.to_string(), psk);
    }

    /// The host-to-HAP link carries unprotected plain packets.
    pub fn set_local_peer(&mut self, peer: &str) {
        self.local_peer = Some(peer.to_string());
    }

    pub fn is_established(&self, peer: &str) -> bool {
        self.established.contains_key(peer)
    }

    pub fn peers(&self) -> impl Iterator<Item = &String> {
        self.psks.keys()
    }

    pub fn send(&mut self, dst: &str, msg: Message, rng: &mut SecureRng, out: &mut Outbox) -> Result<(), ActorError> {
        if self.local_peer.as_deref() == Some(dst) {
            out.push(dst, msg.label(), Packet::Plain(msg.encode()).encode());
            return Ok(());
        }
        if let Some(ch) = self.established.get_mut(dst) {
            let frame = ch.send(&msg.encode(), rng)?;
            out.push(dst, msg.label(), Packet::Data(frame).encode());
            return Ok(());
        }
        self.queued.entry(dst.to_string()).or_default().push(msg);
        if !self.initiating.contains_key(dst) && !self.responding.contains_key(dst) {
            let psk = self
                .psks
                .get(dst)
                .ok_or_else(|| ActorError::NoPsk(dst.to_string()))?
                .clone();
            let (hs, init) = InitiatorHandshake::start(&self.me, &PeerIdentity::new(dst, psk), rng);
            self.initiating.insert(dst.to_string(), hs);
            out.push(dst, "hs-init", Packet::HandshakeInit(init).encode());
        }
        Ok(())
    }

    /// Handles one inbound packet; returns an application message if it carried one.
    pub fn receive(
        &mut self,
        from: &str,
        bytes: &[u8],
        rng: &mut SecureRng,
        out: &mut Outbox,
    ) -> Result<Option<Message>, ActorError> {
        let packet = Packet::decode(bytes)?;
        if matches!(
            packet,
            Packet::HandshakeInit(_) | Packet::HandshakeResponse(_) | Packet::HandshakeFinish(_)
        ) && !self.seen_handshakes.insert(hash_parts(&[from.as_bytes(), bytes]))
        {
            return Err(ChannelError::ReplayDetected { seq: 0, last: 0 }.into());
        }
        match packet {
            Packet::HandshakeInit(init) => {
                let psk = self
                    .psks
                    .get(from)
                    .ok_or_else(|| ChannelError::UnexpectedPeer(from.to_string()))?
                    .clone();
                if self.initiating.contains_key(from) {
                    // Simultaneous open: the lexicographically smaller name stays initiator.
                    if self.me.as_str() < from {
                        return Ok(None);
                    }
                    self.initiating.remove(from);
                }
                let (hs, resp) = ResponderHandshake::accept(&self.me, &PeerIdentity::new(from, psk), &init, rng)?;
                self.responding.insert(from.to_string(), hs);
                out.push(from, "hs-resp", Packet::HandshakeResponse(resp).encode());
                Ok(None)
            }
            Packet::HandshakeResponse(resp) => {
                let hs = self
                    .initiating
                    .remove(from)
                    .ok_or_else(|| ActorError::UnexpectedMessage {
                        label: "hs-resp".into(),
                        from: from.to_string(),
                    })?;
                let (state, fin) = hs.on_response(&resp)?;
                out.push(from, "hs-fin", Packet::HandshakeFinish(fin).encode());
                self.established.insert(from.to_string(), state);
                self.flush(from, rng, out)?;
                Ok(None)
            }
            Packet::HandshakeFinish(fin) => {
                let hs = self
                    .responding
                    .remove(from)
                    .ok_or_else(|| ActorError::UnexpectedMessage {
                        label: "hs-fin".into(),
                        from: from.to_string(),
                    })?;
                let state = hs.on_finish(&fin)?;
                self.established.insert(from.to_string(), state);
                self.flush(from, rng, out)?;
                Ok(None)
            }
            Packet::Data(frame) => {
                let ch = self
                    .established
                    .get_mut(from)
                    .ok_or(ChannelError::ChannelNotEstablished)?;
                let plain = ch.recv(&frame)?;
                Ok(Some(Message::decode(&plain)?))
            }
            Packet::Plain(body) => {
                if self.local_peer.as_deref() != Some(from) {
                    return Err(ActorError::UnexpectedMessage {
                        label: "plain".into(),
                        from: from.to_string(),
                    });
                }
                Ok(Some(Message::decode(&body)?))
            }
        }
    }

    fn flush(&mut self, peer: &str, rng: &mut SecureRng, out: &mut Outbox) -> Result<(), ActorError> {
        for msg in self.queued.remove(peer).unwrap_or_default() {
            self.send(peer, msg, rng, out)?;
        }
        Ok(())
    }

    /// Drops half-open handshakes and queued messages.
    pub fn reset_pending(&mut self) {
        self.initiating.clear();
        self.responding.clear();
        self.queued.clear();
    }
}

/// Outstanding requests awaiting an ack that echoes `(id, nonce)`.
#[derive(Debug, Default)]
pub struct AckBook {
    outstanding: BTreeMap<(String, u64), Nonce16>,
}

impl AckBook {
    pub fn expect(&mut self, peer: &str, id: u64, nonce: Nonce16) {
        self.outstanding.insert((peer.to_string(), id), nonce);
    }

    pub fn confirm(&mut self, peer: &str, id: u64, nonce: &Nonce16) -> Result<(), ActorError> {
        match self.outstanding.remove(&(peer.to_string(), id)) {
            Some(n) if &n == nonce => Ok(()),
            _ => Err(ActorError::AckMismatch),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.outstanding.is_empty()
    }

    pub fn clear(&mut self) {
        self.outstanding.clear();
    }
}

/// Context string the EU binds into its key attestation for an order.
pub fn order_context(order_id: u64) -> Vec<u8> {
    let mut ctx = b"softip/order/".to_vec();
    ctx.extend_from_slice(&order_id.to_be_bytes());
    ctx
}

#[cfg(test)]
mod tests;
