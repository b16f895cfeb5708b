// Licensed under the Apache-2.0 license

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Actor, ActorError, ChannelTable, Message, Outbox, PG};
use crate::crypto::SecureRng;
use crate::wire::Writer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PaymentPolicy {
    #[default]
    ApproveAll,
    DeclineAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaymentDecision {
    Approved,
    Declined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaymentStatus {
    Authorized,
    Declined,
    Captured,
    Refunded,
}

impl PaymentStatus {
    fn code(self) -> u8 {
        match self {
            PaymentStatus::Authorized => 1,
            PaymentStatus::Declined => 2,
            PaymentStatus::Captured => 3,
            PaymentStatus::Refunded => 4,
        }
    }
}

#[derive(Debug)]
pub struct PaymentGatewayStub {
    policy: PaymentPolicy,
    ledger: BTreeMap<u64, (u64, PaymentStatus)>,
    channels: ChannelTable,
    rng: SecureRng,
}

/// Decides and records one charge.
pub fn pg_process(pg: &mut PaymentGatewayStub, order_id: u64, amount: u64) -> PaymentDecision {
    let decision = match pg.policy {
        PaymentPolicy::ApproveAll => PaymentDecision::Approved,
        PaymentPolicy::DeclineAll => PaymentDecision::Declined,
    };
    let status = match decision {
        PaymentDecision::Approved => PaymentStatus::Authorized,
        PaymentDecision::Declined => PaymentStatus::Declined,
    };
    pg.ledger.insert(order_id, (amount, status));
    decision
}

impl PaymentGatewayStub {
    pub fn new(policy: PaymentPolicy, channels: ChannelTable, rng: SecureRng) -> Self {
        Self {
            policy,
            ledger: BTreeMap::new(),
            channels,
            rng,
        }
    }

    pub fn status(&self, order_id: u64) -> Option<PaymentStatus> {
        self.ledger.get(&order_id).map(|(_, s)| *s)
    }

    pub fn approved_orders(&self) -> Vec<u64> {
        self.ledger
            .iter()
            .filter(|(_, (_, s))| matches!(s, PaymentStatus::Authorized | PaymentStatus::Captured))
            .map(|(id, _)| *id)
            .collect()
    }
}

impl Actor for PaymentGatewayStub {
    fn name(&self) -> &str {
        PG
    }

    fn on_packet(&mut self, from: &str, bytes: &[u8], out: &mut Outbox) -> Result<(), ActorError> {
        let Some(msg) = self.channels.receive(from, bytes, &mut self.rng, out)? else {
            return Ok(());
        };
        let reply = match msg {
            Message::ChargeRequest {
                order_id,
                amount,
                nonce,
            } => {
                let approved = pg_process(self, order_id, amount) == PaymentDecision::Approved;
                Message::PaymentResult {
                    order_id,
                    approved,
                    nonce,
                }
            }
            Message::Capture { order_id, nonce } => match self.ledger.get_mut(&order_id) {
                Some((_, s @ PaymentStatus::Authorized)) => {
                    *s = PaymentStatus::Captured;
                    Message::Captured { order_id, nonce }
                }
                _ => return Err(ActorError::UnknownOrder(order_id)),
            },
            other => return Err(ActorError::unexpected(&other, from)),
        };
        self.channels.send(from, reply, &mut self.rng, out)
    }

    /// Authorized but uncaptured payments are refunded.
    fn on_abort(&mut self) {
        for (_, s) in self.ledger.values_mut() {
            if *s == PaymentStatus::Authorized {
                *s = PaymentStatus::Refunded;
            }
        }
        self.channels.reset_pending();
    }

    fn state_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u32(self.ledger.len() as u32);
        for (id, (amount, s)) in &self.ledger {
            w.u64(*id).u64(*amount).u8(s.code());
        }
        w.finish()
    }
}
