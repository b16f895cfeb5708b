// Licensed under the Apache-2.0 license

//! Protocol message schemas. Each record is a 1-byte type tag followed by
//! length-prefixed fields; integers are big-endian.

use crate::wire::{Reader, WireError, Writer};

pub type Nonce16 = [u8; 16];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Purchase {
        user: String,
        app_id: String,
        nonce: Nonce16,
    },
    ChargeRequest {
        order_id: u64,
        amount: u64,
        nonce: Nonce16,
    },
    PaymentResult {
        order_id: u64,
        approved: bool,
        nonce: Nonce16,
    },
    /// Echoes the purchase nonce.
    OrderConfirmed {
        order_id: u64,
        app_id: String,
        nonce: Nonce16,
    },
    HapIdentity {
        order_id: u64,
        id_hap: [u8; 16],
        nonce: Nonce16,
    },
    ForwardCustomer {
        order_id: u64,
        app_id: String,
        id_hap: [u8; 16],
        nonce: Nonce16,
    },
    EncryptRequest {
        request_id: u64,
        app_id: String,
        version: u64,
        id_hap: [u8; 16],
        bitstream: Vec<u8>,
        nonce: Nonce16,
    },
    EncryptedBitstream {
        request_id: u64,
        envelope: Vec<u8>,
        nonce: Nonce16,
    },
    DeliverEnvelope {
        order_id: u64,
        sw: Vec<u8>,
        envelope: Vec<u8>,
        nonce: Nonce16,
    },
    Package {
        order_id: u64,
        app_id: String,
        sw: Vec<u8>,
        envelope: Vec<u8>,
        nonce: Nonce16,
    },
    NewCustomer {
        order_id: u64,
        app_id: String,
        nonce: Nonce16,
    },
    Credentials {
        order_id: u64,
        public: [u8; 32],
        signature: Vec<u8>,
        nonce: Nonce16,
    },
    RogueQuery {
        query_id: u64,
        pseudonym: [u8; 48],
        base: Vec<u8>,
        nonce: Nonce16,
    },
    RogueAnswer {
        query_id: u64,
        rogue: bool,
        nonce: Nonce16,
    },
    Capture {
        order_id: u64,
        nonce: Nonce16,
    },
    Captured {
        order_id: u64,
        nonce: Nonce16,
    },
    UpdateCheck {
        ref_id: u64,
        app_id: String,
        installed: u64,
        nonce: Nonce16,
    },
    UpdateOffer {
        ref_id: u64,
        app_id: String,
        latest: u64,
        nonce: Nonce16,
    },
    UpdateRequest {
        ref_id: u64,
        app_id: String,
        id_hap: [u8; 16],
        nonce: Nonce16,
    },
    UpdatePackage {
        ref_id: u64,
        app_id: String,
        version: u64,
        envelope: Vec<u8>,
        nonce: Nonce16,
    },
    Ack {
        id: u64,
        nonce: Nonce16,
    },
    LoadRequest {
        app_id: String,
        envelope: Vec<u8>,
    },
    LoadResult {
        receipt: Vec<u8>,
    },
    AttestRequest {
        basename: Vec<u8>,
        counter: u64,
        context: Vec<u8>,
    },
    AttestResponse {
        public: [u8; 32],
        signature: Vec<u8>,
    },
    /// Only emitted by the planted-leak fault.
    DebugLeak {
        bytes: Vec<u8>,
    },
}

impl Message {
    pub fn tag(&self) -> u8 {
        match self {
            Message::Purchase { .. } => 0x20,
            Message::ChargeRequest { .. } => 0x21,
            Message::PaymentResult { .. } => 0x22,
            Message::OrderConfirmed { .. } => 0x23,
            Message::HapIdentity { .. } => 0x25,
            Message::ForwardCustomer { .. } => 0x26,
            Message::EncryptRequest { .. } => 0x27,
            Message::EncryptedBitstream { .. } => 0x28,
            Message::DeliverEnvelope { .. } => 0x29,
            Message::Package { .. } => 0x2a,
            Message::NewCustomer { .. } => 0x2b,
            Message::Credentials { .. } => 0x2c,
            Message::RogueQuery { .. } => 0x2d,
            Message::RogueAnswer { .. } => 0x2e,
            Message::Capture { .. } => 0x2f,
            Message::Captured { .. } => 0x30,
            Message::UpdateCheck { .. } => 0x31,
            Message::UpdateOffer { .. } => 0x32,
            Message::UpdateRequest { .. } => 0x33,
            Message::UpdatePackage { .. } => 0x34,
            Message::Ack { .. } => 0x3f,
            Message::LoadRequest { .. } => 0x40,
            Message::LoadResult { .. } => 0x41,
            Message::AttestRequest { .. } => 0x42,
            Message::AttestResponse { .. } => 0x43,
            Message::DebugLeak { .. } => 0x7f,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Message::Purchase { .. } => "purchase",
            Message::ChargeRequest { .. } => "charge-request",
            Message::PaymentResult { .. } => "payment-result",
            Message::OrderConfirmed { .. } => "order-confirmed",
            Message::HapIdentity { .. } => "hap-identity",
            Message::ForwardCustomer { .. } => "forward-customer",
            Message::EncryptRequest { .. } => "encrypt-request",
            Message::EncryptedBitstream { .. } => "encrypted-bitstream",
            Message::DeliverEnvelope { .. } => "deliver-envelope",
            Message::Package { .. } => "package",
            Message::NewCustomer { .. } => "new-customer",
            Message::Credentials { .. } => "credentials",
            Message::RogueQuery { .. } => "rogue-query",
            Message::RogueAnswer { .. } => "rogue-answer",
            Message::Capture { .. } => "capture",
            Message::Captured { .. } => "captured",
            Message::UpdateCheck { .. } => "update-check",
            Message::UpdateOffer { .. } => "update-offer",
            Message::UpdateRequest { .. } => "update-request",
            Message::UpdatePackage { .. } => "update-package",
            Message::Ack { .. } => "ack",
            Message::LoadRequest { .. } => "load-request",
            Message::LoadResult { .. } => "load-result",
            Message::AttestRequest { .. } => "attest-request",
            Message::AttestResponse { .. } => "attest-response",
            Message::DebugLeak { .. } => "debug-leak",
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(self.tag());
        match self {
            Message::Purchase { user, app_id, nonce } => {
                w.str(user).str(app_id).raw(nonce);
            }
            Message::ChargeRequest {
                order_id,
                amount,
                nonce,
            } => {
                w.u64(*order_id).u64(*amount).raw(nonce);
            }
            Message::PaymentResult {
                order_id,
                approved,
                nonce,
            } => {
                w.u64(*order_id).bool(*approved).raw(nonce);
            }
            Message::OrderConfirmed {
                order_id,
                app_id,
                nonce,
            } => {
                w.u64(*order_id).str(app_id).raw(nonce);
            }
            Message::HapIdentity {
                order_id,
                id_hap,
                nonce,
            } => {
                w.u64(*order_id).raw(id_hap).raw(nonce);
            }
            Message::ForwardCustomer {
                order_id,
                app_id,
                id_hap,
                nonce,
            } => {
                w.u64(*order_id).str(app_id).raw(id_hap).raw(nonce);
            }
            Message::EncryptRequest {
                request_id,
                app_id,
                version,
                id_hap,
                bitstream,
                nonce,
            } => {
                w.u64(*request_id)
                    .str(app_id)
                    .u64(*version)
                    .raw(id_hap)
                    .bytes(bitstream)
                    .raw(nonce);
            }
            Message::EncryptedBitstream {
                request_id,
                envelope,
                nonce,
            } => {
                w.u64(*request_id).bytes(envelope).raw(nonce);
            }
            Message::DeliverEnvelope {
                order_id,
                sw,
                envelope,
                nonce,
            } => {
                w.u64(*order_id).bytes(sw).bytes(envelope).raw(nonce);
            }
            Message::Package {
                order_id,
                app_id,
                sw,
                envelope,
                nonce,
            } => {
                w.u64(*order_id).str(app_id).bytes(sw).bytes(envelope).raw(nonce);
            }
            Message::NewCustomer {
                order_id,
                app_id,
                nonce,
            } => {
                w.u64(*order_id).str(app_id).raw(nonce);
            }
            Message::Credentials {
                order_id,
                public,
                signature,
                nonce,
            } => {
                w.u64(*order_id).raw(public).bytes(signature).raw(nonce);
            }
            Message::RogueQuery {
                query_id,
                pseudonym,
                base,
                nonce,
            } => {
                w.u64(*query_id).raw(pseudonym).bytes(base).raw(nonce);
            }
            Message::RogueAnswer { query_id, rogue, nonce } => {
                w.u64(*query_id).bool(*rogue).raw(nonce);
            }
            Message::Capture { order_id, nonce } | Message::Captured { order_id, nonce } => {
                w.u64(*order_id).raw(nonce);
            }
            Message::UpdateCheck {
                ref_id,
                app_id,
                installed,
                nonce,
            } => {
                w.u64(*ref_id).str(app_id).u64(*installed).raw(nonce);
            }
            Message::UpdateOffer {
                ref_id,
                app_id,
                latest,
                nonce,
            } => {
                w.u64(*ref_id).str(app_id).u64(*latest).raw(nonce);
            }
            Message::UpdateRequest {
                ref_id,
                app_id,
                id_hap,
                nonce,
            } => {
                w.u64(*ref_id).str(app_id).raw(id_hap).raw(nonce);
            }
            Message::UpdatePackage {
                ref_id,
                app_id,
                version,
                envelope,
                nonce,
            } => {
                w.u64(*ref_id).str(app_id).u64(*version).bytes(envelope).raw(nonce);
            }
            Message::Ack { id, nonce } => {
                w.u64(*id).raw(nonce);
            }
            Message::LoadRequest { app_id, envelope } => {
                w.str(app_id).bytes(envelope);
            }
            Message::LoadResult { receipt } => {
                w.bytes(receipt);
            }
            Message::AttestRequest {
                basename,
                counter,
                context,
            } => {
                w.bytes(basename).u64(*counter).bytes(context);
            }
            Message::AttestResponse { public, signature } => {
                w.raw(public).bytes(signature);
            }
            Message::DebugLeak { bytes } => {
                w.bytes(bytes);
            }
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let s = |r: &mut Reader<'_>| r.str().map(str::to_string);
        let b = |r: &mut Reader<'_>| r.bytes().map(<[u8]>::to_vec);
        let m = match r.u8()? {
            0x20 => Message::Purchase {
                user: s(&mut r)?,
                app_id: s(&mut r)?,
                nonce: r.array()?,
            },
            0x21 => Message::ChargeRequest {
                order_id: r.u64()?,
                amount: r.u64()?,
                nonce: r.array()?,
            },
            0x22 => Message::PaymentResult {
                order_id: r.u64()?,
                approved: r.bool()?,
                nonce: r.array()?,
            },
            0x23 => Message::OrderConfirmed {
                order_id: r.u64()?,
                app_id: s(&mut r)?,
                nonce: r.array()?,
            },
            0x25 => Message::HapIdentity {
                order_id: r.u64()?,
                id_hap: r.array()?,
                nonce: r.array()?,
            },
            0x26 => Message::ForwardCustomer {
                order_id: r.u64()?,
                app_id: s(&mut r)?,
                id_hap: r.array()?,
                nonce: r.array()?,
            },
            0x27 => Message::EncryptRequest {
                request_id: r.u64()?,
                app_id: s(&mut r)?,
                version: r.u64()?,
                id_hap: r.array()?,
                bitstream: b(&mut r)?,
                nonce: r.array()?,
            },
            0x28 => Message::EncryptedBitstream {
                request_id: r.u64()?,
                envelope: b(&mut r)?,
                nonce: r.array()?,
            },
            0x29 => Message::DeliverEnvelope {
                order_id: r.u64()?,
                sw: b(&mut r)?,
                envelope: b(&mut r)?,
                nonce: r.array()?,
            },
            0x2a => Message::Package {
                order_id: r.u64()?,
                app_id: s(&mut r)?,
                sw: b(&mut r)?,
                envelope: b(&mut r)?,
                nonce: r.array()?,
            },
            0x2b => Message::NewCustomer {
                order_id: r.u64()?,
                app_id: s(&mut r)?,
                nonce: r.array()?,
            },
            0x2c => Message::Credentials {
                order_id: r.u64()?,
                public: r.array()?,
                signature: b(&mut r)?,
                nonce: r.array()?,
            },
            0x2d => Message::RogueQuery {
                query_id: r.u64()?,
                pseudonym: r.array()?,
                base: b(&mut r)?,
                nonce: r.array()?,
            },
            0x2e => Message::RogueAnswer {
                query_id: r.u64()?,
                rogue: r.bool()?,
                nonce: r.array()?,
            },
            0x2f => Message::Capture {
                order_id: r.u64()?,
                nonce: r.array()?,
            },
            0x30 => Message::Captured {
                order_id: r.u64()?,
                nonce: r.array()?,
            },
            0x31 => Message::UpdateCheck {
                ref_id: r.u64()?,
                app_id: s(&mut r)?,
                installed: r.u64()?,
                nonce: r.array()?,
            },
            0x32 => Message::UpdateOffer {
                ref_id: r.u64()?,
                app_id: s(&mut r)?,
                latest: r.u64()?,
                nonce: r.array()?,
            },
            0x33 => Message::UpdateRequest {
                ref_id: r.u64()?,
                app_id: s(&mut r)?,
                id_hap: r.array()?,
                nonce: r.array()?,
            },
            0x34 => Message::UpdatePackage {
                ref_id: r.u64()?,
                app_id: s(&mut r)?,
                version: r.u64()?,
                envelope: b(&mut r)?,
                nonce: r.array()?,
            },
            0x3f => Message::Ack {
                id: r.u64()?,
                nonce: r.array()?,
            },
            0x40 => Message::LoadRequest {
                app_id: s(&mut r)?,
                envelope: b(&mut r)?,
            },
            0x41 => Message::LoadResult { receipt: b(&mut r)? },
            0x42 => Message::AttestRequest {
                basename: b(&mut r)?,
                counter: r.u64()?,
                context: b(&mut r)?,
            },
            0x43 => Message::AttestResponse {
                public: r.array()?,
                signature: b(&mut r)?,
            },
            0x7f => Message::DebugLeak { bytes: b(&mut r)? },
            t => return Err(WireError::UnknownTag(t)),
        };
        r.finish()?;
        Ok(m)
    }
}
