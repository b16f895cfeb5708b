// Licensed under the Apache-2.0 license

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use super::*;
use crate::channel::ChannelError;
use crate::crypto::{SecureRng, SymKey};
use crate::daa::{g1_bytes, Basename, GroupParams, IssuerKeyPair, IssuerService};
use crate::hap::{hap_provision, HapDevice, HapId, HwvRegistry};

fn rng(label: &str) -> SecureRng {
    SecureRng::derive(b"actor-tests", label)
}

fn key(n: u8) -> SymKey {
    SymKey::from_bytes([n; 32])
}

/// One actor under test, surrounded by bare channel tables standing in for its peers.
struct Net<A: Actor> {
    actor: A,
    peers: BTreeMap<String, (ChannelTable, SecureRng)>,
    /// Messages that reached a peer: (peer, from, message).
    seen: Vec<(String, String, Message)>,
}

impl<A: Actor> Net<A> {
    fn new(actor: A, peers: &[(&str, SymKey)]) -> Self {
        let me = actor.name().to_string();
        let peers = peers
            .iter()
            .map(|(p, k)| {
                let mut t = ChannelTable::new(p);
                t.add_psk(&me, k.clone());
                (p.to_string(), (t, rng(p)))
            })
            .collect();
        Self {
            actor,
            peers,
            seen: Vec::new(),
        }
    }

    fn send(&mut self, from: &str, msg: Message) -> Result<(), ActorError> {
        let dst = self.actor.name().to_string();
        let mut out = Outbox::default();
        let (t, r) = self.peers.get_mut(from).unwrap();
        t.send(&dst, msg, r, &mut out)?;
        self.pump(from, out)
    }

    fn pump(&mut self, src: &str, out: Outbox) -> Result<(), ActorError> {
        let mut q: VecDeque<(String, String, Vec<u8>)> =
            out.sends.into_iter().map(|(d, _, b)| (src.to_string(), d, b)).collect();
        while let Some((s, d, b)) = q.pop_front() {
            let mut o = Outbox::default();
            if d == self.actor.name() {
                self.actor.on_packet(&s, &b, &mut o)?;
            } else if let Some((t, r)) = self.peers.get_mut(&d) {
                if let Some(m) = t.receive(&s, &b, r, &mut o)? {
                    self.seen.push((d.clone(), s.clone(), m));
                }
            } else {
                continue;
            }
            q.extend(o.sends.into_iter().map(|(dst, _, bytes)| (d.clone(), dst, bytes)));
        }
        Ok(())
    }

    fn take(&mut self, peer: &str) -> Vec<Message> {
        let (mine, rest) = std::mem::take(&mut self.seen)
            .into_iter()
            .partition(|(p, _, _)| p == peer);
        self.seen = rest;
        mine.into_iter().map(|(_, _, m)| m).collect()
    }
}

fn table(me: &str, peers: &[(&str, SymKey)]) -> ChannelTable {
    let mut t = ChannelTable::new(me);
    for (p, k) in peers {
        t.add_psk(p, k.clone());
    }
    t
}

#[test]
fn tables_handshake_then_carry_data() {
    let mut a = table("A", &[("B", key(1))]);
    let mut b = table("B", &[("A", key(1))]);
    let (mut ra, mut rb) = (rng("a"), rng("b"));
    let mut out = Outbox::default();
    a.send("B", Message::Ack { id: 9, nonce: [3; 16] }, &mut ra, &mut out)
        .unwrap();
    assert_eq!(out.sends.len(), 1, "message waits for the handshake");
    let init = out.sends.remove(0).2;

    let mut ob = Outbox::default();
    assert!(b.receive("A", &init, &mut rb, &mut ob).unwrap().is_none());
    let mut oa = Outbox::default();
    assert!(a.receive("B", &ob.sends[0].2, &mut ra, &mut oa).unwrap().is_none());
    assert!(a.is_established("B"));
    let labels: Vec<&str> = oa.sends.iter().map(|(_, l, _)| l.as_str()).collect();
    assert_eq!(labels, ["hs-fin", "ack"]);

    let mut sink = Outbox::default();
    assert!(b.receive("A", &oa.sends[0].2, &mut rb, &mut sink).unwrap().is_none());
    let got = b.receive("A", &oa.sends[1].2, &mut rb, &mut sink).unwrap();
    assert_eq!(got, Some(Message::Ack { id: 9, nonce: [3; 16] }));

    let err = b.receive("A", &init, &mut rb, &mut sink).unwrap_err();
    assert_eq!(err.kind(), "ReplayDetected");
    let err = b.receive("A", &oa.sends[1].2, &mut rb, &mut sink).unwrap_err();
    assert_eq!(err.kind(), "ReplayDetected");
}

#[test]
fn mismatched_psk_fails_the_handshake() {
    let mut a = table("A", &[("B", key(1))]);
    let mut b = table("B", &[("A", key(2))]);
    let (mut ra, mut rb) = (rng("a"), rng("b"));
    let mut out = Outbox::default();
    a.send("B", Message::Ack { id: 1, nonce: [0; 16] }, &mut ra, &mut out)
        .unwrap();
    let mut ob = Outbox::default();
    let r = b.receive("A", &out.sends[0].2, &mut rb, &mut ob);
    let r = match r {
        Err(e) => Err(e),
        Ok(_) => a.receive("B", &ob.sends[0].2, &mut ra, &mut Outbox::default()),
    };
    assert_eq!(r.unwrap_err().kind(), "AuthenticationFailure");
}

#[test]
fn missing_psk_and_stray_plain_are_refused() {
    let mut a = table("A", &[]);
    let mut r = rng("a");
    let err = a
        .send(
            "Z",
            Message::Ack { id: 1, nonce: [0; 16] },
            &mut r,
            &mut Outbox::default(),
        )
        .unwrap_err();
    assert_eq!(err, ActorError::NoPsk("Z".into()));

    a.set_local_peer("L");
    let mut out = Outbox::default();
    a.send("L", Message::LoadResult { receipt: vec![1] }, &mut r, &mut out)
        .unwrap();
    let plain = out.sends[0].2.clone();
    let mut l = table("L", &[]);
    l.set_local_peer("A");
    assert_eq!(
        l.receive("A", &plain, &mut r, &mut Outbox::default()).unwrap(),
        Some(Message::LoadResult { receipt: vec![1] })
    );
    let err = l.receive("X", &plain, &mut r, &mut Outbox::default()).unwrap_err();
    assert_eq!(err.kind(), "UnexpectedMessage");
}

#[test]
fn data_before_handshake_is_rejected() {
    let mut a = table("A", &[("B", key(1))]);
    let err = a
        .receive("B", &[0xff, 0, 1], &mut rng("a"), &mut Outbox::default())
        .unwrap_err();
    assert_eq!(err.kind(), "Malformed");
    let e: ActorError = ChannelError::ChannelNotEstablished.into();
    assert_eq!(e.kind(), "ChannelNotEstablished");
}

#[test]
fn ack_book_wants_the_exact_nonce_once() {
    let mut book = AckBook::default();
    book.expect("P", 4, [7; 16]);
    assert_eq!(book.confirm("P", 4, &[8; 16]), Err(ActorError::AckMismatch));
    book.expect("P", 4, [7; 16]);
    assert_eq!(book.confirm("Q", 4, &[7; 16]), Err(ActorError::AckMismatch));
    assert!(book.confirm("P", 4, &[7; 16]).is_ok());
    assert!(book.is_empty());
    assert_eq!(book.confirm("P", 4, &[7; 16]), Err(ActorError::AckMismatch));
}

#[test]
fn order_context_is_distinct_per_order() {
    assert_ne!(order_context(1), order_context(2));
    assert!(order_context(1).starts_with(b"softip/order/"));
}

fn pg(policy: PaymentPolicy) -> Net<PaymentGatewayStub> {
    let k = key(5);
    let actor = PaymentGatewayStub::new(policy, table(PG, &[(STORE, k.clone())]), rng("pg"));
    Net::new(actor, &[(STORE, k)])
}

#[test]
fn gateway_authorizes_captures_and_refunds() {
    let mut net = pg(PaymentPolicy::ApproveAll);
    net.send(
        STORE,
        Message::ChargeRequest {
            order_id: 1,
            amount: 100,
            nonce: [1; 16],
        },
    )
    .unwrap();
    assert_eq!(
        net.take(STORE),
        [Message::PaymentResult {
            order_id: 1,
            approved: true,
            nonce: [1; 16]
        }]
    );
    net.send(
        STORE,
        Message::Capture {
            order_id: 1,
            nonce: [2; 16],
        },
    )
    .unwrap();
    assert_eq!(
        net.take(STORE),
        [Message::Captured {
            order_id: 1,
            nonce: [2; 16]
        }]
    );
    assert_eq!(net.actor.status(1), Some(PaymentStatus::Captured));

    let err = net
        .send(
            STORE,
            Message::Capture {
                order_id: 1,
                nonce: [3; 16],
            },
        )
        .unwrap_err();
    assert_eq!(err, ActorError::UnknownOrder(1));

    assert_eq!(pg_process(&mut net.actor, 2, 50), PaymentDecision::Approved);
    net.actor.on_abort();
    assert_eq!(net.actor.status(2), Some(PaymentStatus::Refunded));
    assert_eq!(net.actor.status(1), Some(PaymentStatus::Captured));
    assert_eq!(net.actor.approved_orders(), vec![1]);
}

#[test]
fn gateway_declines_under_decline_policy() {
    let mut net = pg(PaymentPolicy::DeclineAll);
    net.send(
        STORE,
        Message::ChargeRequest {
            order_id: 3,
            amount: 1,
            nonce: [0; 16],
        },
    )
    .unwrap();
    assert!(matches!(
        net.take(STORE)[..],
        [Message::PaymentResult { approved: false, .. }]
    ));
    assert_eq!(net.actor.status(3), Some(PaymentStatus::Declined));
    let err = net
        .send(
            STORE,
            Message::Capture {
                order_id: 3,
                nonce: [0; 16],
            },
        )
        .unwrap_err();
    assert_eq!(err, ActorError::UnknownOrder(3));
}

struct Vendor {
    registry: Arc<HwvRegistry>,
    issuer: Arc<IssuerService>,
    device: HapDevice,
}

fn vendor() -> Vendor {
    let mut r = rng("vendor");
    let registry = Arc::new(HwvRegistry::new());
    let issuer = Arc::new(IssuerService::new(IssuerKeyPair::generate(
        GroupParams::default(),
        &mut r,
    )));
    let mut device = hap_provision(&registry, "HAP-T", &mut r).unwrap();
    device.join(&issuer, registry.as_ref(), 1).unwrap();
    Vendor {
        registry,
        issuer,
        device,
    }
}

#[test]
fn vendor_seals_only_for_registered_devices() {
    let mut v = vendor();
    let k = key(6);
    let hwv = HwvActor::new(
        v.registry.clone(),
        v.issuer.clone(),
        table(HWV, &[(SWP, k.clone())]),
        rng("hwv"),
    );
    let mut net = Net::new(hwv, &[(SWP, k)]);
    let bs = b"bitstream-bytes".to_vec();
    let req = |id: HapId, request_id| Message::EncryptRequest {
        request_id,
        app_id: "app".into(),
        version: 1,
        id_hap: id.0,
        bitstream: bs.clone(),
        nonce: [4; 16],
    };
    net.send(SWP, req(v.device.id(), 1)).unwrap();
    let Message::EncryptedBitstream {
        request_id: 1,
        envelope,
        nonce,
    } = net.take(SWP).remove(0)
    else {
        panic!("no envelope")
    };
    assert_eq!(nonce, [4; 16]);
    v.device.load(&envelope).unwrap();
    assert!(v.device.fpga_holds(&bs));

    let err = net.send(SWP, req(HapId::from_serial("ghost"), 2)).unwrap_err();
    assert_eq!(err, ActorError::UnknownDevice);
    assert_eq!(net.actor.inbox().len(), 2);
}

#[test]
fn rogue_service_rejects_points_off_the_curve() {
    let v = vendor();
    let base = crate::daa::BaseSpec::Named(b"b".to_vec()).encode();
    let err = hwv_rogue_service(&v.issuer, &[0xaa; 48], &base).unwrap_err();
    assert_eq!(err.kind(), "Malformed");
    let good = g1_bytes(&crate::daa::G1Projective::generator());
    assert_eq!(hwv_rogue_service(&v.issuer, &good, &base), Ok(false));
}

fn advanced_swp(v: &Vendor) -> Net<SwpActor> {
    let peers = [(STORE, key(7)), ("EU0", key(8)), (HWV, key(9))];
    let mut swp = SwpActor::new(table(SWP, &peers), rng("swp"), 16);
    swp.set_verifier(
        v.issuer.params().clone(),
        v.issuer.public().clone(),
        Basename::named("b"),
    );
    swp.add_app("app", b"sw".to_vec(), 1, b"bits".to_vec());
    Net::new(swp, &peers)
}

fn credentials(v: &mut Vendor, order_id: u64, context_order: u64) -> Message {
    let att = v
        .device
        .attest_keypair(&Basename::named("b"), 1, &order_context(context_order))
        .unwrap();
    Message::Credentials {
        order_id,
        public: att.public.0,
        signature: att.signature.encode(),
        nonce: [1; 16],
    }
}

#[test]
fn early_credentials_wait_for_the_store_notice() {
    let mut v = vendor();
    let mut net = advanced_swp(&v);
    net.send("EU0", credentials(&mut v, 7, 7)).unwrap();
    assert_eq!(net.take("EU0"), [Message::Ack { id: 7, nonce: [1; 16] }]);
    assert!(net.take(HWV).is_empty());

    net.send(
        STORE,
        Message::NewCustomer {
            order_id: 7,
            app_id: "app".into(),
            nonce: [2; 16],
        },
    )
    .unwrap();
    assert_eq!(net.take(STORE), [Message::Ack { id: 7, nonce: [2; 16] }]);
    let Message::RogueQuery { query_id, nonce, .. } = net.take(HWV).remove(0) else {
        panic!("no rogue query")
    };
    net.send(
        HWV,
        Message::RogueAnswer {
            query_id,
            rogue: false,
            nonce,
        },
    )
    .unwrap();
    assert!(matches!(
        net.take(STORE)[..],
        [Message::DeliverEnvelope { order_id: 7, .. }]
    ));
    assert_eq!(net.actor.advanced_customers(), 1);
}

#[test]
fn credentials_bound_to_another_order_are_invalid() {
    let mut v = vendor();
    let mut net = advanced_swp(&v);
    net.send(
        STORE,
        Message::NewCustomer {
            order_id: 7,
            app_id: "app".into(),
            nonce: [2; 16],
        },
    )
    .unwrap();
    let err = net.send("EU0", credentials(&mut v, 7, 8)).unwrap_err();
    assert_eq!(err, ActorError::AttestationInvalid);
}

#[test]
fn rogue_answer_blocks_delivery() {
    let mut v = vendor();
    let mut net = advanced_swp(&v);
    net.send(
        STORE,
        Message::NewCustomer {
            order_id: 7,
            app_id: "app".into(),
            nonce: [2; 16],
        },
    )
    .unwrap();
    net.send("EU0", credentials(&mut v, 7, 7)).unwrap();
    let Message::RogueQuery { query_id, nonce, .. } = net.take(HWV).remove(0) else {
        panic!("no rogue query")
    };
    let err = net
        .send(
            HWV,
            Message::RogueAnswer {
                query_id,
                rogue: true,
                nonce,
            },
        )
        .unwrap_err();
    assert_eq!(err, ActorError::AttestationRogue);
    assert_eq!(net.actor.advanced_customers(), 0);
}

#[test]
fn unsolicited_messages_are_unexpected() {
    let mut net = pg(PaymentPolicy::ApproveAll);
    let err = net
        .send(
            STORE,
            Message::Purchase {
                user: "u".into(),
                app_id: "a".into(),
                nonce: [0; 16],
            },
        )
        .unwrap_err();
    assert!(matches!(err, ActorError::UnexpectedMessage { ref label, .. } if label == "purchase"));
}
