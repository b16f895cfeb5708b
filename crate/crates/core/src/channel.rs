// Licensed under the Apache-2.0 license

//! k-secure channel: PSK challenge-response handshake followed by sequenced
//! AEAD frames.
//!
//! Handshake (three packets):
//!
//! ```text
//! A -> B  init  { id_A, id_B, r_A }
//! B -> A  resp  { r_B, MAC_psk("resp" | id_A | id_B | r_A | r_B) }
//! A -> B  fin   { MAC_psk("fin"  | id_A | id_B | r_A | r_B) }
//! ```
//!
//! Both sides then hold `master = HKDF(psk, r_A | r_B)` with
//! `enc_key = derive(master, "enc")` and `mac_key = derive(master, "mac")`.
//! Frames bind `channel_id | seq | direction` as associated data and must
//! arrive with `seq == recv_seq + 1`.

use thiserror::Error;

use crate::crypto::{
    self, derive_key, derive_key_bytes, hash_parts, mac, mac_verify, AeadCiphertext, Digest, MacTag, SecureRng, SymKey,
};
use crate::wire::{Reader, WireError, Writer};

pub const TAG_HS_INIT: u8 = 0x01;
pub const TAG_HS_RESP: u8 = 0x02;
pub const TAG_HS_FIN: u8 = 0x03;
pub const TAG_DATA: u8 = 0x04;
pub const TAG_PLAIN: u8 = 0x05;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChannelError {
    #[error("authentication failure")]
    AuthenticationFailure,
    #[error("replayed frame: seq {seq} <= last accepted {last}")]
    ReplayDetected { seq: u64, last: u64 },
    #[error("sequence gap: got {seq}, expected {expected}")]
    SequenceGap { seq: u64, expected: u64 },
    #[error("channel not established")]
    ChannelNotEstablished,
    #[error("handshake names unexpected peer {0:?}")]
    UnexpectedPeer(String),
    #[error(transparent)]
    Wire(#[from] WireError),
}

#[derive(Clone, Debug)]
pub struct PeerIdentity {
    pub name: String,
    pub psk: SymKey,
}

impl PeerIdentity {
    pub fn new(name: impl Into<String>, psk: SymKey) -> Self {
        Self { name: name.into(), psk }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Initiator,
    Responder,
}

impl Role {
    fn direction_byte(self) -> u8 {
        match self {
            Role::Initiator => 0x01,
            Role::Responder => 0x02,
        }
    }

    fn peer(self) -> Role {
        match self {
            Role::Initiator => Role::Responder,
            Role::Responder => Role::Initiator,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChannelState {
    pub role: Role,
    pub peer: String,
    master: SymKey,
    enc_key: SymKey,
    mac_key: SymKey,
    pub channel_id: Digest,
    pub send_seq: u64,
    pub recv_seq: u64,
    pub established: bool,
}

impl ChannelState {
    fn new(role: Role, peer: &str, master: SymKey, channel_id: Digest) -> Self {
        let enc_key = derive_key(&master, "enc").expect("non-empty label");
        let mac_key = derive_key(&master, "mac").expect("non-empty label");
        Self {
            role,
            peer: peer.to_owned(),
            master,
            enc_key,
            mac_key,
            channel_id,
            send_seq: 0,
            recv_seq: 0,
            established: true,
        }
    }

    pub fn master(&self) -> &SymKey {
        &self.master
    }

    pub fn enc_key(&self) -> &SymKey {
        &self.enc_key
    }

    pub fn mac_key(&self) -> &SymKey {
        &self.mac_key
    }

    /// Tears the session down; further sends fail with `ChannelNotEstablished`.
    pub fn close(&mut self) {
        self.established = false;
    }

    pub fn send(&mut self, payload: &[u8], rng: &mut SecureRng) -> Result<Frame, ChannelError> {
        if !self.established {
            return Err(ChannelError::ChannelNotEstablished);
        }
        let seq = self.send_seq + 1;
        let aad = frame_aad(&self.channel_id, seq, self.role);
        let ct = crypto::aead_encrypt(&self.enc_key, payload, &aad, rng);
        self.send_seq = seq;
        Ok(Frame {
            seq,
            channel_id: self.channel_id,
            ct,
        })
    }

    pub fn recv(&mut self, frame: &Frame) -> Result<Vec<u8>, ChannelError> {
        if !self.established {
            return Err(ChannelError::ChannelNotEstablished);
        }
        if frame.channel_id != self.channel_id {
            return Err(ChannelError::AuthenticationFailure);
        }
        let aad = frame_aad(&self.channel_id, frame.seq, self.role.peer());
        let payload =
            crypto::aead_decrypt(&self.enc_key, &frame.ct, &aad).map_err(|_| ChannelError::AuthenticationFailure)?;
        if frame.seq <= self.recv_seq {
            return Err(ChannelError::ReplayDetected {
                seq: frame.seq,
                last: self.recv_seq,
            });
        }
        if frame.seq != self.recv_seq + 1 {
            return Err(ChannelError::SequenceGap {
                seq: frame.seq,
                expected: self.recv_seq + 1,
            });
        }
        self.recv_seq = frame.seq;
        Ok(payload)
    }
}

pub fn channel_send(state: &mut ChannelState, payload: &[u8], rng: &mut SecureRng) -> Result<Frame, ChannelError> {
    state.send(payload, rng)
}

pub fn channel_recv(state: &mut ChannelState, frame: &Frame) -> Result<Vec<u8>, ChannelError> {
    state.recv(frame)
}

fn frame_aad(channel_id: &Digest, seq: u64, sender: Role) -> Vec<u8> {
    let mut aad = Vec::with_capacity(41);
    aad.extend_from_slice(&channel_id.0);
    aad.extend_from_slice(&seq.to_be_bytes());
    aad.push(sender.direction_byte());
    aad
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub seq: u64,
    pub channel_id: Digest,
    pub ct: AeadCiphertext,
}

impl Frame {
    /// channel_id (32) || seq (8, BE) || nonce (12) || tag (16) || body (len-prefixed).
    pub fn encode_into(&self, w: &mut Writer) {
        w.raw(&self.channel_id.0).u64(self.seq);
        self.ct.encode_into(w);
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode_into(&mut w);
        w.finish()
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let channel_id = Digest(r.array()?);
        let seq = r.u64()?;
        let ct = AeadCiphertext::decode_from(r)?;
        Ok(Self { seq, channel_id, ct })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let f = Self::decode_from(&mut r)?;
        r.finish()?;
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandshakeInit {
    pub initiator: String,
    pub responder: String,
    pub challenge: [u8; 32],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandshakeResponse {
    pub challenge: [u8; 32],
    pub tag: MacTag,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandshakeFinish {
    pub tag: MacTag,
}

/// Everything that crosses a link, tagged by its first byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Packet {
    HandshakeInit(HandshakeInit),
    HandshakeResponse(HandshakeResponse),
    HandshakeFinish(HandshakeFinish),
    Data(Frame),
    /// Unprotected payload; only used on the host-to-HAP link.
    Plain(Vec<u8>),
}

impl Packet {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            Packet::HandshakeInit(m) => {
                w.u8(TAG_HS_INIT).str(&m.initiator).str(&m.responder).raw(&m.challenge);
            }
            Packet::HandshakeResponse(m) => {
                w.u8(TAG_HS_RESP).raw(&m.challenge).raw(&m.tag.0);
            }
            Packet::HandshakeFinish(m) => {
                w.u8(TAG_HS_FIN).raw(&m.tag.0);
            }
            Packet::Data(f) => {
                w.u8(TAG_DATA);
                f.encode_into(&mut w);
            }
            Packet::Plain(body) => {
                w.u8(TAG_PLAIN).bytes(body);
            }
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let p = match r.u8()? {
            TAG_HS_INIT => Packet::HandshakeInit(HandshakeInit {
                initiator: r.str()?.to_owned(),
                responder: r.str()?.to_owned(),
                challenge: r.array()?,
            }),
            TAG_HS_RESP => Packet::HandshakeResponse(HandshakeResponse {
                challenge: r.array()?,
                tag: MacTag(r.array()?),
            }),
            TAG_HS_FIN => Packet::HandshakeFinish(HandshakeFinish {
                tag: MacTag(r.array()?),
            }),
            TAG_DATA => Packet::Data(Frame::decode_from(&mut r)?),
            TAG_PLAIN => Packet::Plain(r.bytes()?.to_vec()),
            t => return Err(WireError::UnknownTag(t)),
        };
        r.finish()?;
        Ok(p)
    }
}

struct Transcript<'a> {
    initiator: &'a str,
    responder: &'a str,
    r_a: [u8; 32],
    r_b: [u8; 32],
}

impl Transcript<'_> {
    fn tag_input(&self, label: &[u8]) -> Vec<u8> {
        let d = hash_parts(&[
            label,
            self.initiator.as_bytes(),
            self.responder.as_bytes(),
            &self.r_a,
            &self.r_b,
        ]);
        d.0.to_vec()
    }

    fn master(&self, psk: &SymKey) -> SymKey {
        let mut info = b"softip/hs/master".to_vec();
        info.extend_from_slice(&self.r_a);
        info.extend_from_slice(&self.r_b);
        derive_key_bytes(psk, &info)
    }

    fn channel_id(&self) -> Digest {
        hash_parts(&[
            b"softip/channel",
            self.initiator.as_bytes(),
            self.responder.as_bytes(),
            &self.r_a,
            &self.r_b,
        ])
    }
}

/// Initiator side after sending `init`, waiting for `resp`.
#[derive(Debug)]
pub struct InitiatorHandshake {
    local: String,
    peer: String,
    psk: SymKey,
    challenge: [u8; 32],
}

impl InitiatorHandshake {
    pub fn start(local: &str, peer: &PeerIdentity, rng: &mut SecureRng) -> (Self, HandshakeInit) {
        let challenge = rng.array();
        let init = HandshakeInit {
            initiator: local.to_owned(),
            responder: peer.name.clone(),
            challenge,
        };
        (
            Self {
                local: local.to_owned(),
                peer: peer.name.clone(),
                psk: peer.psk.clone(),
                challenge,
            },
            init,
        )
    }

    pub fn peer(&self) -> &str {
        &self.peer
    }

    pub fn on_response(self, resp: &HandshakeResponse) -> Result<(ChannelState, HandshakeFinish), ChannelError> {
        let t = Transcript {
            initiator: &self.local,
            responder: &self.peer,
            r_a: self.challenge,
            r_b: resp.challenge,
        };
        if !mac_verify(&self.psk, &t.tag_input(b"resp"), &resp.tag) {
            return Err(ChannelError::AuthenticationFailure);
        }
        let fin = HandshakeFinish {
            tag: mac(&self.psk, &t.tag_input(b"fin")),
        };
        let state = ChannelState::new(Role::Initiator, &self.peer, t.master(&self.psk), t.channel_id());
        Ok((state, fin))
    }
}

/// Responder side after answering `init`, waiting for `fin`.
#[derive(Debug)]
pub struct ResponderHandshake {
    local: String,
    peer: String,
    psk: SymKey,
    r_a: [u8; 32],
    r_b: [u8; 32],
}

impl ResponderHandshake {
    pub fn accept(
        local: &str,
        peer: &PeerIdentity,
        init: &HandshakeInit,
        rng: &mut SecureRng,
    ) -> Result<(Self, HandshakeResponse), ChannelError> {
        if init.responder != local {
            return Err(ChannelError::UnexpectedPeer(init.responder.clone()));
        }
        if init.initiator != peer.name {
            return Err(ChannelError::UnexpectedPeer(init.initiator.clone()));
        }
        let r_b = rng.array();
        let t = Transcript {
            initiator: &init.initiator,
            responder: local,
            r_a: init.challenge,
            r_b,
        };
        let resp = HandshakeResponse {
            challenge: r_b,
            tag: mac(&peer.psk, &t.tag_input(b"resp")),
        };
        Ok((
            Self {
                local: local.to_owned(),
                peer: peer.name.clone(),
                psk: peer.psk.clone(),
                r_a: init.challenge,
                r_b,
            },
            resp,
        ))
    }

    pub fn on_finish(self, fin: &HandshakeFinish) -> Result<ChannelState, ChannelError> {
        let t = Transcript {
            initiator: &self.peer,
            responder: &self.local,
            r_a: self.r_a,
            r_b: self.r_b,
        };
        if !mac_verify(&self.psk, &t.tag_input(b"fin"), &fin.tag) {
            return Err(ChannelError::AuthenticationFailure);
        }
        Ok(ChannelState::new(
            Role::Responder,
            &self.peer,
            t.master(&self.psk),
            t.channel_id(),
        ))
    }
}

/// Runs the whole handshake in-process. `initiator` and `responder` each
/// name their party and carry that party's copy of the pair key.
pub fn handshake(
    initiator: &PeerIdentity,
    responder: &PeerIdentity,
    rng: &mut SecureRng,
) -> Result<(ChannelState, ChannelState), ChannelError> {
    let (pending_a, init) = InitiatorHandshake::start(
        &initiator.name,
        &PeerIdentity::new(responder.name.clone(), initiator.psk.clone()),
        rng,
    );
    let (pending_b, resp) = ResponderHandshake::accept(
        &responder.name,
        &PeerIdentity::new(initiator.name.clone(), responder.psk.clone()),
        &init,
        rng,
    )?;
    let (state_a, fin) = pending_a.on_response(&resp)?;
    let state_b = pending_b.on_finish(&fin)?;
    Ok((state_a, state_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::gen_sym_key;
    use proptest::prelude::*;

    fn pair(rng: &mut SecureRng) -> (PeerIdentity, PeerIdentity) {
        let psk = gen_sym_key(rng);
        (PeerIdentity::new("STORE", psk.clone()), PeerIdentity::new("SWP", psk))
    }

    fn flip_last(bytes: &mut [u8]) {
        let n = bytes.len();
        bytes[n - 1] ^= 0x01;
    }

    #[test]
    fn matching_psk_establishes_equal_master() {
        let mut rng = SecureRng::from_seed([1; 32]);
        let (a, b) = pair(&mut rng);
        let (sa, sb) = handshake(&a, &b, &mut rng).unwrap();
        assert!(sa.established && sb.established);
        assert_eq!(sa.master(), sb.master());
        assert_eq!(sa.channel_id, sb.channel_id);
        assert_eq!(sa.enc_key(), &derive_key(sa.master(), "enc").unwrap());
        assert_eq!(sa.mac_key(), &derive_key(sa.master(), "mac").unwrap());
    }

    #[test]
    fn mismatched_psk_fails() {
        let mut rng = SecureRng::from_seed([2; 32]);
        let a = PeerIdentity::new("STORE", gen_sym_key(&mut rng));
        let b = PeerIdentity::new("SWP", gen_sym_key(&mut rng));
        assert_eq!(
            handshake(&a, &b, &mut rng).unwrap_err(),
            ChannelError::AuthenticationFailure
        );
    }

    #[test]
    fn tampered_response_is_rejected() {
        let mut rng = SecureRng::from_seed([3; 32]);
        let (a, b) = pair(&mut rng);
        let (pa, init) = InitiatorHandshake::start("STORE", &PeerIdentity::new("SWP", a.psk.clone()), &mut rng);
        let (_pb, resp) =
            ResponderHandshake::accept("SWP", &PeerIdentity::new("STORE", b.psk.clone()), &init, &mut rng).unwrap();
        let mut wire = Packet::HandshakeResponse(resp).encode();
        flip_last(&mut wire);
        let Packet::HandshakeResponse(bad) = Packet::decode(&wire).unwrap() else {
            unreachable!()
        };
        assert_eq!(pa.on_response(&bad).unwrap_err(), ChannelError::AuthenticationFailure);
    }

    #[test]
    fn tampered_challenge_is_rejected() {
        let mut rng = SecureRng::from_seed([4; 32]);
        let (a, b) = pair(&mut rng);
        let (pa, mut init) = InitiatorHandshake::start("STORE", &PeerIdentity::new("SWP", a.psk.clone()), &mut rng);
        init.challenge[0] ^= 0x80;
        let (_pb, resp) =
            ResponderHandshake::accept("SWP", &PeerIdentity::new("STORE", b.psk), &init, &mut rng).unwrap();
        assert_eq!(pa.on_response(&resp).unwrap_err(), ChannelError::AuthenticationFailure);
    }

    #[test]
    fn responder_rejects_wrong_names() {
        let mut rng = SecureRng::from_seed([5; 32]);
        let (a, _) = pair(&mut rng);
        let (_, init) = InitiatorHandshake::start("STORE", &PeerIdentity::new("HWV", a.psk.clone()), &mut rng);
        assert!(matches!(
            ResponderHandshake::accept("SWP", &PeerIdentity::new("STORE", a.psk), &init, &mut rng),
            Err(ChannelError::UnexpectedPeer(_))
        ));
    }

    #[test]
    fn send_recv_roundtrip_and_sequence() {
        let mut rng = SecureRng::from_seed([6; 32]);
        let (a, b) = pair(&mut rng);
        let (mut sa, mut sb) = handshake(&a, &b, &mut rng).unwrap();
        let f1 = channel_send(&mut sa, b"one", &mut rng).unwrap();
        let f2 = channel_send(&mut sa, b"two", &mut rng).unwrap();
        assert_eq!((f1.seq, f2.seq), (1, 2));
        assert_eq!(channel_recv(&mut sb, &f1).unwrap(), b"one");
        assert_eq!(channel_recv(&mut sb, &f2).unwrap(), b"two");
        let back = sb.send(b"ack", &mut rng).unwrap();
        assert_eq!(sa.recv(&back).unwrap(), b"ack");
    }

    #[test]
    fn replay_and_gap_are_detected() {
        let mut rng = SecureRng::from_seed([7; 32]);
        let (a, b) = pair(&mut rng);
        let (mut sa, mut sb) = handshake(&a, &b, &mut rng).unwrap();
        let f1 = sa.send(b"1", &mut rng).unwrap();
        let f2 = sa.send(b"2", &mut rng).unwrap();
        let f3 = sa.send(b"3", &mut rng).unwrap();
        sb.recv(&f1).unwrap();
        assert_eq!(
            sb.recv(&f1).unwrap_err(),
            ChannelError::ReplayDetected { seq: 1, last: 1 }
        );
        assert_eq!(
            sb.recv(&f3).unwrap_err(),
            ChannelError::SequenceGap { seq: 3, expected: 2 }
        );
        sb.recv(&f2).unwrap();
        sb.recv(&f3).unwrap();
    }

    #[test]
    fn modified_body_and_reflection_fail_authentication() {
        let mut rng = SecureRng::from_seed([8; 32]);
        let (a, b) = pair(&mut rng);
        let (mut sa, mut sb) = handshake(&a, &b, &mut rng).unwrap();
        let f = sa.send(b"payload", &mut rng).unwrap();
        let mut wire = Packet::Data(f.clone()).encode();
        flip_last(&mut wire);
        let Packet::Data(bad) = Packet::decode(&wire).unwrap() else {
            unreachable!()
        };
        assert_eq!(sb.recv(&bad).unwrap_err(), ChannelError::AuthenticationFailure);
        // own frame bounced back to the sender
        assert_eq!(sa.recv(&f).unwrap_err(), ChannelError::AuthenticationFailure);
        assert_eq!(sb.recv(&f).unwrap(), b"payload");
    }

    #[test]
    fn closed_channel_refuses_to_send() {
        let mut rng = SecureRng::from_seed([9; 32]);
        let (a, b) = pair(&mut rng);
        let (mut sa, _) = handshake(&a, &b, &mut rng).unwrap();
        sa.close();
        assert_eq!(
            sa.send(b"x", &mut rng).unwrap_err(),
            ChannelError::ChannelNotEstablished
        );
    }

    #[test]
    fn soak_thousand_messages_in_order() {
        let mut rng = SecureRng::from_seed([10; 32]);
        let (a, b) = pair(&mut rng);
        let (mut sa, mut sb) = handshake(&a, &b, &mut rng).unwrap();
        for i in 0..1000u64 {
            let [len_byte] = rng.array::<1>();
            let payload = rng.vec(usize::from(len_byte) * 4);
            let f = sa.send(&payload, &mut rng).unwrap();
            let decoded = Frame::decode(&f.encode()).unwrap();
            assert_eq!(decoded.seq, i + 1);
            assert_eq!(sb.recv(&decoded).unwrap(), payload);
        }
        assert_eq!(sb.recv_seq, 1000);
    }

    #[test]
    fn fresh_master_per_handshake() {
        let mut rng = SecureRng::from_seed([11; 32]);
        let (a, b) = pair(&mut rng);
        let (s1, _) = handshake(&a, &b, &mut rng).unwrap();
        let (s2, _) = handshake(&a, &b, &mut rng).unwrap();
        assert_ne!(s1.master(), s2.master());
        assert_ne!(s1.channel_id, s2.channel_id);
    }

    #[test]
    fn frame_layout_is_bit_exact() {
        let f = Frame {
            seq: 0x0102,
            channel_id: Digest([0xaa; 32]),
            ct: AeadCiphertext {
                nonce: crate::crypto::Nonce([0xbb; 12]),
                body: vec![0xdd, 0xee],
                tag: [0xcc; 16],
            },
        };
        let mut expected = vec![0xaa; 32];
        expected.extend_from_slice(&[0, 0, 0, 0, 0, 0, 1, 2]);
        expected.extend_from_slice(&[0xbb; 12]);
        expected.extend_from_slice(&[0xcc; 16]);
        expected.extend_from_slice(&[0, 0, 0, 2, 0xdd, 0xee]);
        assert_eq!(f.encode(), expected);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn impostor_without_psk_never_completes(seed in any::<[u8; 32]>()) {
            let mut rng = SecureRng::from_seed(seed);
            let (a, b) = pair(&mut rng);
            let impostor = PeerIdentity::new(a.name.clone(), gen_sym_key(&mut rng));
            prop_assert!(handshake(&impostor, &b, &mut rng).is_err());
            let impostor_b = PeerIdentity::new(b.name.clone(), gen_sym_key(&mut rng));
            prop_assert!(handshake(&a, &impostor_b, &mut rng).is_err());
        }

        #[test]
        fn frames_never_carry_plaintext(payload in proptest::collection::vec(any::<u8>(), 16..256),
                                        seed in any::<[u8; 32]>()) {
            let mut rng = SecureRng::from_seed(seed);
            let (a, b) = pair(&mut rng);
            let (mut sa, _) = handshake(&a, &b, &mut rng).unwrap();
            let wire = Packet::Data(sa.send(&payload, &mut rng).unwrap()).encode();
            prop_assert!(!wire.windows(payload.len()).any(|w| w == payload.as_slice()));
        }

        #[test]
        fn accepted_sequence_is_contiguous(sends in 1usize..40, seed in any::<[u8; 32]>()) {
            let mut rng = SecureRng::from_seed(seed);
            let (a, b) = pair(&mut rng);
            let (mut sa, mut sb) = handshake(&a, &b, &mut rng).unwrap();
            let frames: Vec<_> = (0..sends).map(|_| sa.send(b"m", &mut rng).unwrap()).collect();
            let mut accepted = Vec::new();
            // deliver everything twice, interleaved; only the first copies may pass
            for f in frames.iter().flat_map(|f| [f, f]) {
                if sb.recv(f).is_ok() {
                    accepted.push(f.seq);
                }
            }
            prop_assert_eq!(accepted, (1..=sends as u64).collect::<Vec<_>>());
        }
    }
}
