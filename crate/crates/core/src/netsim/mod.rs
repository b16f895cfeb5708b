// Licensed under the Apache-2.0 license

//! Deterministic message bus with an interposing adversary, transcripts and
//! taint scanning.

mod adversary;
mod mate;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

pub use adversary::{Action, AdversaryMode, AdversaryPolicy, Rule};
pub use mate::{mate_hooks, HostField, MateError, MateHandle};

use crate::crypto::{hash, Digest, SecureRng};
use adversary::Adversary;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetError {
    #[error("unknown endpoint {0:?}")]
    UnknownEndpoint(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptRecord {
    pub step: u64,
    pub src: String,
    pub dst: String,
    /// Message type as declared by the sender.
    pub label: String,
    pub bytes: Vec<u8>,
    pub note: Option<String>,
}

impl TranscriptRecord {
    /// True for records produced by the adversary rather than an actor.
    pub fn is_adversarial(&self) -> bool {
        matches!(self.note.as_deref(), Some(n) if n != "observe")
    }
}

#[derive(Debug, Clone)]
pub struct Delivery {
    pub src: String,
    pub dst: String,
    pub label: String,
    pub bytes: Vec<u8>,
}

pub struct Bus {
    endpoints: BTreeSet<String>,
    local_links: BTreeSet<(String, String)>,
    queue: VecDeque<Delivery>,
    step: u64,
    records: Vec<TranscriptRecord>,
    adversary: Adversary,
    adversary_seed: [u8; 32],
    sends: u64,
}

impl fmt::Debug for Bus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Bus")
            .field("step", &self.step)
            .field("queued", &self.queue.len())
            .field("records", &self.records.len())
            .finish_non_exhaustive()
    }
}

impl Bus {
    pub fn new(seed: &[u8]) -> Self {
        let adversary_seed = SecureRng::derive(seed, "netsim/adversary").array();
        Self {
            endpoints: BTreeSet::new(),
            local_links: BTreeSet::new(),
            queue: VecDeque::new(),
            step: 0,
            records: Vec::new(),
            adversary: Adversary::new(AdversaryPolicy::none(), SecureRng::from_seed(adversary_seed)),
            adversary_seed,
            sends: 0,
        }
    }

    pub fn register(&mut self, endpoint: &str) {
        self.endpoints.insert(endpoint.to_string());
    }

    /// Marks the host-to-HAP link, attackable only in MATE mode.
    pub fn mark_local(&mut self, a: &str, b: &str) {
        self.local_links.insert((a.to_string(), b.to_string()));
        self.local_links.insert((b.to_string(), a.to_string()));
    }

    pub fn is_local(&self, a: &str, b: &str) -> bool {
        self.local_links.contains(&(a.to_string(), b.to_string()))
    }

    pub fn set_policy(&mut self, policy: AdversaryPolicy) {
        self.adversary = Adversary::new(policy, SecureRng::from_seed(self.adversary_seed));
    }

    pub fn policy(&self) -> &AdversaryPolicy {
        &self.adversary.policy
    }

    pub fn send(&mut self, src: &str, dst: &str, label: &str, bytes: Vec<u8>) -> Result<(), NetError> {
        for e in [src, dst] {
            if !self.endpoints.contains(e) {
                return Err(NetError::UnknownEndpoint(e.to_string()));
            }
        }
        let local = self.is_local(src, dst);
        let emissions = self
            .adversary
            .intercept(src, dst, label, bytes, self.step, local, &self.records);
        for e in emissions {
            self.sends += 1;
            if e.deliver && self.endpoints.contains(&e.dst) {
                self.queue.push_back(Delivery {
                    src: e.src.clone(),
                    dst: e.dst.clone(),
                    label: e.label.clone(),
                    bytes: e.bytes.clone(),
                });
            }
            self.records.push(TranscriptRecord {
                step: self.step,
                src: e.src,
                dst: e.dst,
                label: e.label,
                bytes: e.bytes,
                note: e.note,
            });
        }
        Ok(())
    }

    /// Advances one scheduler step and hands out the next queued message.
    pub fn step(&mut self) -> Option<Delivery> {
        self.step += 1;
        self.queue.pop_front()
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn current_step(&self) -> u64 {
        self.step
    }

    pub fn records(&self) -> &[TranscriptRecord] {
        &self.records
    }

    pub fn send_count(&self) -> u64 {
        self.sends
    }

    /// Starts a fresh transcript; the step counter keeps running.
    pub fn take_records(&mut self) -> Vec<TranscriptRecord> {
        self.queue.clear();
        std::mem::take(&mut self.records)
    }
}

pub fn bus_send(bus: &mut Bus, src: &str, dst: &str, label: &str, bytes: Vec<u8>) -> Result<(), NetError> {
    bus.send(src, dst, label, bytes)
}

pub fn bus_step(bus: &mut Bus) -> Option<Delivery> {
    bus.step()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Abort {
        actor: String,
        error: String,
        detail: String,
    },
}

impl Outcome {
    pub fn abort(actor: &str, error: &str, detail: impl Into<String>) -> Self {
        Outcome::Abort {
            actor: actor.to_string(),
            error: error.to_string(),
            detail: detail.into(),
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Success => f.write_str("success"),
            Outcome::Abort { actor, error, .. } => write!(f, "abort {actor} {error}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolEvent {
    pub src: String,
    pub dst: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub records: Vec<TranscriptRecord>,
    pub snapshots: BTreeMap<String, Vec<u8>>,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("transcript line {line}: {reason}")]
pub struct ParseError {
    pub line: usize,
    pub reason: String,
}

const HEADER: &str = "# softip transcript v1";

fn clean(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

impl Transcript {
    /// Handshakes, acks and adversary-originated records are excluded.
    pub fn protocol_events(&self) -> Vec<ProtocolEvent> {
        self.records
            .iter()
            .filter(|r| !r.is_adversarial() && !r.label.starts_with("hs-") && r.label != "ack")
            .map(|r| ProtocolEvent {
                src: r.src.clone(),
                dst: r.dst.clone(),
                label: r.label.clone(),
            })
            .collect()
    }

    /// Line format, tab separated:
    /// `rec step src dst label hex note`, `state actor hex`, `outcome ...`.
    pub fn export(&self) -> String {
        let mut out = String::new();
        out.push_str(HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "rec\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.step,
                r.src,
                r.dst,
                r.label,
                hex::encode(&r.bytes),
                r.note.as_deref().map(clean).unwrap_or_else(|| "-".into())
            ));
        }
        for (actor, bytes) in &self.snapshots {
            out.push_str(&format!("state\t{actor}\t{}\n", hex::encode(bytes)));
        }
        match &self.outcome {
            Outcome::Success => out.push_str("outcome\tsuccess\n"),
            Outcome::Abort { actor, error, detail } => {
                out.push_str(&format!("outcome\tabort\t{actor}\t{error}\t{}\n", clean(detail)))
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let err = |line: usize, reason: &str| ParseError {
            line,
            reason: reason.to_string(),
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h == HEADER => {}
            _ => return Err(err(1, "missing header")),
        }
        let mut records = Vec::new();
        let mut snapshots = BTreeMap::new();
        let mut outcome = None;
        for (i, line) in lines {
            let n = i + 1;
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            match f[0] {
                "rec" if f.len() == 7 => records.push(TranscriptRecord {
                    step: f[1].parse().map_err(|_| err(n, "bad step"))?,
                    src: f[2].to_string(),
                    dst: f[3].to_string(),
                    label: f[4].to_string(),
                    bytes: hex::decode(f[5]).map_err(|_| err(n, "bad hex"))?,
                    note: (f[6] != "-").then(|| f[6].to_string()),
                }),
                "state" if f.len() == 3 => {
                    snapshots.insert(f[1].to_string(), hex::decode(f[2]).map_err(|_| err(n, "bad hex"))?);
                }
                "outcome" if f.len() == 2 && f[1] == "success" => outcome = Some(Outcome::Success),
                "outcome" if f.len() == 5 && f[1] == "abort" => outcome = Some(Outcome::abort(f[2], f[3], f[4])),
                _ => return Err(err(n, "unrecognized line")),
            }
        }
        Ok(Self {
            records,
            snapshots,
            outcome: outcome.ok_or_else(|| err(0, "missing outcome line"))?,
        })
    }

    pub fn digest(&self) -> Digest {
        hash(self.export().as_bytes())
    }
}

/// A byte string that must not appear in the clear.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Secret {
    pub label: String,
    pub bytes: Vec<u8>,
}

/// Chunk length and stride used for long secrets such as bitstreams.
const CHUNK: usize = 32;
const STRIDE: usize = 1024;

impl Secret {
    pub fn new(label: impl Into<String>, bytes: impl Into<Vec<u8>>) -> Self {
        Self {
            label: label.into(),
            bytes: bytes.into(),
        }
    }

    /// Long secrets are scanned as sampled 32-byte chunks, so partial leaks
    /// of more than about 1 KiB are caught too.
    pub fn chunked(label: &str, bytes: &[u8]) -> Vec<Secret> {
        if bytes.len() <= 2 * CHUNK {
            return vec![Secret::new(label, bytes)];
        }
        (0..bytes.len() - CHUNK)
            .step_by(STRIDE)
            .map(|off| Secret::new(format!("{label}[{off}..]"), &bytes[off..off + CHUNK]))
            .collect()
    }

    fn found_in(&self, haystack: &[u8]) -> bool {
        !self.bytes.is_empty() && haystack.windows(self.bytes.len()).any(|w| w == self.bytes.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub record: usize,
    pub step: u64,
    pub src: String,
    pub dst: String,
    pub label: String,
    pub secret: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "record {} step {} {} -> {} [{}] contains {}",
            self.record, self.step, self.src, self.dst, self.label, self.secret
        )
    }
}

/// Every record whose raw bytes contain a secret as a contiguous substring.
pub fn taint_scan(records: &[TranscriptRecord], secrets: &[Secret]) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if let Some(s) = secrets.iter().find(|s| s.found_in(&r.bytes)) {
            out.push(Violation {
                record: i,
                step: r.step,
                src: r.src.clone(),
                dst: r.dst.clone(),
                label: r.label.clone(),
                secret: s.label.clone(),
            });
        }
    }
    out
}

/// `(holder, secret label)` for every snapshot containing a secret.
pub fn scan_snapshots(snapshots: &BTreeMap<String, Vec<u8>>, secrets: &[Secret]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for (holder, bytes) in snapshots {
        for s in secrets {
            if s.found_in(bytes) {
                out.push((holder.clone(), s.label.clone()));
            }
        }
    }
    out
}
