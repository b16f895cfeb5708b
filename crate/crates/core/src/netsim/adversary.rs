// Licensed under the Apache-2.0 license

use serde::{Deserialize, Serialize};

use super::TranscriptRecord;
use crate::channel::{Frame, HandshakeFinish, HandshakeInit, HandshakeResponse, Packet};
use crate::crypto::{aead_encrypt, gen_sym_key, MacTag, SecureRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdversaryMode {
    #[default]
    None,
    Mitm,
    Mate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum Action {
    Observe,
    Drop,
    /// XOR `mask` into the byte at `offset`; negative offsets count from the end.
    Tamper {
        offset: i64,
        #[serde(default = "default_mask")]
        mask: u8,
    },
    /// Deliver the message, then a copy of it (or of an earlier record).
    Replay {
        #[serde(default)]
        record: Option<usize>,
    },
    /// Deliver the message, then crafted bytes (hex) on the same link.
    Inject {
        bytes: String,
    },
    /// Replace the message with a forgery of the same kind built without keys.
    Impersonate,
}

fn default_mask() -> u8 {
    0x01
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dst: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Fire only on the n-th (1-based) message matching the filters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nth: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_step: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step: Option<u64>,
    #[serde(flatten)]
    pub action: Action,
}

impl Rule {
    pub fn on(src: &str, dst: &str, label: &str, action: Action) -> Self {
        Self {
            src: Some(src.to_string()),
            dst: Some(dst.to_string()),
            label: Some(label.to_string()),
            nth: None,
            min_step: None,
            max_step: None,
            action,
        }
    }

    pub fn nth(mut self, n: u64) -> Self {
        self.nth = Some(n);
        self
    }

    fn filters_match(&self, src: &str, dst: &str, label: &str, step: u64) -> bool {
        let eq = |want: &Option<String>, got: &str| want.as_deref().is_none_or(|w| w == got);
        eq(&self.src, src)
            && eq(&self.dst, dst)
            && eq(&self.label, label)
            && self.min_step.is_none_or(|s| step >= s)
            && self.max_step.is_none_or(|s| step <= s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryPolicy {
    #[serde(default)]
    pub mode: AdversaryMode,
    #[serde(default)]
    pub rules: Vec<Rule>,
}

impl AdversaryPolicy {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn mitm(rules: Vec<Rule>) -> Self {
        Self {
            mode: AdversaryMode::Mitm,
            rules,
        }
    }

    pub fn mate(rules: Vec<Rule>) -> Self {
        Self {
            mode: AdversaryMode::Mate,
            rules,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("policy serializes")
    }
}

/// One transmission the bus should record (and maybe deliver).
#[derive(Debug, Clone)]
pub(crate) struct Emission {
    pub src: String,
    pub dst: String,
    pub label: String,
    pub bytes: Vec<u8>,
    pub note: Option<String>,
    pub deliver: bool,
}

#[derive(Debug)]
pub(crate) struct Adversary {
    pub policy: AdversaryPolicy,
    counters: Vec<u64>,
    rng: SecureRng,
}

impl Adversary {
    pub fn new(policy: AdversaryPolicy, rng: SecureRng) -> Self {
        let counters = vec![0; policy.rules.len()];
        Self { policy, counters, rng }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn intercept(
        &mut self,
        src: &str,
        dst: &str,
        label: &str,
        bytes: Vec<u8>,
        step: u64,
        local_link: bool,
        records: &[TranscriptRecord],
    ) -> Vec<Emission> {
        let plain = |bytes: Vec<u8>, note: Option<String>| Emission {
            src: src.to_string(),
            dst: dst.to_string(),
            label: label.to_string(),
            bytes,
            note,
            deliver: true,
        };
        let active = match self.policy.mode {
            AdversaryMode::None => false,
            AdversaryMode::Mitm => !local_link,
            AdversaryMode::Mate => true,
        };
        if !active {
            return vec![plain(bytes, None)];
        }
        let mut fired = None;
        for (i, rule) in self.policy.rules.iter().enumerate() {
            if !rule.filters_match(src, dst, label, step) {
                continue;
            }
            self.counters[i] += 1;
            if fired.is_none() && rule.nth.is_none_or(|n| n == self.counters[i]) {
                fired = Some(rule.action.clone());
            }
        }
        let Some(action) = fired else {
            return vec![plain(bytes, None)];
        };
        match action {
            Action::Observe => vec![plain(bytes, Some("observe".into()))],
            Action::Drop => {
                let mut e = plain(bytes, Some("drop".into()));
                e.deliver = false;
                vec![e]
            }
            Action::Tamper { offset, mask } => {
                let mut b = bytes;
                if !b.is_empty() {
                    let len = b.len() as i64;
                    let idx = if offset < 0 { len + offset } else { offset }.clamp(0, len - 1);
                    b[idx as usize] ^= mask;
                }
                vec![plain(b, Some(format!("tamper@{offset}^{mask:#04x}")))]
            }
            Action::Replay { record: None } => {
                vec![plain(bytes.clone(), None), plain(bytes, Some("replay".into()))]
            }
            Action::Replay { record: Some(i) } => {
                let mut out = vec![plain(bytes, None)];
                if let Some(r) = records.get(i) {
                    out.push(Emission {
                        src: r.src.clone(),
                        dst: r.dst.clone(),
                        label: r.label.clone(),
                        bytes: r.bytes.clone(),
                        note: Some(format!("replay#{i}")),
                        deliver: true,
                    });
                }
                out
            }
            Action::Inject { bytes: hex_bytes } => {
                let crafted = hex::decode(hex_bytes.trim()).unwrap_or_default();
                vec![plain(bytes, None), plain(crafted, Some("inject".into()))]
            }
            Action::Impersonate => {
                let forged = forge(&bytes, &mut self.rng);
                vec![plain(forged, Some("impersonate".into()))]
            }
        }
    }
}

/// Builds a packet of the same kind as `original` without knowing any key.
pub(crate) fn forge(original: &[u8], rng: &mut SecureRng) -> Vec<u8> {
    let packet = match Packet::decode(original) {
        Ok(Packet::HandshakeInit(init)) => Packet::HandshakeInit(HandshakeInit {
            challenge: rng.array(),
            ..init
        }),
        Ok(Packet::HandshakeResponse(_)) => Packet::HandshakeResponse(HandshakeResponse {
            challenge: rng.array(),
            tag: MacTag(rng.array()),
        }),
        Ok(Packet::HandshakeFinish(_)) => Packet::HandshakeFinish(HandshakeFinish {
            tag: MacTag(rng.array()),
        }),
        Ok(Packet::Data(frame)) => {
            let key = gen_sym_key(rng);
            let body = rng.vec(frame.ct.body.len());
            Packet::Data(Frame {
                ct: aead_encrypt(&key, &body, b"", rng),
                ..frame
            })
        }
        Ok(Packet::Plain(body)) => Packet::Plain(rng.vec(body.len())),
        Err(_) => return rng.vec(original.len()),
    };
    packet.encode()
}
