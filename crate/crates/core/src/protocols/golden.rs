// Licensed under the Apache-2.0 license

//! Canonical protocol-event sequences, one event per line:
//! `<interaction> <src> <dst> <label> | <description>`.

use super::flows::Flow;
use crate::actors::{hap_name, host_name};
use crate::netsim::{ProtocolEvent, Transcript};

const SIMPLE: &str = include_str!("../../golden/simple.txt");
const SIMPLE_UPDATE: &str = include_str!("../../golden/simple-update.txt");
const ADVANCED: &str = include_str!("../../golden/advanced.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldenEvent {
    pub interaction: String,
    pub src: String,
    pub dst: String,
    pub label: String,
    pub description: String,
}

pub fn parse_golden(text: &str) -> Result<Vec<GoldenEvent>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (head, description) = line.split_once('|').unwrap_or((line, ""));
        let f: Vec<&str> = head.split_whitespace().collect();
        let [interaction, src, dst, label] = f[..] else {
            return Err(format!("golden line {}: expected 4 fields", n + 1));
        };
        out.push(GoldenEvent {
            interaction: interaction.to_string(),
            src: src.to_string(),
            dst: dst.to_string(),
            label: label.to_string(),
            description: description.trim().to_string(),
        });
    }
    Ok(out)
}

/// Golden sequence for a flow, with the buyer's endpoints substituted for EU0/HAP0.
pub fn golden(flow: Flow, buyer: usize) -> Vec<GoldenEvent> {
    let text = match flow {
        Flow::Simple => SIMPLE,
        Flow::SimpleUpdate => SIMPLE_UPDATE,
        Flow::Advanced => ADVANCED,
        Flow::Downgrade => return Vec::new(),
    };
    let rename = |s: String| match s.as_str() {
        "EU0" => host_name(buyer),
        "HAP0" => hap_name(buyer),
        _ => s,
    };
    parse_golden(text)
        .expect("bundled golden files parse")
        .into_iter()
        .map(|g| GoldenEvent {
            src: rename(g.src),
            dst: rename(g.dst),
            ..g
        })
        .collect()
}

/// Exact match of the transcript's protocol events against the golden
/// sequence; the error lists the first divergence.
pub fn check_conformance(flow: Flow, buyer: usize, transcript: &Transcript) -> Result<(), String> {
    let want = golden(flow, buyer);
    let got = transcript.protocol_events();
    let fmt = |e: &ProtocolEvent| format!("{} -> {} {}", e.src, e.dst, e.label);
    for (i, g) in want.iter().enumerate() {
        match got.get(i) {
            Some(e) if e.src == g.src && e.dst == g.dst && e.label == g.label => {}
            Some(e) => {
                return Err(format!(
                    "event {i}: expected {} -> {} {} (interaction {}), got {}",
                    g.src,
                    g.dst,
                    g.label,
                    g.interaction,
                    fmt(e)
                ))
            }
            None => {
                return Err(format!(
                    "event {i}: expected {} -> {} {}, transcript ended",
                    g.src, g.dst, g.label
                ))
            }
        }
    }
    if got.len() > want.len() {
        return Err(format!("unexpected extra event {}", fmt(&got[want.len()])));
    }
    Ok(())
}
