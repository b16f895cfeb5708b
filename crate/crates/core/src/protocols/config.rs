// Licensed under the Apache-2.0 license

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::actors::{host_name, PaymentPolicy, HWV, PG, STORE, SWP};
use crate::crypto::SecureRng;
use crate::hap::Scheme;
use crate::netsim::AdversaryPolicy;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeName {
    Simple,
    Advanced,
}

impl From<SchemeName> for Scheme {
    fn from(s: SchemeName) -> Self {
        match s {
            SchemeName::Simple => Scheme::Simple,
            SchemeName::Advanced => Scheme::Advanced,
        }
    }
}

/// DAA provisioning state of a device at world construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DaaStatus {
    #[default]
    Joined,
    NotJoined,
    /// Joined with a counterfeit issuer the verifier does not trust.
    Forged,
    /// Joined, then its key extracted and placed on the rogue list.
    Rogue,
    RevokedEndorsement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppConfig {
    pub id: String,
    /// Executable code shipped alongside the bitstream (opaque text).
    pub sw: String,
    #[serde(default = "default_price")]
    pub price: u64,
    /// Bitstream bytes are generated pseudo-randomly from the seed.
    #[serde(default = "default_bitstream_len")]
    pub bitstream_len: usize,
    #[serde(default = "default_version")]
    pub version: u64,
}

fn default_price() -> u64 {
    100
}

fn default_bitstream_len() -> usize {
    64 * 1024
}

fn default_version() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceConfig {
    pub serial: String,
    #[serde(default)]
    pub daa: DaaStatus,
    #[serde(default)]
    pub counter: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PskConfig {
    pub a: String,
    pub b: String,
    /// 32 bytes, hex.
    pub key: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Faults {
    /// Planted bug: the SWP copies every bitstream to a debug endpoint in the clear.
    #[serde(default)]
    pub leak_bitstream: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub schema: u32,
    pub scheme: SchemeName,
    pub seed: u64,
    #[serde(default = "default_timeout")]
    pub order_timeout_steps: u64,
    #[serde(default)]
    pub payment_policy: PaymentPolicy,
    /// Index of the device whose owner makes the purchase.
    #[serde(default)]
    pub buyer: usize,
    /// Basename the SWP asks for; absent means random-base signatures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basename: Option<String>,
    pub apps: Vec<AppConfig>,
    pub devices: Vec<DeviceConfig>,
    pub psks: Vec<PskConfig>,
    #[serde(default)]
    pub adversary: AdversaryPolicy,
    #[serde(default)]
    pub faults: Faults,
}

fn default_timeout() -> u64 {
    16
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Channel pairs the flows use.
    pub fn required_pairs(&self) -> Vec<(String, String)> {
        let mut pairs = vec![
            (STORE.to_string(), SWP.to_string()),
            (STORE.to_string(), PG.to_string()),
            (SWP.to_string(), HWV.to_string()),
        ];
        for i in 0..self.devices.len() {
            pairs.push((host_name(i), STORE.to_string()));
            pairs.push((host_name(i), SWP.to_string()));
        }
        pairs
    }

    pub fn psk_hex(&self, a: &str, b: &str) -> Option<&str> {
        self.psks
            .iter()
            .find(|p| (p.a == a && p.b == b) || (p.a == b && p.b == a))
            .map(|p| p.key.as_str())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.schema != SCHEMA_VERSION {
            return bad(format!("unsupported schema {}", self.schema));
        }
        if self.apps.is_empty() {
            return bad("no apps".into());
        }
        let mut ids = BTreeSet::new();
        for app in &self.apps {
            if app.id.is_empty() || !ids.insert(&app.id) {
                return bad(format!("empty or duplicate app id {:?}", app.id));
            }
            if app.bitstream_len == 0 || app.version == 0 {
                return bad(format!("app {:?}: bitstream_len and version must be positive", app.id));
            }
        }
        if self.devices.is_empty() {
            return bad("no devices".into());
        }
        let mut serials = BTreeSet::new();
        for d in &self.devices {
            if d.serial.is_empty() || !serials.insert(&d.serial) {
                return bad(format!("empty or duplicate serial {:?}", d.serial));
            }
        }
        if self.buyer >= self.devices.len() {
            return bad(format!("buyer {} out of range", self.buyer));
        }
        if self.order_timeout_steps == 0 {
            return bad("order_timeout_steps must be positive".into());
        }
        for p in &self.psks {
            match hex::decode(&p.key) {
                Ok(k) if k.len() == 32 => {}
                _ => return bad(format!("psk {}-{} must be 32 hex-encoded bytes", p.a, p.b)),
            }
        }
        for (a, b) in self.required_pairs() {
            if self.psk_hex(&a, &b).is_none() {
                return bad(format!("missing psk for {a}-{b}"));
            }
        }
        Ok(())
    }

    /// A ready-to-run scenario: one app, `devices` joined HAPs, seed-derived psks.
    pub fn demo(scheme: SchemeName, seed: u64, devices: usize) -> Self {
        let mut cfg = Self {
            schema: SCHEMA_VERSION,
            scheme,
            seed,
            order_timeout_steps: default_timeout(),
            payment_policy: PaymentPolicy::ApproveAll,
            buyer: 0,
            basename: Some("softip/swp/demo".into()),
            apps: vec![AppConfig {
                id: "fir-filter".into(),
                sw: "fir-filter host driver 1.0".into(),
                price: default_price(),
                bitstream_len: default_bitstream_len(),
                version: 1,
            }],
            devices: (0..devices.max(1))
                .map(|i| DeviceConfig {
                    serial: format!("HAP-{:04}", i + 1),
                    daa: DaaStatus::Joined,
                    counter: 0,
                })
                .collect(),
            psks: Vec::new(),
            adversary: AdversaryPolicy::none(),
            faults: Faults::default(),
        };
        cfg.psks = cfg
            .required_pairs()
            .into_iter()
            .map(|(a, b)| {
                let key: [u8; 32] = SecureRng::derive(&seed.to_be_bytes(), &format!("psk/{a}/{b}")).array();
                PskConfig {
                    a,
                    b,
                    key: hex::encode(key),
                }
            })
            .collect();
        cfg
    }
}
