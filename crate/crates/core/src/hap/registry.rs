// Licensed under the Apache-2.0 license

use std::collections::BTreeMap;
use std::fmt;
use std::sync::RwLock;

use crate::crypto::{hash, SymKey};
use crate::daa::{EndorsementDirectory, EndorsementRecord};

/// Device identifier: first 16 bytes of SHA-256(serial).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HapId(pub [u8; 16]);

impl HapId {
    pub fn from_serial(serial: &str) -> Self {
        let mut id = [0u8; 16];
        id.copy_from_slice(&hash(serial.as_bytes()).0[..16]);
        Self(id)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for HapId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HapId({})", self.to_hex())
    }
}

impl fmt::Display for HapId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug, Clone)]
pub struct RegistryEntry {
    pub serial: String,
    pub k_hap: SymKey,
    pub endorsement: SymKey,
    pub revoked: bool,
}

/// The HWV's manufacturing database. Shared and synchronized.
#[derive(Debug, Default)]
pub struct HwvRegistry {
    entries: RwLock<BTreeMap<HapId, RegistryEntry>>,
}

impl HwvRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn insert(&self, id: HapId, entry: RegistryEntry) -> bool {
        let mut map = self.entries.write().expect("registry lock");
        if map.contains_key(&id) {
            return false;
        }
        map.insert(id, entry);
        true
    }

    pub fn lookup(&self, id: &HapId) -> Option<RegistryEntry> {
        self.entries.read().expect("registry lock").get(id).cloned()
    }

    pub fn k_hap(&self, id: &HapId) -> Option<SymKey> {
        self.lookup(id).map(|e| e.k_hap)
    }

    pub fn revoke_endorsement(&self, id: &HapId) -> bool {
        match self.entries.write().expect("registry lock").get_mut(id) {
            Some(e) => {
                e.revoked = true;
                true
            }
            None => false,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("registry lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl EndorsementDirectory for HwvRegistry {
    fn endorsement(&self, device_id: &[u8]) -> Option<EndorsementRecord> {
        let id = HapId(device_id.try_into().ok()?);
        self.lookup(&id).map(|e| EndorsementRecord {
            key: e.endorsement,
            revoked: e.revoked,
        })
    }
}
