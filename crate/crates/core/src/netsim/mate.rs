// Licensed under the Apache-2.0 license

use super::{AdversaryMode, AdversaryPolicy};
use crate::actors::EuHostActor;
use crate::hap::HapId;

/// Addressable pieces of end-user state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HostField {
    /// Envelope file for an app on the storage medium.
    Medium(String),
    InstalledSw(String),
    Account,
    /// The host's copy of its HAP identity, as it reports it to others.
    DeviceId,
    /// Anything inside the HAP. Always refused.
    Hap(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MateError {
    #[error("host access requires mate mode")]
    MateModeRequired,
    #[error("HAP internals are out of reach: {0}")]
    HapAccessDenied(String),
    #[error("no such host field")]
    NotFound,
}

/// Read/write access to an EU host's memory and storage.
#[derive(Debug)]
pub struct MateHandle<'a> {
    host: &'a mut EuHostActor,
}

pub fn mate_hooks<'a>(policy: &AdversaryPolicy, host: &'a mut EuHostActor) -> Result<MateHandle<'a>, MateError> {
    if policy.mode != AdversaryMode::Mate {
        return Err(MateError::MateModeRequired);
    }
    Ok(MateHandle { host })
}

impl MateHandle<'_> {
    pub fn read(&self, field: &HostField) -> Result<Vec<u8>, MateError> {
        match field {
            HostField::Medium(app) => self
                .host
                .medium
                .read(app)
                .map(<[u8]>::to_vec)
                .ok_or(MateError::NotFound),
            HostField::InstalledSw(app) => self.host.installed.get(app).cloned().ok_or(MateError::NotFound),
            HostField::Account => Ok(self.host.user().as_bytes().to_vec()),
            HostField::DeviceId => Ok(self.host.config().id_hap.0.to_vec()),
            HostField::Hap(what) => Err(MateError::HapAccessDenied(what.clone())),
        }
    }

    pub fn write(&mut self, field: &HostField, bytes: Vec<u8>) -> Result<(), MateError> {
        match field {
            HostField::Medium(app) => self.host.medium.write(app, bytes),
            HostField::InstalledSw(app) => {
                self.host.installed.insert(app.clone(), bytes);
            }
            HostField::Account => self.host.set_user(String::from_utf8_lossy(&bytes).into_owned()),
            HostField::DeviceId => {
                let id = <[u8; 16]>::try_from(bytes.as_slice()).map_err(|_| MateError::NotFound)?;
                self.host.set_device_id(HapId(id));
            }
            HostField::Hap(what) => return Err(MateError::HapAccessDenied(what.clone())),
        }
        Ok(())
    }

    pub fn medium_apps(&self) -> Vec<String> {
        self.host.medium.records().keys().cloned().collect()
    }
}
