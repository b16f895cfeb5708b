// Licensed under the Apache-2.0 license

pub mod actors;
pub mod channel;
pub mod crypto;
pub mod daa;
pub mod hap;
pub mod netsim;
pub mod protocols;
pub mod wire;
