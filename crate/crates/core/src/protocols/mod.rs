// Licensed under the Apache-2.0 license

//! End-to-end flows over the simulated network and the attack library.

mod attacks;
mod config;
mod flows;
mod golden;
mod world;

pub use attacks::{generate_suite, run_attack, AttackScenario, AttackSuite, Verdict};
pub use config::{
    AppConfig, ConfigError, DaaStatus, DeviceConfig, Faults, PskConfig, ScenarioConfig, SchemeName, SCHEMA_VERSION,
};
pub use flows::{purchase_app, run_advanced_purchase, run_app, run_flow, run_simple_purchase, run_simple_update, Flow};
pub use golden::{check_conformance, golden, parse_golden, GoldenEvent};
pub use world::{World, WORLD};

#[cfg(test)]
mod tests;
