//! Benchmarking suite for streaming LLM inference on edge devices.
//!
//! Measures throughput, time-to-first-token and energy over a uniform
//! streaming-chat client contract, and evaluates composite efficiency
//! metrics: throughput density (Tps/m³), energy per million tokens
//! (MJ/Mtok), efficiency-gain ratios and Pareto frontiers. A deterministic
//! mock server makes the whole pipeline verifiable without hardware.

pub mod adapters;
pub mod bench;
pub mod catalog;
pub mod clock;
pub mod energy;
pub mod error;
pub mod fixtures;
mod httpwire;
pub mod metrics;
pub mod mock;
pub mod store;
#[cfg(test)]
pub(crate) mod testutil;

pub use adapters::{RuntimeEndpoint, RuntimeKind, TokenEvent, Timeouts};
pub use bench::{AggregateResult, BenchTarget, BenchmarkConfig, RunRecord, SuiteConfig};
pub use catalog::{Catalog, DeviceProfile, ModelSpec};
pub use energy::{EnergyResult, PowerTrace};
pub use error::{Error, Result};
pub use fixtures::GoldenFixture;
pub use metrics::MetricVector;
pub use mock::{MockProfile, MockServer};
pub use store::ResultStore;
