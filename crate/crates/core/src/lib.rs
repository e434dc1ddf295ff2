//! Core library for a simulated decentralized oracle network: QoS-weighted
//! node selection, per-task threshold signing behind a small replicated
//! committee, a deterministic discrete-event network simulator, and an
//! analytical model of aggregation success.

pub mod analysis;
pub mod batch;
pub mod committee;
pub mod contract;
pub mod experiments;
pub mod ids;
pub mod netsim;
pub mod sampling;
pub mod threshold;
pub mod wire;
