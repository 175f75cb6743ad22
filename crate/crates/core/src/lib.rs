//! Discrete-event simulator for the SLAC and SLACER self-organizing overlay
//! protocols, driven by a Prisoner's Dilemma test application.
//!
//! The crate is layered bottom-up:
//!
//! * [`graph`]: the undirected, bounded-degree overlay and per-node state.
//! * [`sampler`]: population-wide random peer selection (exact oracle or
//!   gossip-based).
//! * [`pd`]: the Prisoner's Dilemma application that generates utility.
//! * [`protocol`]: compare, copy and mutate.
//! * [`engine`]: per-cycle scheduling, churn and the single-run driver.
//! * [`metrics`]: cooperation, CCP, CCPL, clustering, path length, components.
//! * [`config`], [`experiment`], [`presets`]: declarative experiments,
//!   replicates, sweeps and CSV output.

pub mod chart;
pub mod config;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod metrics;
pub mod pd;
pub mod presets;
pub mod protocol;
pub mod sampler;
pub mod union_find;
pub mod verify;

pub use error::{Result, SimError};
pub use graph::{LinkResult, NodeId, NodeState, OverlayGraph, Strategy};
