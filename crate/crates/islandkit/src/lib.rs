//! Two-stage multi-layer spectral clustering for power-system controlled
//! islanding.
//!
//! Stage I detects coherent bus groups by greedy modularity clustering of a
//! bus-frequency correlation graph; stage II partitions the network into k
//! islands by spectral clustering on a merged multi-layer graph (frequency
//! similarity, active power flow, reactive power flow), minimizing
//! power-flow disruption.
//!
//! The typical flow:
//!
//! 1. load a topology ([`grid::load_topology`]), flow snapshot
//!    ([`grid::load_flow_snapshot`]) and bus-angle waveforms
//!    ([`grid::load_waveforms`]);
//! 2. build similarity layers ([`layers`]) from DFT-band correlations
//!    ([`signal`]) and measured branch flows;
//! 3. run the pipeline ([`pipeline::msci`] or
//!    [`pipeline::single_layer_islanding`]) to obtain an
//!    [`pipeline::IslandingSolution`] with cut-set, disruption metrics, and
//!    island balance.
//!
//! Everything is a pure function of its inputs plus an explicit seed;
//! repeated runs produce identical results.

pub mod error;
pub mod export;
pub mod grid;
pub mod layers;
pub mod modularity;
pub mod oracle;
pub mod pipeline;
pub mod signal;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
