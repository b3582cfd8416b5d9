//! Experiment harness for the proportional-allocation auction simulator.
//!
//! The harness layers scenario construction, population assembly, batched
//! simulation runs, and report/CSV emission on top of the `kelly-game` core.
//! Everything is driven by a single declarative TOML config (see
//! [`config::ExperimentConfig`]) so that a run is reproducible from the file
//! plus a base seed alone.

pub mod config;
pub mod experiment;
pub mod scenario;
pub mod table;
