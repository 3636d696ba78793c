//! Trace-driven simulator of a non-volatile, set-associative last-level cache
//! with a region-to-color remapping layer and inter-set wear leveling.
//!
//! The pieces, bottom up:
//!
//! * [`cache`]: write-back LRU cache with per-block write counters.
//! * [`color_map`]: the region-to-color table, swaps and color flushes.
//! * [`policy`]: the write-count driven swap policy plus static and XOR
//!   baselines.
//! * [`workload`]: trace text format and synthetic generators.
//! * [`metrics`]: lifetime, energy, timing and MPKI.
//! * [`experiment`]: configuration, the simulation loop and reports.
//! * [`reference`]: a deliberately naive cache used as a differential oracle.

pub mod cache;
pub mod color_map;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod policy;
pub mod reference;
pub mod workload;

pub use cache::{AccessKind, AccessOutcome, Cache, CacheBlock, CacheConfig, Geometry, Location};
pub use color_map::{apply_remap, compute_num_colors, MappingTable};
pub use error::{Error, Result};
pub use experiment::{compare, run, simulate, Comparison, ExperimentConfig, RunResult, SimSetup};
pub use metrics::{EnergyConstants, MetricKind, RunStats};
pub use policy::{PolicyKind, PolicyParams, PolicyState, RemapDecision, SwapLimitMode, WearPolicy};
pub use workload::{GeneratorKind, GeneratorSpec, TraceEvent};
