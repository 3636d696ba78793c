//! Lifetime, energy, timing and MPKI accounting.

use crate::cache::Cache;
use crate::error::{config_err, Result};
use crate::policy::stddev_writes;

/// STT-RAM LLC and DRAM energy parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyConstants {
    /// Joules per cache read.
    pub read_energy: f64,
    /// Joules per block write (fill or write hit).
    pub write_energy: f64,
    /// Cache leakage, watts.
    pub cache_leakage: f64,
    /// Joules per main-memory access.
    pub mem_access_energy: f64,
    /// Memory leakage, watts.
    pub mem_leakage: f64,
}

impl Default for EnergyConstants {
    fn default() -> Self {
        EnergyConstants {
            read_energy: 1.015e-9,
            write_energy: 1.036e-9,
            cache_leakage: 2.235,
            mem_access_energy: 70e-9,
            mem_leakage: 0.18,
        }
    }
}

/// Counters of one completed run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStats {
    pub reads: u64,
    pub writes: u64,
    pub misses: u64,
    pub fills: u64,
    pub write_hits: u64,
    /// Increments of block write counters (fills and/or write hits, per counting mode).
    pub block_writes: u64,
    /// Dirty evictions.
    pub writebacks: u64,
    /// Dirty blocks written back by color flushes.
    pub flush_writebacks: u64,
    pub cycles: u64,
    pub instructions: u64,
    pub max_block_writes: u64,
    pub block_write_sd: f64,
    /// Algorithm invocations that passed the deviation gate.
    pub remap_runs: u64,
    /// Non-trivial color swaps performed.
    pub swaps: u64,
}

impl RunStats {
    pub fn memory_accesses(&self) -> u64 {
        self.misses + self.writebacks + self.flush_writebacks
    }

    /// Run length in seconds at `freq` Hz.
    pub fn seconds(&self, freq: u64) -> f64 {
        self.cycles as f64 / freq as f64
    }
}

/// Baseline over technique maximum block writes. `None` when the technique
/// never wrote a block.
pub fn relative_lifetime(baseline: &RunStats, technique: &RunStats) -> Option<f64> {
    (technique.max_block_writes > 0)
        .then(|| baseline.max_block_writes as f64 / technique.max_block_writes as f64)
}

/// Total LLC plus main-memory energy in joules.
pub fn energy(stats: &RunStats, consts: &EnergyConstants, freq: u64) -> f64 {
    assert!(freq > 0, "frequency must be positive");
    let t = stats.seconds(freq);
    stats.reads as f64 * consts.read_energy
        + stats.block_writes as f64 * consts.write_energy
        + consts.cache_leakage * t
        + stats.memory_accesses() as f64 * consts.mem_access_energy
        + consts.mem_leakage * t
}

/// Additive timing model: one cycle per instruction between accesses plus
/// the access latency.
#[derive(Debug, Clone, Copy, Default)]
pub struct CycleClock {
    cycles: u64,
    last_icount: u64,
}

impl CycleClock {
    pub fn advance(&mut self, icount: u64, latency: u64) -> u64 {
        self.cycles += icount.saturating_sub(self.last_icount) + latency;
        self.last_icount = self.last_icount.max(icount);
        self.cycles
    }

    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    pub fn instructions(&self) -> u64 {
        self.last_icount
    }
}

/// Misses per thousand instructions; `None` for zero instructions.
pub fn mpki(misses: u64, instructions: u64) -> Option<f64> {
    (instructions > 0).then(|| misses as f64 * 1000.0 / instructions as f64)
}

/// Population standard deviation of the per-block write counters.
pub fn block_write_sd(cache: &Cache) -> f64 {
    stddev_writes(&cache.write_counts().collect::<Vec<_>>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    /// Ratios (lifetime, performance): geometric mean.
    Ratio,
    /// Differences and percentages: arithmetic mean.
    Additive,
}

/// Averages per-workload values the way each metric kind calls for.
pub fn aggregate(values: &[f64], kind: MetricKind) -> Result<f64> {
    if values.is_empty() {
        return Err(config_err("cannot aggregate an empty list"));
    }
    let n = values.len() as f64;
    match kind {
        MetricKind::Additive => Ok(values.iter().sum::<f64>() / n),
        MetricKind::Ratio => {
            if let Some(v) = values.iter().find(|&&v| v.is_nan() || v <= 0.0) {
                return Err(config_err(format!("geometric mean needs positive values, got {v}")));
            }
            Ok((values.iter().map(|v| v.ln()).sum::<f64>() / n).exp())
        }
    }
}
