//! Inter-set wear-leveling policies.
//!
//! [`WearPolicy::Swl`] is the write-count driven color swapping scheme: every
//! `K` block writes (and no sooner than `min_gap_cycles` after the previous
//! run) it looks at how unevenly the last interval's writes were spread over
//! the colors and, if the spread is large enough, routes the hottest regions
//! to the least-worn colors. [`WearPolicy::Xor`] is the comparator that
//! blindly XOR-remaps every region each interval, and [`WearPolicy::Static`]
//! never remaps.

use std::cmp::Reverse;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};

pub const DEFAULT_BETA: f64 = 75.0;
pub const DEFAULT_K_WRITES: u64 = 100_000;
pub const DEFAULT_MIN_GAP_CYCLES: u64 = 3_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    #[default]
    Swl,
    Static,
    Xor,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::Swl => "swl",
            PolicyKind::Static => "static",
            PolicyKind::Xor => "xor",
        })
    }
}

impl FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "swl" => Ok(PolicyKind::Swl),
            "static" => Ok(PolicyKind::Static),
            "xor" => Ok(PolicyKind::Xor),
            _ => Err(config_err(format!("unknown policy {s:?}"))),
        }
    }
}

/// How `nHigher` and `λ` combine into the number of pairs swapped per run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SwapLimitMode {
    /// λ caps the swap count.
    #[default]
    Min,
    /// λ is a floor on the swap count.
    Max,
}

impl SwapLimitMode {
    pub fn combine(self, n_higher: usize, lambda: usize) -> usize {
        match self {
            SwapLimitMode::Min => n_higher.min(lambda),
            SwapLimitMode::Max => n_higher.max(lambda),
        }
    }
}

impl fmt::Display for SwapLimitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SwapLimitMode::Min => "min",
            SwapLimitMode::Max => "max",
        })
    }
}

impl FromStr for SwapLimitMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(SwapLimitMode::Min),
            "max" => Ok(SwapLimitMode::Max),
            _ => Err(config_err(format!("unknown swap limit mode {s:?}"))),
        }
    }
}

/// Tunables of the remapping algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyParams {
    /// Remapping is skipped while the per-color write deviation is below this.
    pub beta: f64,
    /// Swap-count limit, `1 <= lambda <= N/2`.
    pub lambda: usize,
    /// Interval length in block writes.
    pub k_writes: u64,
    pub min_gap_cycles: u64,
    pub swap_limit_mode: SwapLimitMode,
}

impl PolicyParams {
    /// Defaults for a cache with `num_colors` colors (`λ = N/4`, at least 1).
    pub fn for_colors(num_colors: usize) -> Self {
        PolicyParams {
            beta: DEFAULT_BETA,
            lambda: default_lambda(num_colors),
            k_writes: DEFAULT_K_WRITES,
            min_gap_cycles: DEFAULT_MIN_GAP_CYCLES,
            swap_limit_mode: SwapLimitMode::Min,
        }
    }

    pub fn validate(&self, num_colors: usize) -> Result<()> {
        if self.beta.is_nan() || self.beta < 0.0 || self.beta.is_infinite() {
            return Err(config_err(format!("beta = {} must be finite and >= 0", self.beta)));
        }
        let hi = (num_colors / 2).max(1);
        if self.lambda < 1 || self.lambda > hi {
            return Err(config_err(format!(
                "lambda = {} must lie in 1..={hi} for {num_colors} colors",
                self.lambda
            )));
        }
        if self.k_writes == 0 {
            return Err(config_err("k must be positive"));
        }
        Ok(())
    }
}

pub fn default_lambda(num_colors: usize) -> usize {
    (num_colors / 4).max(1)
}

/// Population standard deviation.
pub fn stddev_writes(values: &[u64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let ss: f64 = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum();
    (ss / n).sqrt()
}

/// Outcome of one algorithm invocation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RemapDecision {
    /// False when the deviation gate suppressed remapping.
    pub ran: bool,
    pub swaps: Vec<(usize, usize)>,
    pub sdw: f64,
    pub n_higher: usize,
    pub n_color_to_swap: usize,
}

/// Per-color write bookkeeping and the run trigger.
#[derive(Debug, Clone)]
pub struct PolicyState {
    pub params: PolicyParams,
    n_write_global: Vec<u64>,
    n_write_last_interval: Vec<u64>,
    writes_since_check: u64,
    last_run_cycle: u64,
    deferred: bool,
}

impl PolicyState {
    pub fn new(num_colors: usize, params: PolicyParams) -> Result<Self> {
        if num_colors == 0 {
            return Err(config_err("need at least one color"));
        }
        params.validate(num_colors)?;
        Ok(PolicyState {
            params,
            n_write_global: vec![0; num_colors],
            n_write_last_interval: vec![0; num_colors],
            writes_since_check: 0,
            last_run_cycle: 0,
            deferred: false,
        })
    }

    /// Builds a state with preset counters, for planning in isolation.
    pub fn with_counters(params: PolicyParams, global: Vec<u64>, last_interval: Vec<u64>) -> Result<Self> {
        if global.len() != last_interval.len() {
            return Err(config_err("counter vectors differ in length"));
        }
        let mut s = PolicyState::new(global.len(), params)?;
        s.n_write_global = global;
        s.n_write_last_interval = last_interval;
        Ok(s)
    }

    pub fn num_colors(&self) -> usize {
        self.n_write_global.len()
    }

    pub fn n_write_global(&self) -> &[u64] {
        &self.n_write_global
    }

    pub fn n_write_last_interval(&self) -> &[u64] {
        &self.n_write_last_interval
    }

    pub fn writes_since_check(&self) -> u64 {
        self.writes_since_check
    }

    pub fn deferred(&self) -> bool {
        self.deferred
    }

    pub fn last_run_cycle(&self) -> u64 {
        self.last_run_cycle
    }

    pub fn observe_write(&mut self, color: usize) {
        self.n_write_global[color] += 1;
        self.n_write_last_interval[color] += 1;
        self.writes_since_check += 1;
    }

    /// True when the algorithm should run now. Reaching `K` writes before the
    /// cycle gap has elapsed starts a fresh count of `K` writes instead.
    pub fn check_trigger(&mut self, now_cycle: u64) -> bool {
        if self.writes_since_check < self.params.k_writes {
            return false;
        }
        self.writes_since_check = 0;
        if now_cycle.saturating_sub(self.last_run_cycle) >= self.params.min_gap_cycles {
            self.deferred = false;
            self.last_run_cycle = now_cycle;
            true
        } else {
            self.deferred = true;
            false
        }
    }

    /// Deviation and above-average count of the current interval.
    fn interval_spread(&self) -> (f64, usize) {
        let counts = &self.n_write_last_interval;
        let n = counts.len() as u128;
        let total: u128 = counts.iter().map(|&c| c as u128).sum();
        // x > total / n, compared exactly
        let n_higher = counts.iter().filter(|&&c| c as u128 * n > total).count();
        (stddev_writes(counts), n_higher)
    }

    /// Decides which color pairs to swap, then starts a new interval.
    pub fn plan_remap(&mut self) -> RemapDecision {
        let (sdw, n_higher) = self.interval_spread();
        let decision = if sdw < self.params.beta {
            RemapDecision {
                ran: false,
                swaps: Vec::new(),
                sdw,
                n_higher,
                n_color_to_swap: 0,
            }
        } else {
            let n = self.num_colors();
            let mut hot: Vec<usize> = (0..n).collect();
            hot.sort_by_key(|&c| (Reverse(self.n_write_last_interval[c]), c));
            let mut cold: Vec<usize> = (0..n).collect();
            cold.sort_by_key(|&c| (self.n_write_global[c], c));
            let count = self
                .params
                .swap_limit_mode
                .combine(n_higher, self.params.lambda)
                .min(n / 2);
            RemapDecision {
                ran: true,
                swaps: hot.into_iter().zip(cold).take(count).collect(),
                sdw,
                n_higher,
                n_color_to_swap: count,
            }
        };
        self.n_write_last_interval.iter_mut().for_each(|c| *c = 0);
        decision
    }

    fn close_interval(&mut self) -> (f64, usize) {
        let spread = self.interval_spread();
        self.n_write_last_interval.iter_mut().for_each(|c| *c = 0);
        spread
    }
}

/// Remap register value for the `interval`-th remap (1-based).
pub fn xor_register(interval: u64, num_colors: usize) -> usize {
    (interval % num_colors as u64) as usize
}

/// Color swaps that move every region from `r ^ old` to `r ^ new`.
///
/// The change is the involution `c -> c ^ (old ^ new)`, i.e. disjoint pairs.
pub fn xor_transition_swaps(old: usize, new: usize, num_colors: usize) -> Vec<(usize, usize)> {
    let d = old ^ new;
    (0..num_colors).filter(|&c| c < c ^ d).map(|c| (c, c ^ d)).collect()
}

/// A wear-leveling policy bound to one simulation run.
#[derive(Debug, Clone)]
pub enum WearPolicy {
    Static,
    Swl(PolicyState),
    Xor {
        state: PolicyState,
        register: usize,
        intervals: u64,
    },
}

impl WearPolicy {
    pub fn new(kind: PolicyKind, num_colors: usize, params: PolicyParams) -> Result<Self> {
        Ok(match kind {
            PolicyKind::Static => WearPolicy::Static,
            PolicyKind::Swl => WearPolicy::Swl(PolicyState::new(num_colors, params)?),
            PolicyKind::Xor => {
                if !num_colors.is_power_of_two() {
                    return Err(config_err("xor remapping needs a power-of-two color count"));
                }
                WearPolicy::Xor {
                    state: PolicyState::new(num_colors, params)?,
                    register: 0,
                    intervals: 0,
                }
            }
        })
    }

    pub fn kind(&self) -> PolicyKind {
        match self {
            WearPolicy::Static => PolicyKind::Static,
            WearPolicy::Swl(_) => PolicyKind::Swl,
            WearPolicy::Xor { .. } => PolicyKind::Xor,
        }
    }

    pub fn state(&self) -> Option<&PolicyState> {
        match self {
            WearPolicy::Static => None,
            WearPolicy::Swl(s) | WearPolicy::Xor { state: s, .. } => Some(s),
        }
    }

    pub fn observe_write(&mut self, color: usize) {
        match self {
            WearPolicy::Static => {}
            WearPolicy::Swl(s) | WearPolicy::Xor { state: s, .. } => s.observe_write(color),
        }
    }

    /// Runs the trigger check and, if it fires, plans the remap.
    pub fn poll(&mut self, now_cycle: u64) -> Option<RemapDecision> {
        match self {
            WearPolicy::Static => None,
            WearPolicy::Swl(s) => s.check_trigger(now_cycle).then(|| s.plan_remap()),
            WearPolicy::Xor {
                state,
                register,
                intervals,
            } => {
                if !state.check_trigger(now_cycle) {
                    return None;
                }
                *intervals += 1;
                let n = state.num_colors();
                let next = xor_register(*intervals, n);
                let swaps = xor_transition_swaps(*register, next, n);
                *register = next;
                let (sdw, n_higher) = state.close_interval();
                Some(RemapDecision {
                    ran: true,
                    n_color_to_swap: swaps.len(),
                    swaps,
                    sdw,
                    n_higher,
                })
            }
        }
    }
}
