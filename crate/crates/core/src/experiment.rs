//! End-to-end experiments: configuration, the simulation loop, and reports.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cache::{Cache, CacheConfig};
use crate::color_map::{apply_remap, MappingTable};
use crate::error::{config_err, Error, Result};
use crate::metrics::{self, CycleClock, EnergyConstants, RunStats};
use crate::policy::{
    default_lambda, PolicyKind, PolicyParams, SwapLimitMode, WearPolicy, DEFAULT_BETA, DEFAULT_K_WRITES,
    DEFAULT_MIN_GAP_CYCLES,
};
use crate::workload::{self, GeneratorKind, GeneratorSpec, TraceEvent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub kind: PolicyKind,
    pub beta: f64,
    /// Defaults to a quarter of the color count.
    pub lambda: Option<usize>,
    pub k: u64,
    pub min_gap_cycles: u64,
    pub swap_limit_mode: SwapLimitMode,
    pub count_fills: bool,
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection {
            kind: PolicyKind::Swl,
            beta: DEFAULT_BETA,
            lambda: None,
            k: DEFAULT_K_WRITES,
            min_gap_cycles: DEFAULT_MIN_GAP_CYCLES,
            swap_limit_mode: SwapLimitMode::Min,
            count_fills: true,
        }
    }
}

impl PolicySection {
    pub fn params(&self, num_colors: usize) -> PolicyParams {
        PolicyParams {
            beta: self.beta,
            lambda: self.lambda.unwrap_or_else(|| default_lambda(num_colors)),
            k_writes: self.k,
            min_gap_cycles: self.min_gap_cycles,
            swap_limit_mode: self.swap_limit_mode,
        }
    }
}

/// Where events come from. A `trace` path takes precedence over the
/// generator fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSection {
    pub trace: Option<PathBuf>,
    pub name: Option<String>,
    pub kind: GeneratorKind,
    pub events: u64,
    pub write_fraction: f64,
    pub zipf_exponent: f64,
    pub hotset_fraction: f64,
    pub hotset_probability: f64,
    pub pages: u64,
    pub seed: u64,
    pub instructions_per_access: u64,
    /// Region count for the hot-page layout; defaults to the cache's colors.
    pub regions: Option<u64>,
}

impl Default for WorkloadSection {
    fn default() -> Self {
        let g = GeneratorSpec::default();
        WorkloadSection {
            trace: None,
            name: None,
            kind: g.kind,
            events: g.num_events,
            write_fraction: g.write_fraction,
            zipf_exponent: g.zipf_exponent,
            hotset_fraction: g.hotset_fraction,
            hotset_probability: g.hotset_probability,
            pages: g.page_count,
            seed: g.seed,
            instructions_per_access: g.instructions_per_access,
            regions: None,
        }
    }
}

impl WorkloadSection {
    pub fn generator_spec(&self, cache: &CacheConfig, num_colors: usize) -> GeneratorSpec {
        GeneratorSpec {
            kind: self.kind,
            num_events: self.events,
            write_fraction: self.write_fraction,
            zipf_exponent: self.zipf_exponent,
            hotset_fraction: self.hotset_fraction,
            hotset_probability: self.hotset_probability,
            page_count: self.pages,
            seed: self.seed,
            instructions_per_access: self.instructions_per_access,
            page_bytes: cache.page_bytes,
            block_bytes: cache.block_bytes,
            regions: self.regions.unwrap_or(num_colors as u64),
        }
    }

    /// Short label used in report rows.
    pub fn label(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        if let Some(path) = &self.trace {
            return path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string());
        }
        match self.kind {
            GeneratorKind::Zipf => format!("zipf_s{}", self.zipf_exponent),
            GeneratorKind::Hotset => format!("hotset_{}_{}", self.hotset_fraction, self.hotset_probability),
            k => k.to_string(),
        }
    }

    fn seed_label(&self) -> String {
        if self.trace.is_some() {
            "-".into()
        } else {
            self.seed.to_string()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

/// A full experiment description, loadable from a sectioned `key = value` file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub cache: CacheConfig,
    pub policy: PolicySection,
    pub workload: WorkloadSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        // relative trace paths are relative to the config file
        if let (Some(trace), Some(parent)) = (&cfg.workload.trace, path.parent()) {
            if trace.is_relative() {
                cfg.workload.trace = Some(parent.join(trace));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every numeric range before anything is simulated.
    pub fn validate(&self) -> Result<()> {
        let geom = self.cache.geometry()?;
        self.policy.params(geom.num_colors).validate(geom.num_colors)?;
        if self.policy.kind == PolicyKind::Xor && !geom.num_colors.is_power_of_two() {
            return Err(config_err("xor policy needs a power-of-two color count"));
        }
        match &self.workload.trace {
            Some(p) if !p.is_file() => Err(config_err(format!("trace file {} not found", p.display()))),
            Some(_) => Ok(()),
            None => self.workload.generator_spec(&self.cache, geom.num_colors).validate(),
        }
    }

    /// Loads or generates the full event list.
    pub fn events(&self) -> Result<Vec<TraceEvent>> {
        let geom = self.cache.geometry()?;
        match &self.workload.trace {
            Some(path) => workload::read_trace(path)?.collect(),
            None => Ok(workload::generate(&self.workload.generator_spec(&self.cache, geom.num_colors))?.collect()),
        }
    }

    fn sim_setup(&self) -> SimSetup {
        SimSetup {
            cache: self.cache.clone(),
            policy: self.policy.kind,
            params: self.policy.params(self.cache.geometry().map(|g| g.num_colors).unwrap_or(1)),
            count_fills: self.policy.count_fills,
        }
    }
}

/// Everything one simulation run needs besides its events.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSetup {
    pub cache: CacheConfig,
    pub policy: PolicyKind,
    pub params: PolicyParams,
    pub count_fills: bool,
}

/// One invocation of the remapping algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRecord {
    pub index: u64,
    pub cycle: u64,
    pub ran: bool,
    pub sdw: f64,
    pub n_higher: usize,
    pub n_color_to_swap: usize,
    pub swaps: Vec<(usize, usize)>,
    pub writebacks: u64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub policy: PolicyKind,
    pub stats: RunStats,
    pub intervals: Vec<IntervalRecord>,
    /// `(interval, region-indexed colors)`, starting with interval 0.
    pub mappings: Vec<(u64, Vec<usize>)>,
    /// Cumulative block writes per physical color.
    pub color_writes: Vec<u64>,
    pub cache: Cache,
}

impl RunResult {
    pub fn final_mapping(&self) -> &[usize] {
        &self.mappings.last().expect("initial mapping recorded").1
    }
}

/// Replays `events` through the cache under one policy.
pub fn simulate(setup: &SimSetup, events: &[TraceEvent]) -> Result<RunResult> {
    let mut cache = Cache::new(&setup.cache, setup.count_fills)?;
    let geom = *cache.geometry();
    let mut map = MappingTable::identity(geom.num_colors);
    let mut policy = WearPolicy::new(setup.policy, geom.num_colors, setup.params)?;
    let mut clock = CycleClock::default();
    let mut stats = RunStats::default();
    let mut intervals = Vec::new();
    let mut mappings = vec![(0, map.colors().to_vec())];

    for ev in events {
        let loc = geom.decompose(ev.addr, &map)?;
        let out = cache.access(loc.set, loc.tag, ev.kind);
        let now = clock.advance(ev.icount, out.latency);
        match ev.kind {
            crate::AccessKind::Read => stats.reads += 1,
            crate::AccessKind::Write => stats.writes += 1,
        }
        if out.hit {
            if ev.kind == crate::AccessKind::Write {
                stats.write_hits += 1;
            }
        } else {
            stats.misses += 1;
        }
        stats.fills += out.fill_occurred as u64;
        stats.writebacks += out.evicted_dirty as u64;
        if !out.block_written {
            continue;
        }
        stats.block_writes += 1;
        policy.observe_write(loc.color);
        if let Some(decision) = policy.poll(now) {
            let writebacks = apply_remap(&mut map, &mut cache, &decision.swaps)?;
            stats.flush_writebacks += writebacks;
            if decision.ran {
                stats.remap_runs += 1;
            }
            stats.swaps += decision.swaps.iter().filter(|(a, b)| a != b).count() as u64;
            let index = intervals.len() as u64 + 1;
            log::debug!(
                "{} interval {index} at cycle {now}: sdw {:.2}, {} swaps, {writebacks} writebacks",
                setup.policy,
                decision.sdw,
                decision.swaps.len()
            );
            intervals.push(IntervalRecord {
                index,
                cycle: now,
                ran: decision.ran,
                sdw: decision.sdw,
                n_higher: decision.n_higher,
                n_color_to_swap: decision.n_color_to_swap,
                swaps: decision.swaps,
                writebacks,
            });
            if map.colors() != mappings.last().unwrap().1.as_slice() {
                mappings.push((index, map.colors().to_vec()));
            }
        }
    }

    stats.cycles = clock.cycles();
    stats.instructions = clock.instructions();
    stats.max_block_writes = cache.max_block_writes();
    stats.block_write_sd = metrics::block_write_sd(&cache);
    Ok(RunResult {
        policy: setup.policy,
        stats,
        intervals,
        mappings,
        color_writes: cache.color_write_totals(),
        cache,
    })
}

/// Technique measured against a baseline on the same events.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub workload: String,
    pub seed: String,
    pub frequency_hz: u64,
    pub energy: EnergyConstants,
    pub baseline: RunResult,
    pub technique: RunResult,
}

/// Per-row metrics relative to the baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct Relative {
    pub lifetime: Option<f64>,
    /// Baseline cycles over technique cycles (additive timing model).
    pub performance: Option<f64>,
    pub energy_j: f64,
    /// `(baseline - technique) / baseline × 100`.
    pub energy_saving_pct: f64,
    pub mpki: Option<f64>,
    /// `technique - baseline`.
    pub mpki_delta: Option<f64>,
}

impl Comparison {
    fn energy_of(&self, r: &RunResult) -> f64 {
        metrics::energy(&r.stats, &self.energy, self.frequency_hz)
    }

    pub fn relative(&self, r: &RunResult) -> Relative {
        let b = &self.baseline.stats;
        let e_base = self.energy_of(&self.baseline);
        let e = self.energy_of(r);
        let mpki = metrics::mpki(r.stats.misses, r.stats.instructions);
        let base_mpki = metrics::mpki(b.misses, b.instructions);
        Relative {
            lifetime: metrics::relative_lifetime(b, &r.stats),
            performance: (r.stats.cycles > 0).then(|| b.cycles as f64 / r.stats.cycles as f64),
            energy_j: e,
            energy_saving_pct: if e_base > 0.0 { (e_base - e) / e_base * 100.0 } else { 0.0 },
            mpki,
            mpki_delta: mpki.zip(base_mpki).map(|(t, b)| t - b),
        }
    }

    pub fn technique_relative(&self) -> Relative {
        self.relative(&self.technique)
    }

    fn rows(&self) -> Vec<&RunResult> {
        if self.technique.policy == self.baseline.policy && self.same_runs() {
            vec![&self.baseline]
        } else {
            vec![&self.baseline, &self.technique]
        }
    }

    fn same_runs(&self) -> bool {
        self.baseline.stats == self.technique.stats
            && self.baseline.intervals == self.technique.intervals
    }

    /// Main report: one row per distinct run.
    pub fn report_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in self.rows() {
            let rel = self.relative(r);
            let s = &r.stats;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{:.9},{:.6},{},{},{},{},{:.6}",
                r.policy,
                self.seed,
                self.workload,
                s.max_block_writes,
                opt(rel.lifetime),
                s.cycles,
                opt(rel.performance),
                rel.energy_j,
                rel.energy_saving_pct,
                opt(rel.mpki),
                opt(rel.mpki_delta),
                s.remap_runs,
                s.flush_writebacks,
                s.block_write_sd,
            )
            .unwrap();
        }
        out
    }

    /// Decision log of the technique run.
    pub fn intervals_csv(&self) -> String {
        let mut out = String::from("intervalIndex,cycle,ran,SDW,nHigher,nColorToSwap,swaps,writebacks\n");
        for i in &self.technique.intervals {
            let swaps: Vec<String> = i.swaps.iter().map(|(a, b)| format!("{a}-{b}")).collect();
            writeln!(
                out,
                "{},{},{},{:.6},{},{},{},{}",
                i.index,
                i.cycle,
                i.ran,
                i.sdw,
                i.n_higher,
                i.n_color_to_swap,
                swaps.join(";"),
                i.writebacks
            )
            .unwrap();
        }
        out
    }

    /// Region-to-color table of the technique run after each change.
    pub fn mapping_csv(&self) -> String {
        let mut out = String::from("interval,region,color\n");
        for (interval, colors) in &self.technique.mappings {
            for (region, color) in colors.iter().enumerate() {
                writeln!(out, "{interval},{region},{color}").unwrap();
            }
        }
        out
    }

    /// Tidy `metric,policy,workload,value` rows for plotting.
    pub fn plot_csv(&self) -> String {
        let mut out = String::from("metric,policy,workload,value\n");
        for r in self.rows() {
            let rel = self.relative(r);
            let mut put = |metric: &str, value: String| {
                writeln!(out, "{metric},{},{},{value}", r.policy, self.workload).unwrap();
            };
            put("relLifetime", opt(rel.lifetime));
            put("relPerf", opt(rel.performance));
            put("energySavingPct", format!("{:.6}", rel.energy_saving_pct));
            put("mpkiDelta", opt(rel.mpki_delta));
            put("maxBlockWrites", r.stats.max_block_writes.to_string());
            put("blockWriteSD", format!("{:.6}", r.stats.block_write_sd));
            for (c, w) in r.color_writes.iter().enumerate() {
                put(&format!("colorWrites{c}"), w.to_string());
            }
        }
        out
    }

    pub fn summary_md(&self) -> String {
        let rel = self.technique_relative();
        let (b, t) = (&self.baseline.stats, &self.technique.stats);
        let mut md = String::new();
        writeln!(md, "# {} vs {} on `{}`\n", self.technique.policy, self.baseline.policy, self.workload).unwrap();
        writeln!(md, "| metric | value |\n|---|---|").unwrap();
        writeln!(md, "| relative lifetime | {} |", opt(rel.lifetime)).unwrap();
        writeln!(md, "| relative performance (additive timing proxy) | {} |", opt(rel.performance)).unwrap();
        writeln!(md, "| energy saving % | {:.4} |", rel.energy_saving_pct).unwrap();
        writeln!(md, "| MPKI increase | {} |", opt(rel.mpki_delta)).unwrap();
        writeln!(md).unwrap();
        writeln!(md, "| counter | {} | {} |\n|---|---|---|", self.baseline.policy, self.technique.policy).unwrap();
        for (name, x, y) in [
            ("reads", b.reads, t.reads),
            ("writes", b.writes, t.writes),
            ("misses", b.misses, t.misses),
            ("block writes", b.block_writes, t.block_writes),
            ("max block writes", b.max_block_writes, t.max_block_writes),
            ("writebacks", b.writebacks, t.writebacks),
            ("flush writebacks", b.flush_writebacks, t.flush_writebacks),
            ("cycles", b.cycles, t.cycles),
            ("remap runs", b.remap_runs, t.remap_runs),
            ("swaps", b.swaps, t.swaps),
        ] {
            writeln!(md, "| {name} | {x} | {y} |").unwrap();
        }
        md
    }

    /// Report files keyed by name, in a fixed order.
    pub fn files(&self) -> Vec<(&'static str, String)> {
        vec![
            ("report.csv", self.report_csv()),
            ("intervals.csv", self.intervals_csv()),
            ("mapping.csv", self.mapping_csv()),
            ("plot.csv", self.plot_csv()),
            ("summary.md", self.summary_md()),
        ]
    }
}

pub const REPORT_HEADER: &str = "policy,seed,workload,maxBlockWrites,relLifetime,cycles,relPerf,energyJ,energyDeltaPct,mpki,mpkiDelta,remapRuns,flushWritebacks,blockWriteSD";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| format!("{x:.6}"))
}

/// Runs both setups on the same events, in parallel.
pub fn run_pair(baseline: &SimSetup, technique: &SimSetup, events: &[TraceEvent]) -> Result<(RunResult, RunResult)> {
    if baseline == technique {
        let r = simulate(baseline, events)?;
        return Ok((r.clone(), r));
    }
    let (b, t) = std::thread::scope(|s| {
        let b = s.spawn(|| simulate(baseline, events));
        let t = simulate(technique, events);
        (b.join().expect("baseline thread panicked"), t)
    });
    Ok((b?, t?))
}

/// Simulates the configured policy and a static baseline on the same events.
pub fn run(config: &ExperimentConfig) -> Result<Comparison> {
    config.validate()?;
    let events = config.events()?;
    let technique = config.sim_setup();
    let baseline = SimSetup {
        policy: PolicyKind::Static,
        ..technique.clone()
    };
    let (baseline, technique) = run_pair(&baseline, &technique, &events)?;
    Ok(Comparison {
        workload: config.workload.label(),
        seed: config.workload.seed_label(),
        frequency_hz: config.cache.frequency_hz,
        energy: EnergyConstants::default(),
        baseline,
        technique,
    })
}

/// Runs two configurations that must share cache geometry and workload.
pub fn compare(baseline: &ExperimentConfig, technique: &ExperimentConfig) -> Result<Comparison> {
    if baseline.cache != technique.cache {
        return Err(Error::Mismatch("cache configurations differ".into()));
    }
    if baseline.workload != technique.workload {
        return Err(Error::Mismatch("workloads differ".into()));
    }
    baseline.validate()?;
    technique.validate()?;
    let events = baseline.events()?;
    let (b, t) = run_pair(&baseline.sim_setup(), &technique.sim_setup(), &events)?;
    Ok(Comparison {
        workload: baseline.workload.label(),
        seed: baseline.workload.seed_label(),
        frequency_hz: baseline.cache.frequency_hz,
        energy: EnergyConstants::default(),
        baseline: b,
        technique: t,
    })
}

/// Writes a generated trace to `out`.
pub fn gen_trace(spec: &GeneratorSpec, out: impl Write) -> Result<()> {
    workload::write_trace(out, workload::generate(spec)?)?;
    Ok(())
}
