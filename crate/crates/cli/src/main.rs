use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nvwear_core::experiment::{self, Comparison, ExperimentConfig};
use nvwear_core::reference;
use nvwear_core::{CacheConfig, GeneratorKind, PolicyKind, SwapLimitMode};

/// Wear-leveling experiments on a simulated non-volatile last-level cache.
#[derive(Parser)]
#[command(name = "nvwear", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one policy against a static baseline and write reports.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Compare two configurations on the same workload and cache.
    Compare {
        /// Baseline configuration; defaults to the technique's with a static policy.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Technique configuration.
        #[arg(long, alias = "config")]
        technique: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Write a synthetic trace in the text trace format.
    GenTrace {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        kind: Option<Workload>,
        #[arg(long)]
        events: Option<u64>,
        #[arg(long)]
        pages: Option<u64>,
        #[arg(long)]
        write_fraction: Option<f64>,
        #[arg(long)]
        zipf_exponent: Option<f64>,
        /// Destination trace file.
        output: PathBuf,
    },
    /// Cross-check the cache model against the naive reference simulator.
    Selftest {
        #[arg(long, default_value_t = 1000)]
        traces: u64,
        #[arg(long, default_value_t = 10_000)]
        max_events: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long, value_enum)]
    policy: Option<Policy>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Interval length in block writes.
    #[arg(long)]
    k: Option<u64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda: Option<usize>,
    #[arg(long, value_enum)]
    swap_limit_mode: Option<LimitMode>,
    #[arg(long, value_enum)]
    count_fills: Option<OnOff>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Swl,
    Static,
    Xor,
}

#[derive(Clone, Copy, ValueEnum)]
enum LimitMode {
    Min,
    Max,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Workload {
    Uniform,
    Zipf,
    Hotset,
    Roundrobin,
}

impl Overrides {
    /// Settings shared by both sides of a comparison.
    fn apply_shared(&self, cfg: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            cfg.workload.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        if let Some(trace) = &self.trace {
            cfg.workload.trace = Some(trace.clone());
        }
        if let Some(c) = self.count_fills {
            cfg.policy.count_fills = matches!(c, OnOff::On);
        }
    }

    fn apply_policy(&self, cfg: &mut ExperimentConfig) {
        if let Some(p) = self.policy {
            cfg.policy.kind = match p {
                Policy::Swl => PolicyKind::Swl,
                Policy::Static => PolicyKind::Static,
                Policy::Xor => PolicyKind::Xor,
            };
        }
        if let Some(k) = self.k {
            cfg.policy.k = k;
        }
        if let Some(beta) = self.beta {
            cfg.policy.beta = beta;
        }
        if let Some(lambda) = self.lambda {
            cfg.policy.lambda = Some(lambda);
        }
        if let Some(m) = self.swap_limit_mode {
            cfg.policy.swap_limit_mode = match m {
                LimitMode::Min => SwapLimitMode::Min,
                LimitMode::Max => SwapLimitMode::Max,
            };
        }
    }
}

fn load(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

/// Writes `contents` to `dir/name` through a temp file and rename.
fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    let dest = dir.join(name);
    tmp.persist(&dest).with_context(|| format!("writing {}", dest.display()))?;
    Ok(())
}

fn write_reports(dir: &Path, report: &Comparison) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, body) in report.files() {
        write_atomic(dir, name, body.as_bytes())?;
    }
    log::info!("wrote reports to {}", dir.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NVWEAR_LOG", "warn")).init();
    let cli = Cli::parse();

    match cli.command {
        Command::Run { config, overrides } => {
            let mut cfg = load(config.as_deref())?;
            overrides.apply_shared(&mut cfg);
            overrides.apply_policy(&mut cfg);
            let report = experiment::run(&cfg)?;
            write_reports(&cfg.output.dir, &report)?;
        }
        Command::Compare {
            baseline,
            technique,
            overrides,
        } => {
            let mut tech = load(technique.as_deref())?;
            let mut base = match baseline {
                Some(p) => load(Some(&p))?,
                None => {
                    let mut b = tech.clone();
                    b.policy.kind = PolicyKind::Static;
                    b
                }
            };
            overrides.apply_shared(&mut tech);
            overrides.apply_shared(&mut base);
            overrides.apply_policy(&mut tech);
            let report = experiment::compare(&base, &tech)?;
            write_reports(&tech.output.dir, &report)?;
        }
        Command::GenTrace {
            config,
            seed,
            kind,
            events,
            pages,
            write_fraction,
            zipf_exponent,
            output,
        } => {
            let mut cfg = load(config.as_deref())?;
            let w = &mut cfg.workload;
            if let Some(s) = seed {
                w.seed = s;
            }
            if let Some(k) = kind {
                w.kind = match k {
                    Workload::Uniform => GeneratorKind::Uniform,
                    Workload::Zipf => GeneratorKind::Zipf,
                    Workload::Hotset => GeneratorKind::Hotset,
                    Workload::Roundrobin => GeneratorKind::Roundrobin,
                };
            }
            if let Some(n) = events {
                w.events = n;
            }
            if let Some(p) = pages {
                w.pages = p;
            }
            if let Some(f) = write_fraction {
                w.write_fraction = f;
            }
            if let Some(s) = zipf_exponent {
                w.zipf_exponent = s;
            }
            let geom = cfg.cache.geometry()?;
            let spec = cfg.workload.generator_spec(&cfg.cache, geom.num_colors);
            let mut buf = Vec::new();
            experiment::gen_trace(&spec, &mut buf)?;
            let dir = match output.parent() {
                Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
                _ => PathBuf::from("."),
            };
            let name = output.file_name().context("output path has no file name")?;
            fs::create_dir_all(&dir)?;
            write_atomic(&dir, &name.to_string_lossy(), &buf)?;
        }
        Command::Selftest {
            traces,
            max_events,
            seed,
        } => {
            if max_events == 0 {
                bail!("--max-events must be positive");
            }
            for ways in [1, 2, 4] {
                // 4 colors × 4 sets per color
                let cfg = CacheConfig::with_geometry(4 * 256 * ways, ways, 64, 256);
                let s = reference::differential(&cfg, seed.wrapping_add(ways), traces, max_events)
                    .map_err(|m| anyhow::anyhow!("{ways}-way mismatch: {m}"))?;
                println!(
                    "{ways}-way: {} traces, {} ops, {} hits, {} misses, {} writebacks, {} flush writebacks: ok",
                    s.traces, s.ops, s.hits, s.misses, s.writebacks, s.flush_writebacks
                );
            }
        }
    }
    Ok(())
}
