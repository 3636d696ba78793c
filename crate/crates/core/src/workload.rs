//! Memory access traces: the text format and synthetic generators.
//!
//! One event per line: `<R|W> <0x-hex physical address> <decimal icount>`.
//! Lines starting with `#` and blank lines are skipped.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cache::{AccessKind, MAX_PHYS_ADDR};
use crate::error::{config_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraceEvent {
    pub kind: AccessKind,
    pub addr: u64,
    /// Cumulative instruction count when the access issues.
    pub icount: u64,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = match self.kind {
            AccessKind::Read => 'R',
            AccessKind::Write => 'W',
        };
        write!(f, "{k} {:#x} {}", self.addr, self.icount)
    }
}

/// Parses one trace line. `Ok(None)` for comments and blank lines.
pub fn parse_line(line: &str, lineno: usize) -> Result<Option<TraceEvent>> {
    let err = |reason: String| Error::TraceParse { line: lineno, reason };
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let mut fields = line.split_ascii_whitespace();
    let (Some(kind), Some(addr), Some(icount), None) = (fields.next(), fields.next(), fields.next(), fields.next())
    else {
        return Err(err("expected `<R|W> <0xADDR> <ICOUNT>`".into()));
    };
    let kind = match kind {
        "R" => AccessKind::Read,
        "W" => AccessKind::Write,
        other => return Err(err(format!("unknown kind {other:?}"))),
    };
    let hex = addr
        .strip_prefix("0x")
        .or_else(|| addr.strip_prefix("0X"))
        .ok_or_else(|| err(format!("address {addr:?} lacks 0x prefix")))?;
    let addr = u64::from_str_radix(hex, 16).map_err(|e| err(format!("bad address: {e}")))?;
    if addr > MAX_PHYS_ADDR {
        return Err(err(format!("address {addr:#x} exceeds 2^48")));
    }
    let icount = u64::from_str(icount).map_err(|e| err(format!("bad instruction count: {e}")))?;
    Ok(Some(TraceEvent { kind, addr, icount }))
}

/// Streaming trace parser that also enforces non-decreasing icount.
pub struct TraceReader<R> {
    inner: R,
    buf: String,
    lineno: usize,
    last_icount: u64,
    failed: bool,
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(inner: R) -> Self {
        TraceReader {
            inner,
            buf: String::new(),
            lineno: 0,
            last_icount: 0,
            failed: false,
        }
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<TraceEvent>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            self.buf.clear();
            match self.inner.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e.into()));
                }
            }
            self.lineno += 1;
            match parse_line(&self.buf, self.lineno) {
                Ok(None) => continue,
                Ok(Some(ev)) if ev.icount < self.last_icount => {
                    self.failed = true;
                    return Some(Err(Error::TraceParse {
                        line: self.lineno,
                        reason: format!("icount {} decreases (previous {})", ev.icount, self.last_icount),
                    }));
                }
                Ok(Some(ev)) => {
                    self.last_icount = ev.icount;
                    return Some(Ok(ev));
                }
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            }
        }
    }
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<TraceReader<BufReader<File>>> {
    Ok(TraceReader::new(BufReader::new(File::open(path)?)))
}

pub fn write_trace<W: Write>(out: W, events: impl IntoIterator<Item = TraceEvent>) -> io::Result<()> {
    let mut out = BufWriter::new(out);
    for ev in events {
        writeln!(out, "{ev}")?;
    }
    out.flush()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    #[default]
    Uniform,
    Zipf,
    Hotset,
    Roundrobin,
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeneratorKind::Uniform => "uniform",
            GeneratorKind::Zipf => "zipf",
            GeneratorKind::Hotset => "hotset",
            GeneratorKind::Roundrobin => "roundrobin",
        })
    }
}

/// Parameters of a synthetic workload.
///
/// Pages are indexed by popularity (rank 0 hottest for zipf, the first
/// `hotset_fraction` of pages for hotset) and then laid out region-major over
/// `regions` page-color regions: the first `ceil(pages / regions)` ranks all
/// land in region 0, the next batch in region 1, and so on. With `regions = 1`
/// rank `k` is simply physical page `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub num_events: u64,
    pub write_fraction: f64,
    pub zipf_exponent: f64,
    pub hotset_fraction: f64,
    pub hotset_probability: f64,
    pub page_count: u64,
    pub seed: u64,
    pub instructions_per_access: u64,
    pub page_bytes: u64,
    pub block_bytes: u64,
    pub regions: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            kind: GeneratorKind::Uniform,
            num_events: 100_000,
            write_fraction: 0.3,
            zipf_exponent: 1.0,
            hotset_fraction: 0.1,
            hotset_probability: 0.9,
            page_count: 4096,
            seed: 1,
            instructions_per_access: 5,
            page_bytes: 4096,
            block_bytes: 64,
            regions: 1,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(config_err(format!("{name} = {v} must lie in [0, 1]")))
            }
        };
        unit("write_fraction", self.write_fraction)?;
        unit("hotset_fraction", self.hotset_fraction)?;
        unit("hotset_probability", self.hotset_probability)?;
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return Err(config_err("zipf_exponent must be finite and >= 0"));
        }
        if self.page_count == 0 {
            return Err(config_err("page_count must be positive"));
        }
        if self.instructions_per_access == 0 {
            return Err(config_err("instructions_per_access must be positive"));
        }
        if self.regions == 0 {
            return Err(config_err("regions must be positive"));
        }
        if !self.page_bytes.is_power_of_two()
            || !self.block_bytes.is_power_of_two()
            || self.block_bytes > self.page_bytes
        {
            return Err(config_err("page_bytes and block_bytes must be powers of two with block <= page"));
        }
        let per_region = self.page_count.div_ceil(self.regions);
        let top_page = (per_region - 1)
            .checked_mul(self.regions)
            .and_then(|p| p.checked_add(self.regions - 1));
        match top_page.and_then(|p| p.checked_add(1)).and_then(|p| p.checked_mul(self.page_bytes)) {
            Some(end) if end <= MAX_PHYS_ADDR => {}
            _ => return Err(config_err("generated pages exceed the 48-bit address space")),
        }
        if self.page_count < self.regions {
            log::warn!(
                "page_count {} is below the region count {}; some regions stay idle",
                self.page_count,
                self.regions
            );
        }
        Ok(())
    }

    /// Physical page number of the page with popularity index `k`.
    pub fn physical_page(&self, k: u64) -> u64 {
        let per_region = self.page_count.div_ceil(self.regions);
        let region = k / per_region;
        let slot = k % per_region;
        slot * self.regions + region
    }

    fn hot_pages(&self) -> u64 {
        ((self.hotset_fraction * self.page_count as f64).round() as u64).clamp(1, self.page_count)
    }
}

/// Deterministic event stream for a [`GeneratorSpec`].
pub struct Generator {
    spec: GeneratorSpec,
    rng: ChaCha8Rng,
    cdf: Vec<f64>,
    blocks_per_page: u64,
    hot_pages: u64,
    next: u64,
}

pub fn generate(spec: &GeneratorSpec) -> Result<Generator> {
    spec.validate()?;
    let cdf = if spec.kind == GeneratorKind::Zipf {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = (1..=spec.page_count)
            .map(|rank| {
                acc += (rank as f64).powf(-spec.zipf_exponent);
                acc
            })
            .collect();
        let total = acc;
        cdf.iter_mut().for_each(|c| *c /= total);
        cdf
    } else {
        Vec::new()
    };
    Ok(Generator {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        blocks_per_page: spec.page_bytes / spec.block_bytes,
        hot_pages: spec.hot_pages(),
        cdf,
        next: 0,
        spec: spec.clone(),
    })
}

impl Generator {
    fn pick(&mut self, i: u64) -> (u64, u64) {
        let p = self.spec.page_count;
        let b = self.blocks_per_page;
        match self.spec.kind {
            GeneratorKind::Uniform => (self.rng.gen_range(0..p), self.rng.gen_range(0..b)),
            GeneratorKind::Zipf => {
                let u: f64 = self.rng.gen();
                let k = self.cdf.partition_point(|&c| c <= u).min(p as usize - 1);
                (k as u64, self.rng.gen_range(0..b))
            }
            GeneratorKind::Hotset => {
                let hot = self.hot_pages;
                let page = if hot == p || self.rng.gen_bool(self.spec.hotset_probability) {
                    self.rng.gen_range(0..hot)
                } else {
                    self.rng.gen_range(hot..p)
                };
                (page, self.rng.gen_range(0..b))
            }
            GeneratorKind::Roundrobin => (i % p, (i / p) % b),
        }
    }
}

impl Iterator for Generator {
    type Item = TraceEvent;

    fn next(&mut self) -> Option<TraceEvent> {
        if self.next >= self.spec.num_events {
            return None;
        }
        let i = self.next;
        self.next += 1;
        let (k, block) = self.pick(i);
        let kind = if self.rng.gen_bool(self.spec.write_fraction) {
            AccessKind::Write
        } else {
            AccessKind::Read
        };
        let addr = self.spec.physical_page(k) * self.spec.page_bytes + block * self.spec.block_bytes;
        Some(TraceEvent {
            kind,
            addr,
            icount: (i + 1) * self.spec.instructions_per_access,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.spec.num_events - self.next) as usize;
        (left, Some(left))
    }
}
