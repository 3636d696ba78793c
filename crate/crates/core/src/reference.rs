//! Naive reference cache used as a differential oracle.
//!
//! Everything here is written the slow, obvious way: per-set line vectors, an
//! explicit most-recent-first recency list, linear searches, and its own copy
//! of the region-to-color table. It shares no code with [`crate::cache`] or
//! [`crate::color_map`] beyond [`AccessKind`] and [`CacheConfig`].

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cache::{AccessKind, Cache, CacheConfig};
use crate::color_map::{apply_remap, MappingTable};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RefLine {
    pub tag: u64,
    pub valid: bool,
    pub dirty: bool,
    pub writes: u64,
}

#[derive(Debug, Clone)]
struct RefSet {
    lines: Vec<RefLine>,
    /// Way indices, most recently used first.
    recency: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefOutcome {
    pub hit: bool,
    pub evicted_dirty: bool,
}

#[derive(Debug, Clone)]
pub struct ReferenceCache {
    sets: Vec<RefSet>,
    colors: usize,
    sets_per_color: u64,
    page_bytes: u64,
    block_bytes: u64,
    count_fills: bool,
    /// region -> color
    table: Vec<usize>,
}

impl ReferenceCache {
    pub fn new(cfg: &CacheConfig, count_fills: bool) -> Self {
        let sets = (cfg.size_bytes / cfg.block_bytes / cfg.associativity) as usize;
        let colors = (cfg.size_bytes / cfg.page_bytes / cfg.associativity) as usize;
        let ways = cfg.associativity as usize;
        ReferenceCache {
            sets: vec![
                RefSet {
                    lines: vec![RefLine::default(); ways],
                    recency: (0..ways).collect(),
                };
                sets
            ],
            colors,
            sets_per_color: cfg.page_bytes / cfg.block_bytes,
            page_bytes: cfg.page_bytes,
            block_bytes: cfg.block_bytes,
            count_fills,
            table: (0..colors).collect(),
        }
    }

    fn locate(&self, addr: u64) -> (usize, u64) {
        let page = addr / self.page_bytes;
        let region = page % self.colors as u64;
        let color = self.table[region as usize] as u64;
        let set = color * self.sets_per_color + (addr % self.page_bytes) / self.block_bytes;
        (set as usize, page / self.colors as u64)
    }

    pub fn access(&mut self, addr: u64, kind: AccessKind) -> RefOutcome {
        let (s, tag) = self.locate(addr);
        let count_fills = self.count_fills;
        let set = &mut self.sets[s];
        let mut found = None;
        for way in 0..set.lines.len() {
            if set.lines[way].valid && set.lines[way].tag == tag {
                found = Some(way);
            }
        }
        match found {
            Some(way) => {
                let pos = set.recency.iter().position(|&w| w == way).unwrap();
                set.recency.remove(pos);
                set.recency.insert(0, way);
                if kind == AccessKind::Write {
                    set.lines[way].dirty = true;
                    set.lines[way].writes += 1;
                }
                RefOutcome { hit: true, evicted_dirty: false }
            }
            None => {
                let way = set.recency.pop().unwrap();
                set.recency.insert(0, way);
                let line = &mut set.lines[way];
                let evicted_dirty = line.valid && line.dirty;
                line.tag = tag;
                line.valid = true;
                line.dirty = kind == AccessKind::Write;
                if count_fills || kind == AccessKind::Write {
                    line.writes += 1;
                }
                RefOutcome { hit: false, evicted_dirty }
            }
        }
    }

    pub fn flush_color(&mut self, color: usize) -> u64 {
        let mut dirty = 0;
        for s in 0..self.sets.len() {
            if s as u64 / self.sets_per_color != color as u64 {
                continue;
            }
            for line in &mut self.sets[s].lines {
                if line.valid && line.dirty {
                    dirty += 1;
                }
                line.valid = false;
                line.dirty = false;
            }
        }
        dirty
    }

    /// Exchanges the regions of two colors and flushes both.
    pub fn swap_colors(&mut self, c1: usize, c2: usize) -> u64 {
        if c1 == c2 {
            return 0;
        }
        let r1 = (0..self.colors).find(|&r| self.table[r] == c1).unwrap();
        let r2 = (0..self.colors).find(|&r| self.table[r] == c2).unwrap();
        self.table[r1] = c2;
        self.table[r2] = c1;
        self.flush_color(c1) + self.flush_color(c2)
    }

    /// Lines of every set in set-then-way order.
    pub fn lines(&self) -> Vec<RefLine> {
        self.sets.iter().flat_map(|s| s.lines.iter().cloned()).collect()
    }
}

/// One step of a differential trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Access(u64, AccessKind),
    Swap(usize, usize),
}

/// Random mix of accesses over a small page pool with occasional swaps.
pub fn random_ops(rng: &mut impl Rng, cfg: &CacheConfig, len: usize) -> Vec<Op> {
    let colors = (cfg.size_bytes / cfg.page_bytes / cfg.associativity) as usize;
    let pages = rng.gen_range(1..=(4 * colors as u64 * cfg.associativity));
    let swap_rate = rng.gen_range(0.0..0.05);
    (0..len)
        .map(|_| {
            if rng.gen_bool(swap_rate) {
                Op::Swap(rng.gen_range(0..colors), rng.gen_range(0..colors))
            } else {
                let addr = rng.gen_range(0..pages) * cfg.page_bytes + rng.gen_range(0..cfg.page_bytes);
                let kind = if rng.gen_bool(0.4) { AccessKind::Write } else { AccessKind::Read };
                Op::Access(addr, kind)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DiffSummary {
    pub traces: u64,
    pub ops: u64,
    pub hits: u64,
    pub misses: u64,
    pub writebacks: u64,
    pub flush_writebacks: u64,
}

#[derive(Debug, Clone)]
pub struct Mismatch {
    pub trace: u64,
    pub step: usize,
    pub detail: String,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "trace {} step {}: {}", self.trace, self.step, self.detail)
    }
}

impl std::error::Error for Mismatch {}

/// Replays `ops` through both simulators, comparing every outcome and the
/// full block state periodically and at the end.
pub fn replay_both(cfg: &CacheConfig, count_fills: bool, ops: &[Op], trace: u64, summary: &mut DiffSummary) -> Result<(), Mismatch> {
    let fail = |step: usize, detail: String| Mismatch { trace, step, detail };
    let mut fast = Cache::new(cfg, count_fills).map_err(|e| fail(0, e.to_string()))?;
    let geom = *fast.geometry();
    let mut map = MappingTable::identity(geom.num_colors);
    let mut naive = ReferenceCache::new(cfg, count_fills);

    let compare_state = |fast: &Cache, naive: &ReferenceCache, step: usize| -> Result<(), Mismatch> {
        for (i, (a, b)) in fast.blocks().iter().zip(naive.lines()).enumerate() {
            if a.valid != b.valid || a.write_count != b.writes || (a.valid && (a.tag != b.tag || a.dirty != b.dirty)) {
                return Err(fail(step, format!("block {i}: fast {a:?} vs naive {b:?}")));
            }
        }
        Ok(())
    };

    for (step, op) in ops.iter().enumerate() {
        match *op {
            Op::Access(addr, kind) => {
                let loc = geom.decompose(addr, &map).map_err(|e| fail(step, e.to_string()))?;
                let a = fast.access(loc.set, loc.tag, kind);
                let b = naive.access(addr, kind);
                if a.hit != b.hit || a.evicted_dirty != b.evicted_dirty {
                    return Err(fail(step, format!("{op:?}: fast {a:?} vs naive {b:?}")));
                }
                if a.hit {
                    summary.hits += 1;
                } else {
                    summary.misses += 1;
                }
                summary.writebacks += a.evicted_dirty as u64;
            }
            Op::Swap(c1, c2) => {
                let a = apply_remap(&mut map, &mut fast, &[(c1, c2)]).map_err(|e| fail(step, e.to_string()))?;
                let b = naive.swap_colors(c1, c2);
                if a != b {
                    return Err(fail(step, format!("{op:?}: fast wrote back {a}, naive {b}")));
                }
                summary.flush_writebacks += a;
            }
        }
        if step % 1024 == 1023 {
            compare_state(&fast, &naive, step)?;
        }
    }
    compare_state(&fast, &naive, ops.len())?;
    summary.traces += 1;
    summary.ops += ops.len() as u64;
    Ok(())
}

/// Runs `traces` random traces of up to `max_len` ops against `cfg`.
pub fn differential(cfg: &CacheConfig, seed: u64, traces: u64, max_len: usize) -> Result<DiffSummary, Mismatch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = DiffSummary::default();
    for t in 0..traces {
        let len = rng.gen_range(1..=max_len);
        let count_fills = rng.gen_bool(0.5);
        let ops = random_ops(&mut rng, cfg, len);
        replay_both(cfg, count_fills, &ops, t, &mut summary)?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_lru_two_way() {
        let cfg = CacheConfig::with_geometry(4 * 256 * 2, 2, 64, 256);
        let mut r = ReferenceCache::new(&cfg, true);
        // same set: pages 0, 4, 8 (region 0)
        assert!(!r.access(0, AccessKind::Write).hit);
        assert!(!r.access(4 * 256, AccessKind::Read).hit);
        let o = r.access(8 * 256, AccessKind::Read);
        assert!(!o.hit && o.evicted_dirty);
    }

    #[test]
    fn small_differential_passes() {
        for ways in [1, 2, 4] {
            let cfg = CacheConfig::with_geometry(4 * 256 * ways, ways, 64, 256);
            let s = differential(&cfg, ways, 50, 2000).unwrap();
            assert_eq!(s.traces, 50);
            assert!(s.hits > 0 && s.misses > 0);
        }
    }
}
