//! Set-associative, write-back, write-allocate cache with LRU replacement and
//! per-block write counters.
//!
//! Sets are laid out color-major: color `c` owns sets
//! `[c * sets_per_color, (c + 1) * sets_per_color)`. Which memory region feeds a
//! color is decided by the [`MappingTable`], so the cache itself never needs to
//! know about remapping beyond [`Cache::flush_color`].

use serde::{Deserialize, Serialize};

use crate::color_map::{compute_num_colors, MappingTable};
use crate::error::{config_err, Error, Result};

/// Highest physical address accepted (inclusive).
pub const MAX_PHYS_ADDR: u64 = 1 << 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessKind {
    Read,
    Write,
}

/// Geometry and timing of the simulated last-level cache.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheConfig {
    pub size_bytes: u64,
    pub associativity: u64,
    pub block_bytes: u64,
    pub page_bytes: u64,
    /// Cycles for a read hit.
    pub read_hit_latency: u64,
    /// Cycles for a write hit. Also charged for the cell programming of a fill.
    pub write_hit_latency: u64,
    /// Main memory latency in cycles, charged on every miss.
    pub miss_penalty: u64,
    pub frequency_hz: u64,
}

impl Default for CacheConfig {
    /// 4 MiB, 16-way, 64 B blocks, 4 KiB pages, STT-RAM timings at 2 GHz.
    fn default() -> Self {
        CacheConfig {
            size_bytes: 4 << 20,
            associativity: 16,
            block_bytes: 64,
            page_bytes: 4096,
            read_hit_latency: 2,
            write_hit_latency: 12,
            miss_penalty: 160,
            frequency_hz: 2_000_000_000,
        }
    }
}

impl CacheConfig {
    /// Same timings as the default, different geometry.
    pub fn with_geometry(size_bytes: u64, associativity: u64, block_bytes: u64, page_bytes: u64) -> Self {
        CacheConfig {
            size_bytes,
            associativity,
            block_bytes,
            page_bytes,
            ..Default::default()
        }
    }

    /// Validates the configuration and derives set/color counts.
    pub fn geometry(&self) -> Result<Geometry> {
        for (name, v) in [
            ("size_bytes", self.size_bytes),
            ("associativity", self.associativity),
            ("block_bytes", self.block_bytes),
            ("page_bytes", self.page_bytes),
        ] {
            if !v.is_power_of_two() {
                return Err(config_err(format!("{name} = {v} must be a power of two")));
            }
        }
        if self.block_bytes > self.page_bytes || self.page_bytes > self.size_bytes {
            return Err(config_err(
                "need block_bytes <= page_bytes <= size_bytes",
            ));
        }
        if self.frequency_hz == 0 {
            return Err(config_err("frequency_hz must be positive"));
        }
        let set_bytes = self.block_bytes * self.associativity;
        if set_bytes > self.size_bytes {
            return Err(config_err("cache smaller than a single set"));
        }
        let num_sets = self.size_bytes / set_bytes;
        let num_colors = compute_num_colors(self)?;
        let sets_per_color = self.page_bytes / self.block_bytes;
        debug_assert_eq!(num_colors as u64 * sets_per_color, num_sets);
        Ok(Geometry {
            num_sets: num_sets as usize,
            ways: self.associativity as usize,
            num_colors,
            sets_per_color: sets_per_color as usize,
            block_bytes: self.block_bytes,
            page_bytes: self.page_bytes,
        })
    }
}

/// Derived, validated cache shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub num_sets: usize,
    pub ways: usize,
    pub num_colors: usize,
    pub sets_per_color: usize,
    pub block_bytes: u64,
    pub page_bytes: u64,
}

/// Where an address lands in the cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Location {
    pub region: usize,
    pub color: usize,
    pub set: usize,
    pub tag: u64,
}

impl Geometry {
    pub fn num_blocks(&self) -> usize {
        self.num_sets * self.ways
    }

    /// Memory region of a physical address: the low bits of its page number.
    pub fn region_of(&self, addr: u64) -> usize {
        ((addr / self.page_bytes) % self.num_colors as u64) as usize
    }

    /// Splits a physical address into set index and tag through `map`.
    ///
    /// The tag holds only the page-number bits above the region bits, so a
    /// remapped region keeps matching its own tags.
    pub fn decompose(&self, addr: u64, map: &MappingTable) -> Result<Location> {
        if map.len() != self.num_colors {
            return Err(config_err(format!(
                "mapping table has {} entries, cache has {} colors",
                map.len(),
                self.num_colors
            )));
        }
        if addr > MAX_PHYS_ADDR {
            return Err(config_err(format!("address {addr:#x} exceeds 48-bit space")));
        }
        let page = addr / self.page_bytes;
        let region = (page % self.num_colors as u64) as usize;
        let color = map.color_of(region);
        let within = ((addr % self.page_bytes) / self.block_bytes) as usize;
        Ok(Location {
            region,
            color,
            set: color * self.sets_per_color + within,
            tag: page / self.num_colors as u64,
        })
    }

    /// Range of set indices belonging to `color`.
    pub fn color_sets(&self, color: usize) -> std::ops::Range<usize> {
        color * self.sets_per_color..(color + 1) * self.sets_per_color
    }

    pub fn color_of_set(&self, set: usize) -> usize {
        set / self.sets_per_color
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheBlock {
    pub tag: u64,
    pub valid: bool,
    pub dirty: bool,
    /// 0 is most recently used, `ways - 1` is the replacement victim.
    pub lru_rank: u32,
    /// Physical writes to this block's cells since the start of the run.
    pub write_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AccessOutcome {
    pub hit: bool,
    /// A valid dirty victim was written back to memory.
    pub evicted_dirty: bool,
    pub fill_occurred: bool,
    /// The access bumped a block's write counter.
    pub block_written: bool,
    pub latency: u64,
}

/// Cache contents plus the wear counters of every physical block.
#[derive(Debug, Clone)]
pub struct Cache {
    geom: Geometry,
    read_hit_latency: u64,
    write_hit_latency: u64,
    miss_penalty: u64,
    count_fills: bool,
    blocks: Vec<CacheBlock>,
}

impl Cache {
    /// Builds an empty cache. With `count_fills` off, only demand writes (write
    /// hits and write-miss fills) bump block write counters.
    pub fn new(cfg: &CacheConfig, count_fills: bool) -> Result<Self> {
        let geom = cfg.geometry()?;
        let blocks = (0..geom.num_sets)
            .flat_map(|_| {
                (0..geom.ways).map(|w| CacheBlock {
                    tag: 0,
                    valid: false,
                    dirty: false,
                    lru_rank: w as u32,
                    write_count: 0,
                })
            })
            .collect();
        Ok(Cache {
            geom,
            read_hit_latency: cfg.read_hit_latency,
            write_hit_latency: cfg.write_hit_latency,
            miss_penalty: cfg.miss_penalty,
            count_fills,
            blocks,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    pub fn blocks(&self) -> &[CacheBlock] {
        &self.blocks
    }

    pub fn set(&self, set: usize) -> &[CacheBlock] {
        let w = self.geom.ways;
        &self.blocks[set * w..(set + 1) * w]
    }

    fn set_mut(&mut self, set: usize) -> &mut [CacheBlock] {
        let w = self.geom.ways;
        &mut self.blocks[set * w..(set + 1) * w]
    }

    /// Performs one demand access to `set` looking for `tag`.
    pub fn access(&mut self, set: usize, tag: u64, kind: AccessKind) -> AccessOutcome {
        assert!(set < self.geom.num_sets, "set {set} out of range");
        let ways = self.geom.ways as u32;
        let (read_lat, write_lat, miss_pen, count_fills) = (
            self.read_hit_latency,
            self.write_hit_latency,
            self.miss_penalty,
            self.count_fills,
        );
        let lines = self.set_mut(set);

        if let Some(way) = lines.iter().position(|b| b.valid && b.tag == tag) {
            promote(lines, way);
            let block = &mut lines[way];
            return match kind {
                AccessKind::Read => AccessOutcome {
                    hit: true,
                    latency: read_lat,
                    ..Default::default()
                },
                AccessKind::Write => {
                    block.dirty = true;
                    block.write_count += 1;
                    AccessOutcome {
                        hit: true,
                        block_written: true,
                        latency: write_lat,
                        ..Default::default()
                    }
                }
            };
        }

        let victim = lines
            .iter()
            .position(|b| b.lru_rank == ways - 1)
            .expect("lru ranks form a permutation");
        let evicted_dirty = lines[victim].valid && lines[victim].dirty;
        promote(lines, victim);
        let block = &mut lines[victim];
        block.tag = tag;
        block.valid = true;
        block.dirty = kind == AccessKind::Write;
        let block_written = count_fills || kind == AccessKind::Write;
        if block_written {
            block.write_count += 1;
        }
        AccessOutcome {
            hit: false,
            evicted_dirty,
            fill_occurred: true,
            block_written,
            latency: miss_pen + write_lat,
        }
    }

    /// Invalidates every block of `color`, returning how many dirty blocks had
    /// to be written back. Write counters survive.
    pub fn flush_color(&mut self, color: usize) -> Result<u64> {
        if color >= self.geom.num_colors {
            return Err(Error::ColorOutOfRange {
                color,
                num_colors: self.geom.num_colors,
            });
        }
        let w = self.geom.ways;
        let range = self.geom.color_sets(color);
        let mut writebacks = 0;
        for b in &mut self.blocks[range.start * w..range.end * w] {
            if b.valid && b.dirty {
                writebacks += 1;
            }
            b.valid = false;
            b.dirty = false;
        }
        Ok(writebacks)
    }

    pub fn max_block_writes(&self) -> u64 {
        self.blocks.iter().map(|b| b.write_count).max().unwrap_or(0)
    }

    pub fn total_block_writes(&self) -> u64 {
        self.blocks.iter().map(|b| b.write_count).sum()
    }

    pub fn write_counts(&self) -> impl Iterator<Item = u64> + '_ {
        self.blocks.iter().map(|b| b.write_count)
    }

    /// Cumulative block writes summed per color.
    pub fn color_write_totals(&self) -> Vec<u64> {
        let per_color = self.geom.sets_per_color * self.geom.ways;
        self.blocks
            .chunks(per_color)
            .map(|c| c.iter().map(|b| b.write_count).sum())
            .collect()
    }
}

fn promote(lines: &mut [CacheBlock], way: usize) {
    let rank = lines[way].lru_rank;
    for b in lines.iter_mut() {
        if b.lru_rank < rank {
            b.lru_rank += 1;
        }
    }
    lines[way].lru_rank = 0;
}
