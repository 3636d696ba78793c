//! Region-to-color mapping layer.
//!
//! Physical pages are grouped into `N` memory regions by the low bits of their
//! page number, and each region is routed to exactly one cache color. Changing
//! the routing moves a region's whole working set to different sets, at the
//! cost of flushing the colors involved.

use crate::cache::{Cache, CacheConfig};
use crate::error::{config_err, Error, Result};

/// Number of cache colors: `size / (page × associativity)`.
pub fn compute_num_colors(cfg: &CacheConfig) -> Result<usize> {
    let denom = cfg
        .page_bytes
        .checked_mul(cfg.associativity)
        .filter(|&d| d > 0)
        .ok_or_else(|| config_err("page_bytes × associativity must be positive"))?;
    if !cfg.size_bytes.is_multiple_of(denom) || cfg.size_bytes / denom == 0 {
        return Err(config_err(format!(
            "cache size {} is not a positive multiple of page × associativity = {}",
            cfg.size_bytes, denom
        )));
    }
    Ok((cfg.size_bytes / denom) as usize)
}

/// Bijection between memory regions and cache colors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingTable {
    color_of: Vec<usize>,
    region_of: Vec<usize>,
}

impl MappingTable {
    pub fn identity(n: usize) -> Self {
        MappingTable {
            color_of: (0..n).collect(),
            region_of: (0..n).collect(),
        }
    }

    /// Builds a table from a region-indexed color list. Fails unless `color_of`
    /// is a permutation of `0..len`.
    pub fn from_colors(color_of: Vec<usize>) -> Result<Self> {
        let n = color_of.len();
        let mut region_of = vec![usize::MAX; n];
        for (region, &color) in color_of.iter().enumerate() {
            if color >= n || region_of[color] != usize::MAX {
                return Err(config_err("mapping is not a permutation"));
            }
            region_of[color] = region;
        }
        Ok(MappingTable { color_of, region_of })
    }

    pub fn len(&self) -> usize {
        self.color_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.color_of.is_empty()
    }

    pub fn color_of(&self, region: usize) -> usize {
        self.color_of[region]
    }

    pub fn region_of(&self, color: usize) -> usize {
        self.region_of[color]
    }

    /// Region-indexed view of the table.
    pub fn colors(&self) -> &[usize] {
        &self.color_of
    }

    pub fn is_identity(&self) -> bool {
        self.color_of.iter().enumerate().all(|(r, &c)| r == c)
    }

    fn check(&self, color: usize) -> Result<()> {
        if color < self.len() {
            Ok(())
        } else {
            Err(Error::ColorOutOfRange {
                color,
                num_colors: self.len(),
            })
        }
    }

    /// Exchanges the regions routed to colors `c1` and `c2`. No-op when equal.
    pub fn swap(&mut self, c1: usize, c2: usize) -> Result<()> {
        self.check(c1)?;
        self.check(c2)?;
        if c1 == c2 {
            return Ok(());
        }
        let (r1, r2) = (self.region_of[c1], self.region_of[c2]);
        self.color_of[r1] = c2;
        self.color_of[r2] = c1;
        self.region_of.swap(c1, c2);
        Ok(())
    }
}

/// Applies `swaps` in order, flushing both colors of every non-trivial pair.
/// Returns the number of dirty blocks written back. Nothing changes if any
/// pair references an invalid color.
pub fn apply_remap(map: &mut MappingTable, cache: &mut Cache, swaps: &[(usize, usize)]) -> Result<u64> {
    let n = cache.geometry().num_colors;
    if map.len() != n {
        return Err(config_err("mapping table does not match cache"));
    }
    for &(a, b) in swaps {
        map.check(a)?;
        map.check(b)?;
    }
    let mut writebacks = 0;
    for &(a, b) in swaps {
        if a == b {
            continue;
        }
        map.swap(a, b)?;
        writebacks += cache.flush_color(a)? + cache.flush_color(b)?;
    }
    Ok(writebacks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::AccessKind;
    use proptest::prelude::*;

    #[test]
    fn color_counts() {
        assert_eq!(compute_num_colors(&CacheConfig::default()).unwrap(), 64);
        let cfg = CacheConfig::with_geometry(2 << 20, 8, 64, 4096);
        assert_eq!(compute_num_colors(&cfg).unwrap(), 64);
        let cfg = CacheConfig::with_geometry(4096 * 16, 16, 64, 4096);
        assert_eq!(compute_num_colors(&cfg).unwrap(), 1);
        let cfg = CacheConfig::with_geometry(4096, 16, 64, 4096);
        assert!(compute_num_colors(&cfg).is_err());
    }

    #[test]
    fn swap_examples() {
        let mut m = MappingTable::identity(8);
        m.swap(0, 3).unwrap();
        assert_eq!(&m.colors()[..4], &[3, 1, 2, 0]);
        assert_eq!(m.region_of(3), 0);
        let before = m.clone();
        m.swap(2, 2).unwrap();
        assert_eq!(m, before);
        m.swap(0, 3).unwrap();
        assert!(m.is_identity());
        assert!(m.swap(0, 8).is_err());
    }

    #[test]
    fn from_colors_validates() {
        assert!(MappingTable::from_colors(vec![1, 0, 2]).is_ok());
        assert!(MappingTable::from_colors(vec![1, 1, 2]).is_err());
        assert!(MappingTable::from_colors(vec![0, 3, 1]).is_err());
    }

    fn tiny_cache() -> Cache {
        Cache::new(&CacheConfig::with_geometry(4 * 256 * 4, 4, 64, 256), true).unwrap()
    }

    #[test]
    fn apply_remap_sums_writebacks() {
        let mut cache = tiny_cache();
        let mut map = MappingTable::identity(4);
        assert_eq!(apply_remap(&mut map, &mut cache, &[]).unwrap(), 0);
        // color 0: 2 dirty; color 2: 3 dirty; color 1: 1 dirty (untouched)
        for s in [0, 1] {
            cache.access(s, 1, AccessKind::Write);
        }
        for s in [8, 9, 10] {
            cache.access(s, 1, AccessKind::Write);
        }
        cache.access(4, 1, AccessKind::Write);
        assert_eq!(apply_remap(&mut map, &mut cache, &[(0, 0)]).unwrap(), 0);
        assert!(map.is_identity());
        assert_eq!(apply_remap(&mut map, &mut cache, &[(0, 2)]).unwrap(), 5);
        assert_eq!(map.colors(), &[2, 1, 0, 3]);
        assert!(cache.access(4, 1, AccessKind::Read).hit);
    }

    #[test]
    fn apply_remap_is_atomic_on_error() {
        let mut cache = tiny_cache();
        let mut map = MappingTable::identity(4);
        assert!(apply_remap(&mut map, &mut cache, &[(0, 1), (0, 9)]).is_err());
        assert!(map.is_identity());
    }

    proptest! {
        #[test]
        fn swaps_preserve_bijection(n in 1usize..40, ops in prop::collection::vec((0usize..40, 0usize..40), 0..200)) {
            let mut m = MappingTable::identity(n);
            for (a, b) in ops {
                let _ = m.swap(a % n, b % n);
            }
            let mut sorted = m.colors().to_vec();
            sorted.sort_unstable();
            prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
            for r in 0..n {
                prop_assert_eq!(m.region_of(m.color_of(r)), r);
            }
        }

        #[test]
        fn remap_touches_only_swapped_colors(ops in prop::collection::vec((0usize..4, 0usize..4), 1..6)) {
            let mut cache = tiny_cache();
            let mut map = MappingTable::identity(4);
            let before = map.clone();
            apply_remap(&mut map, &mut cache, &ops).unwrap();
            let touched: Vec<usize> = ops.iter().filter(|(a, b)| a != b).flat_map(|&(a, b)| [a, b]).collect();
            for c in 0..4 {
                if !touched.contains(&c) {
                    prop_assert_eq!(map.region_of(c), before.region_of(c));
                }
            }
            let g = *cache.geometry();
            for region in 0..4u64 {
                let loc = g.decompose(region * 256 + 64, &map).unwrap();
                prop_assert!(g.color_sets(map.color_of(region as usize)).contains(&loc.set));
            }
        }
    }
}
