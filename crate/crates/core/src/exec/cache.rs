//! Set-associative LRU cache simulation over access traces. Writes allocate
//! like reads; there is no dirty state.

use thiserror::Error;

use super::{trace_accesses, Access, ExecError};
use crate::lower::LoopNest;

/// Alignment of every array's base address.
pub const ARRAY_ALIGN: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CacheError {
    #[error("{0} must be a power of two, got {1}")]
    NotPowerOfTwo(&'static str, usize),
    #[error("capacity {capacity} is not a multiple of line {line} times ways {ways}")]
    Geometry { capacity: usize, line: usize, ways: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheConfig {
    pub line_bytes: usize,
    pub capacity_bytes: usize,
    pub associativity: usize,
    pub element_bytes: usize,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig { line_bytes: 64, capacity_bytes: 32 * 1024, associativity: 8, element_bytes: 8 }
    }
}

impl CacheConfig {
    pub fn validate(&self) -> Result<(), CacheError> {
        for (what, v) in [
            ("line size", self.line_bytes),
            ("capacity", self.capacity_bytes),
            ("associativity", self.associativity),
            ("element size", self.element_bytes),
        ] {
            if !v.is_power_of_two() {
                return Err(CacheError::NotPowerOfTwo(what, v));
            }
        }
        let (capacity, line, ways) = (self.capacity_bytes, self.line_bytes, self.associativity);
        if capacity % (line * ways) != 0 {
            return Err(CacheError::Geometry { capacity, line, ways });
        }
        Ok(())
    }

    pub fn sets(&self) -> usize {
        self.capacity_bytes / (self.line_bytes * self.associativity)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub hits: u64,
    pub misses: u64,
    /// Lines of this array pushed out by any access.
    pub evictions: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub per_array: Vec<Counts>,
    pub total: Counts,
    /// Statistics of the next level, which sees only this level's misses.
    pub next: Option<Box<CacheStats>>,
}

impl CacheStats {
    pub fn accesses(&self) -> u64 {
        self.total.hits + self.total.misses
    }
}

#[derive(Debug, Clone, Copy)]
struct Way {
    tag: u64,
    owner: usize,
    stamp: u64,
}

/// One cache level, optionally backed by another.
#[derive(Debug, Clone)]
pub struct Cache {
    cfg: CacheConfig,
    line_shift: u32,
    set_mask: u64,
    ways: Vec<Option<Way>>,
    clock: u64,
    stats: CacheStats,
    next: Option<Box<Cache>>,
}

impl Cache {
    pub fn new(cfg: CacheConfig, arrays: usize) -> Result<Cache, CacheError> {
        cfg.validate()?;
        Ok(Cache {
            cfg,
            line_shift: cfg.line_bytes.trailing_zeros(),
            set_mask: cfg.sets() as u64 - 1,
            ways: vec![None; cfg.sets() * cfg.associativity],
            clock: 0,
            stats: CacheStats { per_array: vec![Counts::default(); arrays], ..CacheStats::default() },
            next: None,
        })
    }

    pub fn with_next(mut self, next: Cache) -> Cache {
        self.next = Some(Box::new(next));
        self
    }

    /// Touches the line holding byte `addr`; returns whether it hit.
    pub fn access(&mut self, array: usize, addr: u64) -> bool {
        self.clock += 1;
        let line = addr >> self.line_shift;
        let set = (line & self.set_mask) as usize;
        let k = self.cfg.associativity;
        let ways = &mut self.ways[set * k..(set + 1) * k];
        let counts = &mut self.stats.per_array[array];
        if let Some(w) = ways.iter_mut().flatten().find(|w| w.tag == line) {
            w.stamp = self.clock;
            counts.hits += 1;
            self.stats.total.hits += 1;
            return true;
        }
        counts.misses += 1;
        self.stats.total.misses += 1;
        let victim = match ways.iter().position(Option::is_none) {
            Some(free) => free,
            None => {
                let (i, old) = ways
                    .iter()
                    .enumerate()
                    .filter_map(|(i, w)| w.map(|w| (i, w)))
                    .min_by_key(|(_, w)| w.stamp)
                    .expect("a full set has ways");
                self.stats.per_array[old.owner].evictions += 1;
                self.stats.total.evictions += 1;
                i
            }
        };
        ways[victim] = Some(Way { tag: line, owner: array, stamp: self.clock });
        if let Some(next) = &mut self.next {
            next.access(array, addr);
        }
        false
    }

    pub fn stats(&self) -> CacheStats {
        let mut s = self.stats.clone();
        s.next = self.next.as_ref().map(|n| Box::new(n.stats()));
        s
    }
}

/// Disjoint base addresses, each aligned to [`ARRAY_ALIGN`].
pub fn array_bases(lens: &[usize], element_bytes: usize) -> Vec<u64> {
    let mut next = 0usize;
    lens.iter()
        .map(|&len| {
            let base = next;
            next = (base + len * element_bytes).div_ceil(ARRAY_ALIGN) * ARRAY_ALIGN;
            base as u64
        })
        .collect()
}

/// Runs `trace` through a cache over arrays of the given lengths.
pub fn simulate(
    trace: impl IntoIterator<Item = Access>,
    lens: &[usize],
    cfg: CacheConfig,
    l2: Option<CacheConfig>,
) -> Result<CacheStats, CacheError> {
    let mut cache = hierarchy(cfg, l2, lens.len())?;
    let bases = array_bases(lens, cfg.element_bytes);
    for a in trace {
        cache.access(a.array, bases[a.array] + (a.offset * cfg.element_bytes) as u64);
    }
    Ok(cache.stats())
}

fn hierarchy(cfg: CacheConfig, l2: Option<CacheConfig>, arrays: usize) -> Result<Cache, CacheError> {
    let l1 = Cache::new(cfg, arrays)?;
    Ok(match l2 {
        Some(c) => l1.with_next(Cache::new(c, arrays)?),
        None => l1,
    })
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

/// Simulates one execution of `nest`, streaming its trace.
pub fn simulate_nest(nest: &LoopNest, cfg: CacheConfig, l2: Option<CacheConfig>) -> Result<CacheStats, SimError> {
    let lens: Vec<usize> = nest.arrays.iter().map(|a| a.len).collect();
    let mut cache = hierarchy(cfg, l2, lens.len())?;
    let bases = array_bases(&lens, cfg.element_bytes);
    trace_accesses(nest, &mut |a| {
        cache.access(a.array, bases[a.array] + (a.offset * cfg.element_bytes) as u64);
    })?;
    Ok(cache.stats())
}
