//! The uniform cache interface and the set-array machinery shared by the designs.

use rand::Rng;
use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::addr::{AccessKind, DomainId, Line, LineAddress, MemoryRegion};
use crate::designs::DesignKind;
use crate::error::{Error, Result};
use crate::policy::{PolicyState, ReplacementPolicy};
use crate::stats::CacheStatistics;

/// Verdict of one cache request.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AccessOutcome {
    pub hit: bool,
    /// Line removed by this access, if any. Never set on hits or invalidations.
    pub evicted: Option<Line>,
}

impl AccessOutcome {
    pub const HIT: AccessOutcome = AccessOutcome {
        hit: true,
        evicted: None,
    };

    pub fn miss(evicted: Option<Line>) -> Self {
        AccessOutcome {
            hit: false,
            evicted,
        }
    }
}

/// Capacity and associativity of a cache.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CacheGeometry {
    pub lines: usize,
    pub ways: usize,
}

impl CacheGeometry {
    pub fn new(lines: usize, ways: usize) -> Result<Self> {
        if lines == 0 || ways == 0 {
            return Err(Error::config("cache needs at least one line and one way"));
        }
        if !lines.is_multiple_of(ways) {
            return Err(Error::config(format!(
                "{lines} lines are not divisible by {ways} ways"
            )));
        }
        Ok(CacheGeometry { lines, ways })
    }

    pub fn sets(&self) -> usize {
        self.lines / self.ways
    }

    /// log2(sets); errors if the set count is not a power of two.
    pub fn index_bits(&self) -> Result<u32> {
        let sets = self.sets();
        if !sets.is_power_of_two() {
            return Err(Error::config(format!(
                "indexed designs need a power-of-two set count, got {sets}"
            )));
        }
        Ok(sets.trailing_zeros())
    }
}

/// Common interface of every cache design.
///
/// A cache instance is driven by one thread at a time; instances are `Send`
/// so experiment repetitions can run on a worker pool.
pub trait CacheModel: Send {
    /// Serves a read, write or invalidation of `addr` on behalf of `domain`.
    fn access(
        &mut self,
        addr: LineAddress,
        domain: DomainId,
        kind: AccessKind,
    ) -> Result<AccessOutcome>;

    /// Whether the line is resident. Never touches replacement state or statistics.
    fn contains(&self, addr: LineAddress, domain: DomainId) -> bool;

    /// Empties the cache. Configuration and RNG position are kept.
    fn flush_all(&mut self);

    fn statistics(&self) -> &CacheStatistics;

    fn reset_statistics(&mut self);

    fn geometry(&self) -> CacheGeometry;

    fn design(&self) -> DesignKind;

    /// Number of resident lines.
    fn resident_lines(&self) -> usize;

    /// Lines `domain` can occupy simultaneously given current pins.
    fn capacity_for(&self, domain: DomainId) -> usize {
        let _ = domain;
        self.geometry().lines
    }

    /// Structural collision oracle: can a fill of `a` ever displace `b`?
    fn collides(&self, a: Line, b: Line) -> bool;

    /// Loads `addr` and locks it against eviction by other domains.
    /// Returns `Ok(false)` for designs without pinning.
    fn pin(&mut self, addr: LineAddress, domain: DomainId) -> Result<bool> {
        let _ = (addr, domain);
        Ok(false)
    }

    fn domain_count(&self) -> usize {
        self.statistics().domain_count()
    }

    fn read(&mut self, addr: LineAddress, domain: DomainId) -> Result<AccessOutcome> {
        self.access(addr, domain, AccessKind::Read)
    }
}

/// Memory-handle entry point: access `offset` of `region` with the region's domain.
pub fn access_region(
    cache: &mut dyn CacheModel,
    region: &MemoryRegion,
    offset: u64,
    kind: AccessKind,
) -> Result<AccessOutcome> {
    let addr = region.line(offset)?;
    cache.access(addr, region.domain(), kind)
}

pub(crate) fn check_domain(domain: DomainId, count: usize) -> Result<()> {
    if domain.index() < count {
        Ok(())
    } else {
        Err(Error::UnknownDomain(domain))
    }
}

const EMPTY: u64 = u64::MAX;

/// Flat slot storage with an address index for O(1) lookups.
#[derive(Clone, Debug)]
pub(crate) struct LineStore {
    keys: Vec<u64>,
    pinned: Vec<bool>,
    index: FxHashMap<u64, u32>,
}

impl LineStore {
    pub(crate) fn new(slots: usize) -> Self {
        let mut index = FxHashMap::default();
        index.reserve(slots);
        LineStore {
            keys: vec![EMPTY; slots],
            pinned: vec![false; slots],
            index,
        }
    }

    #[inline]
    pub(crate) fn find(&self, line: Line) -> Option<usize> {
        self.index.get(&line.key()).map(|&s| s as usize)
    }

    #[inline]
    pub(crate) fn get(&self, slot: usize) -> Option<Line> {
        let k = self.keys[slot];
        (k != EMPTY).then(|| Line::from_key(k))
    }

    #[inline]
    pub(crate) fn is_pinned(&self, slot: usize) -> bool {
        self.pinned[slot]
    }

    pub(crate) fn set_pinned(&mut self, slot: usize, pinned: bool) {
        self.pinned[slot] = pinned;
    }

    /// Installs `line` at `slot`, returning the previous occupant.
    #[inline]
    pub(crate) fn put(&mut self, slot: usize, line: Line) -> Option<Line> {
        let old = self.remove(slot);
        self.keys[slot] = line.key();
        self.index.insert(line.key(), slot as u32);
        old
    }

    #[inline]
    pub(crate) fn remove(&mut self, slot: usize) -> Option<Line> {
        let k = std::mem::replace(&mut self.keys[slot], EMPTY);
        self.pinned[slot] = false;
        if k == EMPTY {
            None
        } else {
            self.index.remove(&k);
            Some(Line::from_key(k))
        }
    }

    pub(crate) fn clear(&mut self) {
        self.keys.fill(EMPTY);
        self.pinned.fill(false);
        self.index.clear();
    }

    pub(crate) fn len(&self) -> usize {
        self.index.len()
    }

    pub(crate) fn pinned_count_where(&self, pred: impl Fn(Line) -> bool) -> usize {
        self.keys
            .iter()
            .zip(&self.pinned)
            .filter(|(&k, &p)| p && k != EMPTY && pred(Line::from_key(k)))
            .count()
    }
}

/// Result of placing a line into a bank.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Fill {
    Placed {
        slot: usize,
        evicted: Option<Line>,
    },
    /// Every way was ineligible; the line was not cached.
    Bypassed,
}

/// A set-associative array occupying `sets * ways` consecutive slots of a [`LineStore`].
#[derive(Clone, Debug)]
pub(crate) struct Bank {
    base: usize,
    sets: usize,
    ways: usize,
    policy: PolicyState,
    valid: Vec<u32>,
    free_hint: Vec<u32>,
}

impl Bank {
    pub(crate) fn new(
        base: usize,
        sets: usize,
        ways: usize,
        policy: ReplacementPolicy,
    ) -> Result<Self> {
        Ok(Bank {
            base,
            sets,
            ways,
            policy: PolicyState::new(policy, sets, ways)?,
            valid: vec![0; sets],
            free_hint: vec![0; sets],
        })
    }

    pub(crate) fn slots(&self) -> usize {
        self.sets * self.ways
    }

    #[inline]
    pub(crate) fn slot(&self, set: usize, way: usize) -> usize {
        self.base + set * self.ways + way
    }

    #[inline]
    pub(crate) fn locate(&self, slot: usize) -> (usize, usize) {
        let rel = slot - self.base;
        (rel / self.ways, rel % self.ways)
    }

    #[inline]
    pub(crate) fn touch_slot(&mut self, slot: usize) {
        let (set, way) = self.locate(slot);
        self.policy.touch(set, way);
    }

    /// Places `line` into `set`, preferring the lowest free way.
    pub(crate) fn fill<R: Rng + ?Sized>(
        &mut self,
        store: &mut LineStore,
        set: usize,
        line: Line,
        eligible: impl Fn(&LineStore, usize) -> bool,
        rng: &mut R,
    ) -> Fill {
        let way = if (self.valid[set] as usize) < self.ways {
            let start = self.free_hint[set] as usize;
            let way = (start..self.ways)
                .find(|&w| store.get(self.slot(set, w)).is_none())
                .expect("valid count says a way is free");
            self.free_hint[set] = (way + 1) as u32;
            self.valid[set] += 1;
            way
        } else {
            let base = self.slot(set, 0);
            match self
                .policy
                .choose_victim(set, |w| eligible(store, base + w), rng)
            {
                Some(w) => w,
                None => return Fill::Bypassed,
            }
        };
        let slot = self.slot(set, way);
        let evicted = store.put(slot, line);
        self.policy.touch(set, way);
        Fill::Placed { slot, evicted }
    }

    /// Removes whatever occupies `slot` (which must belong to this bank).
    pub(crate) fn invalidate(&mut self, store: &mut LineStore, slot: usize) -> Option<Line> {
        let old = store.remove(slot);
        if old.is_some() {
            let (set, way) = self.locate(slot);
            self.valid[set] -= 1;
            self.free_hint[set] = self.free_hint[set].min(way as u32);
        }
        old
    }

    pub(crate) fn clear(&mut self) {
        self.policy.reset();
        self.valid.fill(0);
        self.free_hint.fill(0);
    }

    pub(crate) fn ways(&self) -> usize {
        self.ways
    }

    pub(crate) fn sets(&self) -> usize {
        self.sets
    }
}
