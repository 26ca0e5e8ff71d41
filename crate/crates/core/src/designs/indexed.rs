//! Designs built from one or more set-indexed banks: set-associative,
//! fully-associative, PLCache, CEASER, CEASER-S, ScatterCache and PhantomCache.

use rand::Rng;
use smallvec::SmallVec;

use super::{DesignConfig, DesignKind};
use crate::addr::{AccessKind, DomainId, Line, LineAddress};
use crate::cache::{check_domain, AccessOutcome, Bank, CacheGeometry, CacheModel, Fill, LineStore};
use crate::error::Result;
use crate::index::{derive_key, KeyedIndex};
use crate::rng::RngStream;
use crate::stats::CacheStatistics;

#[derive(Clone, Debug)]
enum Placement {
    /// `addr mod sets`; a single set gives full associativity.
    Modulo { mask: u64 },
    /// One keyed function per partition.
    Skewed(Vec<KeyedIndex>),
    /// One keyed function per (domain, partition), row-major by domain.
    DomainSkewed {
        partitions: usize,
        fns: Vec<KeyedIndex>,
    },
    /// `r` keyed functions over a single bank.
    Multi(Vec<KeyedIndex>),
}

/// Up to one candidate per partition or hash function.
type Candidates = SmallVec<[(usize, usize); 16]>;

#[derive(Debug)]
pub struct IndexedCache {
    kind: DesignKind,
    geometry: CacheGeometry,
    placement: Placement,
    banks: Vec<Bank>,
    bank_slots: usize,
    store: LineStore,
    /// PLCache: domains whose fills are pinned.
    pin_on_fill: Vec<bool>,
    pinning: bool,
    stats: CacheStatistics,
    rng: RngStream,
}

impl IndexedCache {
    pub fn new(cfg: &DesignConfig, seed: u64) -> Result<Self> {
        let root = RngStream::new(seed);
        let key = root.child(0).seed();
        let geometry = cfg.geometry()?;
        let sets = geometry.sets();
        let bits = geometry.index_bits()?;
        let partitions = cfg.effective_partitions();
        let ways_per_bank = geometry.ways / partitions;

        let placement = match cfg.design {
            DesignKind::SetAssociative | DesignKind::FullyAssociative | DesignKind::PlCache => {
                Placement::Modulo {
                    mask: sets as u64 - 1,
                }
            }
            DesignKind::Ceaser | DesignKind::CeaserS => Placement::Skewed(
                (0..partitions)
                    .map(|p| KeyedIndex::new(derive_key(key, &[p as u64]), bits))
                    .collect(),
            ),
            DesignKind::ScatterCache => {
                let mut fns = Vec::with_capacity(cfg.domains * partitions);
                for d in 0..cfg.domains {
                    for p in 0..partitions {
                        fns.push(KeyedIndex::new(
                            derive_key(key, &[d as u64, p as u64]),
                            bits,
                        ));
                    }
                }
                Placement::DomainSkewed { partitions, fns }
            }
            DesignKind::PhantomCache => Placement::Multi(
                (0..cfg.r)
                    .map(|i| KeyedIndex::new(derive_key(key, &[i as u64]), bits))
                    .collect(),
            ),
            DesignKind::WayPartitioned | DesignKind::NewCache => {
                unreachable!("{} has its own model", cfg.design)
            }
        };

        let bank_slots = sets * ways_per_bank;
        let banks = (0..partitions)
            .map(|p| Bank::new(p * bank_slots, sets, ways_per_bank, cfg.policy))
            .collect::<Result<Vec<_>>>()?;
        let pinning = cfg.design == DesignKind::PlCache;
        let mut pin_on_fill = vec![false; cfg.domains];
        if pinning && cfg.domains > DomainId::VICTIM.index() {
            pin_on_fill[DomainId::VICTIM.index()] = true;
        }

        Ok(IndexedCache {
            kind: cfg.design,
            geometry,
            placement,
            banks,
            bank_slots,
            store: LineStore::new(geometry.lines),
            pin_on_fill,
            pinning,
            stats: CacheStatistics::new(cfg.domains),
            rng: root.child(1),
        })
    }

    /// PLCache only: choose which domains have their fills pinned.
    pub fn set_pin_on_fill(&mut self, domain: DomainId, enabled: bool) {
        if let Some(flag) = self.pin_on_fill.get_mut(domain.index()) {
            *flag = enabled && self.pinning;
        }
    }

    /// Releases a pinned line. Returns whether it was pinned.
    pub fn unpin(&mut self, addr: LineAddress, domain: DomainId) -> bool {
        match self.store.find(Line::new(addr, domain)) {
            Some(slot) if self.store.is_pinned(slot) => {
                self.store.set_pinned(slot, false);
                true
            }
            _ => false,
        }
    }

    pub fn is_pinned(&self, addr: LineAddress, domain: DomainId) -> bool {
        self.store
            .find(Line::new(addr, domain))
            .is_some_and(|s| self.store.is_pinned(s))
    }

    /// Every (bank, set) pair a line may be placed in.
    fn candidates(&self, line: Line) -> Candidates {
        (0..self.choices())
            .map(|i| self.candidate(line, i))
            .collect()
    }

    /// Number of placement choices a miss draws from.
    fn choices(&self) -> usize {
        match &self.placement {
            Placement::Modulo { .. } => 1,
            Placement::Skewed(fns) | Placement::Multi(fns) => fns.len(),
            Placement::DomainSkewed { partitions, .. } => *partitions,
        }
    }

    /// The `i`-th candidate (bank, set) of a line.
    #[inline]
    fn candidate(&self, line: Line, i: usize) -> (usize, usize) {
        let a = line.addr.value();
        match &self.placement {
            Placement::Modulo { mask } => (0, (a & mask) as usize),
            Placement::Skewed(fns) => (i, fns[i].set_of(a)),
            Placement::DomainSkewed { partitions, fns } => {
                (i, fns[line.domain.index() * partitions + i].set_of(a))
            }
            Placement::Multi(fns) => (0, fns[i].set_of(a)),
        }
    }

    fn insert(&mut self, line: Line) -> AccessOutcome {
        let n = self.choices();
        let pick = if n == 1 { 0 } else { self.rng.gen_range(0..n) };
        let (bank, set) = self.candidate(line, pick);
        let pinning = self.pinning;
        let owner = line.domain;
        let eligible = move |store: &LineStore, slot: usize| {
            !pinning || !store.is_pinned(slot) || store.get(slot).is_some_and(|l| l.domain == owner)
        };
        match self.banks[bank].fill(&mut self.store, set, line, eligible, &mut self.rng) {
            Fill::Placed { slot, evicted } => {
                if self.pin_on_fill[owner.index()] {
                    self.store.set_pinned(slot, true);
                }
                AccessOutcome::miss(evicted)
            }
            Fill::Bypassed => AccessOutcome::miss(None),
        }
    }

    fn bank_of(&self, slot: usize) -> usize {
        slot / self.bank_slots
    }
}

impl CacheModel for IndexedCache {
    fn access(
        &mut self,
        addr: LineAddress,
        domain: DomainId,
        kind: AccessKind,
    ) -> Result<AccessOutcome> {
        check_domain(domain, self.stats.domain_count())?;
        let line = Line::new(addr, domain);
        let found = self.store.find(line);
        let outcome = match (kind, found) {
            (AccessKind::Invalidate, Some(slot)) => {
                let b = self.bank_of(slot);
                self.banks[b].invalidate(&mut self.store, slot);
                AccessOutcome::HIT
            }
            (AccessKind::Invalidate, None) => AccessOutcome::miss(None),
            (_, Some(slot)) => {
                let b = self.bank_of(slot);
                self.banks[b].touch_slot(slot);
                AccessOutcome::HIT
            }
            (_, None) => self.insert(line),
        };
        self.stats.record(domain, &outcome);
        debug_assert!(self.store.len() <= self.geometry.lines);
        Ok(outcome)
    }

    fn contains(&self, addr: LineAddress, domain: DomainId) -> bool {
        self.store.find(Line::new(addr, domain)).is_some()
    }

    fn flush_all(&mut self) {
        self.store.clear();
        for b in &mut self.banks {
            b.clear();
        }
    }

    fn statistics(&self) -> &CacheStatistics {
        &self.stats
    }

    fn reset_statistics(&mut self) {
        self.stats.reset();
    }

    fn geometry(&self) -> CacheGeometry {
        self.geometry
    }

    fn design(&self) -> DesignKind {
        self.kind
    }

    fn resident_lines(&self) -> usize {
        self.store.len()
    }

    fn capacity_for(&self, domain: DomainId) -> usize {
        if !self.pinning {
            return self.geometry.lines;
        }
        self.geometry.lines - self.store.pinned_count_where(|l| l.domain != domain)
    }

    fn collides(&self, a: Line, b: Line) -> bool {
        let ca = self.candidates(a);
        let cb = self.candidates(b);
        match self.placement {
            Placement::Multi(_) => ca.iter().any(|x| cb.contains(x)),
            _ => ca.iter().zip(&cb).any(|(x, y)| x == y),
        }
    }

    fn pin(&mut self, addr: LineAddress, domain: DomainId) -> Result<bool> {
        if !self.pinning {
            return Ok(false);
        }
        self.access(addr, domain, AccessKind::Read)?;
        match self.store.find(Line::new(addr, domain)) {
            Some(slot) => {
                self.store.set_pinned(slot, true);
                Ok(true)
            }
            None => Ok(false),
        }
    }
}
