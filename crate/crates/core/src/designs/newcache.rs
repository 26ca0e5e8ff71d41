use rand::Rng;
use rustc_hash::FxHashMap;

use super::{DesignConfig, DesignKind};
use crate::addr::{AccessKind, DomainId, Line, LineAddress};
use crate::cache::{check_domain, AccessOutcome, CacheGeometry, CacheModel, LineStore};
use crate::error::Result;
use crate::rng::RngStream;
use crate::stats::CacheStatistics;

/// Dynamically remapped cache with a `2^n`-entry CAM over `(domain, low n+k bits)`.
///
/// The CAM maps each occupied index to exactly one physical line, so the CAM
/// entries and the resident lines are in 1:1 correspondence. A cross-domain
/// index match is treated as an index miss.
#[derive(Debug)]
pub struct NewCache {
    geometry: CacheGeometry,
    index_mask: u64,
    cam: FxHashMap<u64, u32>,
    store: LineStore,
    /// Free physical lines, popped lowest-first.
    free: Vec<u32>,
    stats: CacheStatistics,
    rng: RngStream,
}

impl NewCache {
    pub fn new(cfg: &DesignConfig, seed: u64) -> Result<Self> {
        let geometry = cfg.geometry()?;
        let n = geometry.lines.trailing_zeros();
        let mut cam = FxHashMap::default();
        cam.reserve(geometry.lines);
        Ok(NewCache {
            geometry,
            index_mask: (1u64 << (n + cfg.k)) - 1,
            cam,
            store: LineStore::new(geometry.lines),
            free: (0..geometry.lines as u32).rev().collect(),
            stats: CacheStatistics::new(cfg.domains),
            rng: RngStream::new(seed).child(1),
        })
    }

    #[inline]
    fn cam_key(&self, line: Line) -> u64 {
        (line.addr.value() & self.index_mask) | (u64::from(line.domain.0) << 48)
    }

    fn release(&mut self, slot: usize) -> Option<Line> {
        let old = self.store.remove(slot)?;
        self.cam.remove(&self.cam_key(old));
        Some(old)
    }

    fn install(&mut self, slot: usize, line: Line) {
        self.store.put(slot, line);
        self.cam.insert(self.cam_key(line), slot as u32);
    }
}

impl CacheModel for NewCache {
    fn access(
        &mut self,
        addr: LineAddress,
        domain: DomainId,
        kind: AccessKind,
    ) -> Result<AccessOutcome> {
        check_domain(domain, self.stats.domain_count())?;
        let line = Line::new(addr, domain);
        let outcome = if kind == AccessKind::Invalidate {
            match self.store.find(line) {
                Some(slot) => {
                    self.release(slot);
                    self.free.push(slot as u32);
                    AccessOutcome::HIT
                }
                None => AccessOutcome::miss(None),
            }
        } else {
            match self.cam.get(&self.cam_key(line)).map(|&s| s as usize) {
                Some(slot) if self.store.get(slot) == Some(line) => AccessOutcome::HIT,
                Some(slot) => {
                    // tag miss: replace in place
                    let evicted = self.release(slot);
                    self.install(slot, line);
                    AccessOutcome::miss(evicted)
                }
                None => {
                    let (slot, evicted) = match self.free.pop() {
                        Some(s) => (s as usize, None),
                        None => {
                            let s = self.rng.gen_range(0..self.geometry.lines);
                            (s, self.release(s))
                        }
                    };
                    self.install(slot, line);
                    AccessOutcome::miss(evicted)
                }
            }
        };
        self.stats.record(domain, &outcome);
        debug_assert!(self.store.len() <= self.geometry.lines);
        debug_assert_eq!(self.cam.len(), self.store.len());
        Ok(outcome)
    }

    fn contains(&self, addr: LineAddress, domain: DomainId) -> bool {
        self.store.find(Line::new(addr, domain)).is_some()
    }

    fn flush_all(&mut self) {
        self.store.clear();
        self.cam.clear();
        self.free = (0..self.geometry.lines as u32).rev().collect();
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
        DesignKind::NewCache
    }

    fn resident_lines(&self) -> usize {
        self.store.len()
    }

    fn collides(&self, _a: Line, _b: Line) -> bool {
        true
    }
}
