use super::{DesignConfig, DesignKind};
use crate::addr::{AccessKind, DomainId, Line, LineAddress};
use crate::cache::{check_domain, AccessOutcome, Bank, CacheGeometry, CacheModel, Fill, LineStore};
use crate::error::Result;
use crate::rng::RngStream;
use crate::stats::CacheStatistics;

/// Set-associative cache whose ways are split evenly between domains.
///
/// Domain `d` owns ways `d*W/D .. (d+1)*W/D` of every set and never probes
/// or fills outside them.
#[derive(Debug)]
pub struct WayPartitionedCache {
    geometry: CacheGeometry,
    banks: Vec<Bank>,
    store: LineStore,
    stats: CacheStatistics,
    rng: RngStream,
}

impl WayPartitionedCache {
    pub fn new(cfg: &DesignConfig, seed: u64) -> Result<Self> {
        let geometry = cfg.geometry()?;
        let sets = geometry.sets();
        let ways = geometry.ways / cfg.domains;
        let banks = (0..cfg.domains)
            .map(|d| Bank::new(d * sets * ways, sets, ways, cfg.policy))
            .collect::<Result<Vec<_>>>()?;
        Ok(WayPartitionedCache {
            geometry,
            banks,
            store: LineStore::new(geometry.lines),
            stats: CacheStatistics::new(cfg.domains),
            rng: RngStream::new(seed).child(1),
        })
    }

    fn set_of(&self, addr: LineAddress) -> usize {
        (addr.value() % self.geometry.sets() as u64) as usize
    }

    /// Ways available to each domain.
    pub fn ways_per_domain(&self) -> usize {
        self.banks[0].ways()
    }
}

impl CacheModel for WayPartitionedCache {
    fn access(
        &mut self,
        addr: LineAddress,
        domain: DomainId,
        kind: AccessKind,
    ) -> Result<AccessOutcome> {
        check_domain(domain, self.stats.domain_count())?;
        let line = Line::new(addr, domain);
        let bank = &mut self.banks[domain.index()];
        let outcome = match (kind, self.store.find(line)) {
            (AccessKind::Invalidate, Some(slot)) => {
                bank.invalidate(&mut self.store, slot);
                AccessOutcome::HIT
            }
            (AccessKind::Invalidate, None) => AccessOutcome::miss(None),
            (_, Some(slot)) => {
                bank.touch_slot(slot);
                AccessOutcome::HIT
            }
            (_, None) => {
                let set = (addr.value() % bank.sets() as u64) as usize;
                match bank.fill(&mut self.store, set, line, |_, _| true, &mut self.rng) {
                    Fill::Placed { evicted, .. } => AccessOutcome::miss(evicted),
                    Fill::Bypassed => unreachable!("unrestricted fill always places"),
                }
            }
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
        DesignKind::WayPartitioned
    }

    fn resident_lines(&self) -> usize {
        self.store.len()
    }

    fn capacity_for(&self, _domain: DomainId) -> usize {
        self.banks[0].slots()
    }

    fn collides(&self, a: Line, b: Line) -> bool {
        a.domain == b.domain && self.set_of(a.addr) == self.set_of(b.addr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::ReplacementPolicy;

    #[test]
    fn victim_never_evicts_attacker() {
        let cfg = DesignConfig::new(
            DesignKind::WayPartitioned,
            256,
            8,
            ReplacementPolicy::Random,
        );
        let mut c = WayPartitionedCache::new(&cfg, 1).unwrap();
        assert_eq!(c.ways_per_domain(), 4);
        assert_eq!(c.capacity_for(DomainId::ATTACKER), 128);
        for x in 0..128 {
            c.read(LineAddress::new(x), DomainId::ATTACKER).unwrap();
        }
        assert_eq!(c.resident_lines(), 128);
        for x in 0..1000 {
            let out = c
                .read(LineAddress::new(5000 + x), DomainId::VICTIM)
                .unwrap();
            assert!(out.evicted.is_none_or(|l| l.domain == DomainId::VICTIM));
        }
        assert_eq!(
            c.statistics()
                .domain(DomainId::VICTIM)
                .evictions_caused_cross_domain,
            0
        );
        assert!((0..128).all(|x| c.contains(LineAddress::new(x), DomainId::ATTACKER)));
    }
}
