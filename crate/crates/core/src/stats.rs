use serde::Serialize;

use crate::addr::DomainId;
use crate::cache::AccessOutcome;

/// Hit/miss counters for one security domain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DomainStats {
    pub hits: u64,
    pub misses: u64,
    /// Evictions this domain caused of lines owned by some other domain.
    pub evictions_caused_cross_domain: u64,
    pub accesses_total: u64,
}

/// Per-domain statistics kept by every cache model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CacheStatistics {
    domains: Vec<DomainStats>,
}

impl CacheStatistics {
    pub fn new(domain_count: usize) -> Self {
        CacheStatistics {
            domains: vec![DomainStats::default(); domain_count],
        }
    }

    pub fn domain(&self, d: DomainId) -> DomainStats {
        self.domains.get(d.index()).copied().unwrap_or_default()
    }

    pub fn domain_count(&self) -> usize {
        self.domains.len()
    }

    /// Accesses summed over every domain.
    pub fn total_accesses(&self) -> u64 {
        self.domains.iter().map(|d| d.accesses_total).sum()
    }

    pub fn reset(&mut self) {
        self.domains.fill(DomainStats::default());
    }

    #[inline]
    pub(crate) fn record(&mut self, domain: DomainId, outcome: &AccessOutcome) {
        let s = &mut self.domains[domain.index()];
        s.accesses_total += 1;
        if outcome.hit {
            s.hits += 1;
        } else {
            s.misses += 1;
        }
        if let Some(ev) = outcome.evicted {
            if ev.domain != domain {
                s.evictions_caused_cross_domain += 1;
            }
        }
    }
}
