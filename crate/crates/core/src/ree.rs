//! Relative eviction entropy.
//!
//! The attacker fills the cache from a chunk of `N` lines, the victim makes a
//! single access, and the attacker line it displaces is recorded. The REE is
//! the KL divergence, in bits, between the resulting distribution over the
//! chunk and the uniform distribution over the chunk.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::addr::{DomainId, LineAddress, MemoryRegion, RegionAllocator};
use crate::cache::CacheModel;
use crate::designs::DesignConfig;
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Tolerance on `sum(p) == 1` accepted by [`kl_divergence`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// KL divergence `D(p || q)` in bits. Zero entries of `p` contribute nothing.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::Input(format!(
            "distributions must be non-empty and equally long ({} vs {})",
            p.len(),
            q.len()
        )));
    }
    for (name, d) in [("p", p), ("q", q)] {
        let sum: f64 = d.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE || d.iter().any(|&x| x.is_nan() || x < 0.0) {
            return Err(Error::Input(format!(
                "{name} is not a probability distribution (sum {sum})"
            )));
        }
    }
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(Error::Input("q must be positive wherever p is".into()));
            }
            kl += pi * (pi / qi).log2();
        }
    }
    Ok(kl.max(0.0))
}

/// Eviction counts per attacker chunk offset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvictionHistogram {
    counts: Vec<u64>,
    total: u64,
}

impl EvictionHistogram {
    pub fn new(n: usize) -> Self {
        EvictionHistogram {
            counts: vec![0; n],
            total: 0,
        }
    }

    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        EvictionHistogram { counts, total }
    }

    pub fn record(&mut self, offset: usize) {
        self.counts[offset] += 1;
        self.total += 1;
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Empirical eviction distribution; `None` if nothing was evicted.
    pub fn distribution(&self) -> Option<Vec<f64>> {
        (self.total > 0).then(|| {
            let t = self.total as f64;
            self.counts.iter().map(|&c| c as f64 / t).collect()
        })
    }

    /// KL divergence from the uniform distribution over the chunk, in bits.
    /// Zero when no eviction was observed.
    pub fn relative_entropy(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let n = self.counts.len() as f64;
        let t = self.total as f64;
        let kl: f64 = self
            .counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / t;
                p * (p * n).log2()
            })
            .sum();
        kl.max(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReeConfig {
    /// Attacker chunk size as a multiple of the cache's line count.
    pub chunk_multiple: usize,
    /// Number of fill + victim-access rounds.
    pub samples: usize,
    /// Counted evictions below this flag the estimate as low-confidence.
    pub confidence_floor: u64,
    /// Fill stops after this many accesses per cache line even if not full.
    pub fill_budget_per_line: usize,
}

impl Default for ReeConfig {
    fn default() -> Self {
        ReeConfig {
            chunk_multiple: 8,
            samples: 200_000,
            confidence_floor: 10_000,
            fill_budget_per_line: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReeResult {
    pub bits: f64,
    pub histogram: EvictionHistogram,
    pub rounds: usize,
    /// Rounds whose victim access evicted a victim line.
    pub discarded: usize,
    /// Rounds whose victim access evicted nothing.
    pub silent: usize,
    pub low_confidence: bool,
    pub victim: LineAddress,
}

/// Residency book for the attacker chunk, maintained from access outcomes.
struct Residency {
    resident: Vec<bool>,
    count: usize,
    /// Offsets ever marked since the last clear; clearing touches only these.
    touched: Vec<usize>,
}

impl Residency {
    fn new(n: usize) -> Self {
        Residency {
            resident: vec![false; n],
            count: 0,
            touched: Vec::new(),
        }
    }

    fn clear(&mut self) {
        for &o in &self.touched {
            self.resident[o] = false;
        }
        self.touched.clear();
        self.count = 0;
    }

    fn set(&mut self, offset: usize, value: bool) {
        if self.resident[offset] != value {
            self.resident[offset] = value;
            if value {
                self.count += 1;
                self.touched.push(offset);
            } else {
                self.count -= 1;
            }
        }
    }
}

/// Fills the cache with random chunk lines until the attacker holds as many
/// lines as it can.
fn fill_cache(
    cache: &mut dyn CacheModel,
    chunk: &MemoryRegion,
    book: &mut Residency,
    budget: usize,
    rng: &mut RngStream,
) -> Result<()> {
    let attacker = chunk.domain();
    let target = cache.capacity_for(attacker).min(book.resident.len());
    let n = chunk.size_lines();
    let mut spent = 0;
    while book.count < target && spent < budget {
        let off = rng.gen_range(0..n);
        let addr = chunk.line(off)?;
        let out = cache.read(addr, attacker)?;
        spent += 1;
        if let Some(ev) = out.evicted {
            if ev.domain == attacker {
                if let Some(o) = chunk.offset_of(ev.addr) {
                    book.set(o as usize, false);
                }
            }
        }
        if !out.hit && cache.contains(addr, attacker) {
            book.set(off as usize, true);
        }
    }
    Ok(())
}

/// Samples the single-access eviction distribution of `victim` over `chunk`.
pub fn sample_eviction_distribution(
    cache: &mut dyn CacheModel,
    chunk: &MemoryRegion,
    victim: LineAddress,
    victim_domain: DomainId,
    cfg: &ReeConfig,
    rng: &mut RngStream,
) -> Result<ReeResult> {
    let n = chunk.size_lines() as usize;
    let mut hist = EvictionHistogram::new(n);
    let mut book = Residency::new(n);
    let budget = cfg.fill_budget_per_line * cache.geometry().lines;
    let (mut discarded, mut silent) = (0, 0);
    for _ in 0..cfg.samples {
        cache.flush_all();
        book.clear();
        cache.pin(victim, victim_domain)?;
        fill_cache(cache, chunk, &mut book, budget, rng)?;
        let out = cache.read(victim, victim_domain)?;
        match out.evicted {
            Some(ev) if ev.domain == chunk.domain() => match chunk.offset_of(ev.addr) {
                Some(off) => hist.record(off as usize),
                None => discarded += 1,
            },
            Some(_) => discarded += 1,
            None => silent += 1,
        }
    }
    let bits = hist.relative_entropy();
    Ok(ReeResult {
        bits,
        low_confidence: hist.total() < cfg.confidence_floor,
        histogram: hist,
        rounds: cfg.samples,
        discarded,
        silent,
        victim,
    })
}

/// Builds the design, places the attacker chunk and victim region at random
/// bases, and measures the REE.
pub fn relative_eviction_entropy(
    design: &DesignConfig,
    cfg: &ReeConfig,
    seed: u64,
) -> Result<ReeResult> {
    if cfg.chunk_multiple == 0 || cfg.samples == 0 {
        return Err(Error::config(
            "REE needs a positive chunk multiple and sample count",
        ));
    }
    let root = RngStream::new(seed);
    let mut cache = design.build(root.child(0).seed())?;
    let mut rng = root.child(1);
    let mut alloc = RegionAllocator::default();
    // at least sets^2 lines: the whole keyed-index window, so every set is reachable
    let sets = design.geometry()?.sets();
    let n = (cfg.chunk_multiple * design.lines).max(sets * sets) as u64;
    let chunk = alloc.allocate(&mut rng, n, DomainId::ATTACKER)?;
    let victim_region = alloc.allocate(&mut rng, 1024, DomainId::VICTIM)?;
    let victim = victim_region.line(rng.gen_range(0..victim_region.size_lines()))?;
    sample_eviction_distribution(
        cache.as_mut(),
        &chunk,
        victim,
        DomainId::VICTIM,
        cfg,
        &mut rng,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::DesignKind;
    use crate::policy::ReplacementPolicy;

    fn uniform(n: usize) -> Vec<f64> {
        vec![1.0 / n as f64; n]
    }

    #[test]
    fn kl_identity_is_zero() {
        assert_eq!(kl_divergence(&uniform(64), &uniform(64)).unwrap(), 0.0);
    }

    #[test]
    fn kl_fraction_of_support() {
        let n = 1024;
        for s in [2usize, 4, 16, 128] {
            let mut p = vec![0.0; n];
            for x in p.iter_mut().take(n / s) {
                *x = s as f64 / n as f64;
            }
            let kl = kl_divergence(&p, &uniform(n)).unwrap();
            assert!((kl - (s as f64).log2()).abs() < 1e-9, "{s}: {kl}");
        }
    }

    #[test]
    fn kl_point_mass() {
        let mut p = vec![0.0; 8192];
        p[17] = 1.0;
        assert!((kl_divergence(&p, &uniform(8192)).unwrap() - 13.0).abs() < 1e-12);
    }

    #[test]
    fn kl_rejects_unnormalized() {
        assert!(kl_divergence(&[0.5, 0.6], &uniform(2)).is_err());
        assert!(kl_divergence(&[1.0], &uniform(2)).is_err());
    }

    #[test]
    fn histogram_entropy_matches_kl() {
        let h = EvictionHistogram::from_counts(vec![5, 0, 3, 0, 0, 1, 1, 0]);
        let kl = kl_divergence(&h.distribution().unwrap(), &uniform(8)).unwrap();
        assert!((h.relative_entropy() - kl).abs() < 1e-12);
        assert_eq!(EvictionHistogram::new(8).relative_entropy(), 0.0);
    }

    #[test]
    fn set_associative_small_cache_is_log2_sets() {
        let design = DesignConfig::new(
            DesignKind::SetAssociative,
            256,
            4,
            ReplacementPolicy::Random,
        );
        let cfg = ReeConfig {
            samples: 4000,
            ..Default::default()
        };
        let r = relative_eviction_entropy(&design, &cfg, 1).unwrap();
        assert!((r.bits - 6.0).abs() < 0.1, "{}", r.bits);
        let nonzero = r.histogram.counts().iter().filter(|&&c| c > 0).count();
        // chunk is sets^2 = 4096 lines here; only those sharing the victim set can be evicted
        assert_eq!(r.histogram.len(), 4096);
        assert!(nonzero <= 4096 / 64);
    }

    #[test]
    fn way_partitioned_never_leaks() {
        let design = DesignConfig::new(
            DesignKind::WayPartitioned,
            256,
            4,
            ReplacementPolicy::Random,
        );
        let cfg = ReeConfig {
            samples: 200,
            ..Default::default()
        };
        let r = relative_eviction_entropy(&design, &cfg, 2).unwrap();
        assert_eq!(r.bits, 0.0);
        assert_eq!(r.histogram.total(), 0);
        assert!(r.low_confidence);
    }
}
