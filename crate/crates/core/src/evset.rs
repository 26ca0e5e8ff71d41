//! Eviction-set construction (SHM, GEM, PPP), the probability-targeted
//! builder, and set quality measurements.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::addr::{DomainId, Line, LineAddress, MemoryRegion, RegionAllocator};
use crate::cache::CacheModel;
use crate::designs::{DesignConfig, DesignKind};
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Shm,
    Gem,
    Ppp,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Shm, Method::Gem, Method::Ppp];

    pub fn name(self) -> &'static str {
        match self {
            Method::Shm => "shm",
            Method::Gem => "gem",
            Method::Ppp => "ppp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "shm" => Ok(Method::Shm),
            "gem" => Ok(Method::Gem),
            "ppp" => Ok(Method::Ppp),
            other => Err(Error::config(format!(
                "unknown eviction-set method {other:?} (expected shm, gem or ppp)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvsetConfig {
    /// SHM/GEM initial set size as a multiple of the cache's line count.
    pub initial_multiple: usize,
    /// SHM/GEM attempts at drawing an initial set that evicts the victim.
    pub initial_retries: usize,
    /// SHM/GEM cap on eviction tests.
    pub test_cap: u64,
    /// PPP candidates per round as a multiple of the cache's line count.
    pub ppp_candidate_multiple: f64,
    /// The same for designs without set indexing. Below capacity the victim
    /// would always land in a free slot and conflict with nothing.
    pub ppp_unindexed_multiple: f64,
    /// PPP cap on rounds.
    pub round_cap: u64,
    /// PPP cap on prune passes per round.
    pub prune_pass_cap: usize,
    /// Clean-cache trials used to measure eviction probability.
    pub trials: usize,
}

impl Default for EvsetConfig {
    fn default() -> Self {
        EvsetConfig {
            initial_multiple: 8,
            initial_retries: 10,
            test_cap: 1_000_000,
            ppp_candidate_multiple: 0.8,
            ppp_unindexed_multiple: 2.0,
            round_cap: 10_000,
            prune_pass_cap: 64,
            trials: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvictionSet {
    pub addresses: Vec<LineAddress>,
    pub victim: Line,
}

impl EvictionSet {
    pub fn len(&self) -> usize {
        self.addresses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.addresses.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Termination {
    TargetReached,
    IterationCap,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::TargetReached => "targetReached",
            Termination::IterationCap => "iterationCap",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvictionSetReport {
    pub method: Method,
    pub set: EvictionSet,
    pub memory_accesses: u64,
    /// Eviction tests (SHM/GEM) or rounds (PPP).
    pub iterations: u64,
    pub terminated: Termination,
    pub true_conflict_rate: f64,
    pub success_rate: f64,
}

/// A construction environment: the cache, the attacker's address pool and
/// the targeted victim line.
pub struct Target<'a> {
    pub cache: &'a mut dyn CacheModel,
    pub pool: &'a MemoryRegion,
    pub victim: Line,
}

impl Target<'_> {
    fn attacker(&self) -> DomainId {
        self.pool.domain()
    }

    fn accesses(&self) -> u64 {
        self.cache.statistics().total_accesses()
    }

    /// Clean cache, victim access, one sweep over `set` (skipping `hold`),
    /// then an oracle probe of the victim line.
    fn evicts(&mut self, set: &[LineAddress], hold: std::ops::Range<usize>) -> Result<bool> {
        self.cache.flush_all();
        self.cache.read(self.victim.addr, self.victim.domain)?;
        let a = self.attacker();
        for (i, &addr) in set.iter().enumerate() {
            if !hold.contains(&i) {
                self.cache.read(addr, a)?;
            }
        }
        Ok(!self.cache.contains(self.victim.addr, self.victim.domain))
    }

    fn random_pool_lines(&self, count: usize, rng: &mut RngStream) -> Result<Vec<LineAddress>> {
        let n = self.pool.size_lines() as usize;
        if count > n {
            return Err(Error::config(format!(
                "attacker pool of {n} lines cannot supply {count} distinct addresses"
            )));
        }
        sample(rng, n, count)
            .into_iter()
            .map(|o| self.pool.line(o as u64))
            .collect()
    }

    fn initial_set(&mut self, cfg: &EvsetConfig, rng: &mut RngStream) -> Result<Vec<LineAddress>> {
        let size = cfg.initial_multiple * self.cache.geometry().lines;
        for _ in 0..cfg.initial_retries.max(1) {
            let set = self.random_pool_lines(size, rng)?;
            if self.evicts(&set, 0..0)? {
                return Ok(set);
            }
        }
        Err(Error::Construction(format!(
            "no initial set of {size} addresses evicted the victim after {} attempts",
            cfg.initial_retries.max(1)
        )))
    }

    /// Fraction of `set` that structurally collides with the victim.
    pub fn true_conflict_rate(&self, set: &[LineAddress]) -> f64 {
        if set.is_empty() {
            return 1.0;
        }
        let a = self.attacker();
        let hits = set
            .iter()
            .filter(|&&addr| self.cache.collides(Line::new(addr, a), self.victim))
            .count();
        hits as f64 / set.len() as f64
    }

    /// Fraction of clean-cache trials in which one sweep of `set` evicts the victim.
    pub fn success_rate(&mut self, set: &[LineAddress], trials: usize) -> Result<f64> {
        if trials == 0 {
            return Ok(0.0);
        }
        let mut ok = 0;
        for _ in 0..trials {
            if self.evicts(set, 0..0)? {
                ok += 1;
            }
        }
        Ok(ok as f64 / trials as f64)
    }

    /// Both quality measures of a set.
    pub fn evaluate(&mut self, set: &[LineAddress], trials: usize) -> Result<(f64, f64)> {
        let tcr = self.true_conflict_rate(set);
        Ok((tcr, self.success_rate(set, trials)?))
    }

    /// Up to `count` pool addresses confirmed by the collision oracle, in random order.
    pub fn oracle_colliders(&self, count: usize, rng: &mut RngStream) -> Result<Vec<LineAddress>> {
        let a = self.attacker();
        let n = self.pool.size_lines();
        let mut found = Vec::with_capacity(count);
        let mut seen = FxHashSet::default();
        let budget = 64 * n;
        let mut drawn = 0;
        while found.len() < count && drawn < budget && (seen.len() as u64) < n {
            drawn += 1;
            let off = rng.gen_range(0..n);
            if !seen.insert(off) {
                continue;
            }
            let addr = self.pool.line(off)?;
            if self.cache.collides(Line::new(addr, a), self.victim) {
                found.push(addr);
            }
        }
        Ok(found)
    }
}

/// Runs one construction method and measures the result.
pub fn build(
    method: Method,
    target: &mut Target<'_>,
    target_size: usize,
    cfg: &EvsetConfig,
    rng: &mut RngStream,
) -> Result<EvictionSetReport> {
    if target_size == 0 {
        return Err(Error::config("eviction-set target size must be positive"));
    }
    let start = target.accesses();
    let (addresses, iterations, terminated) = match method {
        Method::Shm => shm(target, target_size, cfg, rng)?,
        Method::Gem => gem(target, target_size, cfg, rng)?,
        Method::Ppp => ppp(target, target_size, cfg, rng)?,
    };
    let memory_accesses = target.accesses() - start;
    let (true_conflict_rate, success_rate) = target.evaluate(&addresses, cfg.trials)?;
    Ok(EvictionSetReport {
        method,
        set: EvictionSet {
            addresses,
            victim: target.victim,
        },
        memory_accesses,
        iterations,
        terminated,
        true_conflict_rate,
        success_rate,
    })
}

type Built = (Vec<LineAddress>, u64, Termination);

fn shm(t: &mut Target<'_>, goal: usize, cfg: &EvsetConfig, rng: &mut RngStream) -> Result<Built> {
    let mut set = t.initial_set(cfg, rng)?;
    let mut tests = 0;
    let mut i = 0;
    while set.len() > goal {
        if tests >= cfg.test_cap {
            return Ok((set, tests, Termination::IterationCap));
        }
        if i >= set.len() {
            i = 0;
        }
        tests += 1;
        if t.evicts(&set, i..i + 1)? {
            set.remove(i);
        } else {
            i += 1;
        }
    }
    Ok((set, tests, Termination::TargetReached))
}

fn gem(t: &mut Target<'_>, goal: usize, cfg: &EvsetConfig, rng: &mut RngStream) -> Result<Built> {
    let mut set = t.initial_set(cfg, rng)?;
    let groups = t.cache.geometry().ways + 1;
    let mut tests = 0;
    while set.len() > goal {
        let n = groups.min(set.len());
        let len = set.len();
        let mut removed = false;
        for g in 0..n {
            if tests >= cfg.test_cap {
                return Ok((set, tests, Termination::IterationCap));
            }
            let lo = g * len / n;
            let hi = ((g + 1) * len / n).min(lo + (len - goal));
            if hi <= lo {
                continue;
            }
            tests += 1;
            if t.evicts(&set, lo..hi)? {
                set.drain(lo..hi);
                removed = true;
                break;
            }
        }
        if !removed && tests >= cfg.test_cap {
            return Ok((set, tests, Termination::IterationCap));
        }
    }
    Ok((set, tests, Termination::TargetReached))
}

fn ppp(t: &mut Target<'_>, goal: usize, cfg: &EvsetConfig, rng: &mut RngStream) -> Result<Built> {
    let a = t.attacker();
    let multiple = if t.cache.design().is_fully_associative() {
        cfg.ppp_unindexed_multiple
    } else {
        cfg.ppp_candidate_multiple
    };
    let per_round = ((multiple * t.cache.geometry().lines as f64).round() as usize).max(1);
    let pool = t.pool.size_lines() as usize;
    let mut found: Vec<LineAddress> = Vec::with_capacity(goal);
    let mut found_offsets = FxHashSet::default();
    let mut rounds = 0;
    let mut cands: Vec<LineAddress> = Vec::with_capacity(per_round);
    while found.len() < goal {
        if rounds >= cfg.round_cap {
            return Ok((found, rounds, Termination::IterationCap));
        }
        rounds += 1;
        let draw = per_round.min(pool - found_offsets.len());
        cands.clear();
        for off in sample(rng, pool, (draw + found_offsets.len()).min(pool)) {
            if cands.len() == draw {
                break;
            }
            if !found_offsets.contains(&off) {
                cands.push(t.pool.line(off as u64)?);
            }
        }

        t.cache.flush_all();
        for &c in &cands {
            t.cache.read(c, a)?;
        }
        for _ in 0..cfg.prune_pass_cap {
            let before = cands.len();
            let mut kept = Vec::with_capacity(before);
            for &c in &cands {
                if t.cache.read(c, a)?.hit {
                    kept.push(c);
                }
            }
            cands = kept;
            if cands.len() == before {
                break;
            }
        }
        t.cache.read(t.victim.addr, t.victim.domain)?;
        for &c in &cands {
            if !t.cache.read(c, a)?.hit {
                found_offsets.insert(t.pool.offset_of(c).unwrap() as usize);
                found.push(c);
                break;
            }
        }
    }
    Ok((found, rounds, Termination::TargetReached))
}

/// Smallest prefix of `supply` whose clean-cache eviction probability reaches `alpha`.
///
/// Every trial sweeps the supply in order until the victim leaves the cache,
/// so all prefixes are measured on the same trials.
pub fn build_to_probability(
    target: &mut Target<'_>,
    supply: &[LineAddress],
    alpha: f64,
    trials: usize,
) -> Result<EvictionSet> {
    if !(0.0..=1.0).contains(&alpha) || trials == 0 {
        return Err(Error::config(
            "alpha must lie in [0, 1] and trials must be positive",
        ));
    }
    let a = target.attacker();
    // first[k] = trials in which the victim was first evicted by supply[k]
    let mut first = vec![0u64; supply.len()];
    for _ in 0..trials {
        target.cache.flush_all();
        target
            .cache
            .read(target.victim.addr, target.victim.domain)?;
        for (k, &addr) in supply.iter().enumerate() {
            target.cache.read(addr, a)?;
            if !target
                .cache
                .contains(target.victim.addr, target.victim.domain)
            {
                first[k] += 1;
                break;
            }
        }
    }
    let need = (alpha * trials as f64).ceil() as u64;
    let mut evicted = 0;
    for (k, &c) in first.iter().enumerate() {
        evicted += c;
        if evicted >= need {
            return Ok(EvictionSet {
                addresses: supply[..=k].to_vec(),
                victim: target.victim,
            });
        }
    }
    Err(Error::SupplyExhausted {
        best: evicted as f64 / trials as f64,
        target: alpha,
        supplied: supply.len(),
    })
}

/// Default eviction-set size: the associativity, every line for fully
/// associative designs, and all `r * ways` candidate slots for phantom.
pub fn default_target_size(design: &DesignConfig) -> usize {
    match design.design {
        DesignKind::FullyAssociative | DesignKind::NewCache => design.lines,
        DesignKind::PhantomCache => design.r * design.ways,
        _ => design.ways,
    }
}

/// A fresh cache with an attacker pool and a victim line at random bases.
pub struct Setup {
    pub cache: Box<dyn CacheModel>,
    pub pool: MemoryRegion,
    pub victim: Line,
    pub rng: RngStream,
}

impl Setup {
    pub fn new(design: &DesignConfig, pool_multiple: usize, seed: u64) -> Result<Self> {
        let root = RngStream::new(seed);
        let cache = design.build(root.child(0).seed())?;
        let mut rng = root.child(1);
        let mut alloc = RegionAllocator::default();
        let pool = alloc.allocate(
            &mut rng,
            (pool_multiple * design.lines) as u64,
            DomainId::ATTACKER,
        )?;
        let region = alloc.allocate(&mut rng, 1024, DomainId::VICTIM)?;
        let victim = Line::new(
            region.line(rng.gen_range(0..region.size_lines()))?,
            DomainId::VICTIM,
        );
        Ok(Setup {
            cache,
            pool,
            victim,
            rng,
        })
    }

    pub fn target(&mut self) -> (Target<'_>, &mut RngStream) {
        (
            Target {
                cache: self.cache.as_mut(),
                pool: &self.pool,
                victim: self.victim,
            },
            &mut self.rng,
        )
    }
}

/// Attacker pool size as a multiple of the cache's line count.
pub const POOL_MULTIPLE: usize = 32;

/// One seeded eviction-set construction on a fresh cache.
pub fn run_construction(
    design: &DesignConfig,
    method: Method,
    target_size: Option<usize>,
    cfg: &EvsetConfig,
    seed: u64,
) -> Result<EvictionSetReport> {
    let mut setup = Setup::new(design, POOL_MULTIPLE, seed)?;
    let size = target_size.unwrap_or_else(|| default_target_size(design));
    let (mut target, rng) = setup.target();
    target.cache.reset_statistics();
    build(method, &mut target, size, cfg, rng)
}

/// Size of the shortest oracle-confirmed set whose single clean sweep evicts
/// the victim with probability `alpha`, on a fresh cache.
pub fn alpha_set_size(
    design: &DesignConfig,
    alpha: f64,
    cfg: &EvsetConfig,
    seed: u64,
) -> Result<usize> {
    let mut setup = Setup::new(design, POOL_MULTIPLE, seed)?;
    let (mut target, rng) = setup.target();
    let supply = target.oracle_colliders(4 * design.lines, rng)?;
    Ok(build_to_probability(&mut target, &supply, alpha, cfg.trials)?.len())
}

/// Steady-state rate at which `sweeps` passes over `set` evict the victim
/// line after a single victim access. Trials follow each other without a
/// flush, as consecutive prime/probe rounds do.
pub fn primed_eviction_rate(
    target: &mut Target<'_>,
    set: &[LineAddress],
    sweeps: usize,
    trials: usize,
) -> Result<f64> {
    const WARMUP: usize = 16;
    let a = target.attacker();
    target.cache.flush_all();
    let mut evicted = 0;
    for t in 0..WARMUP + trials {
        target
            .cache
            .read(target.victim.addr, target.victim.domain)?;
        for _ in 0..sweeps {
            for &addr in set {
                target.cache.read(addr, a)?;
            }
        }
        if t >= WARMUP
            && !target
                .cache
                .contains(target.victim.addr, target.victim.domain)
        {
            evicted += 1;
        }
    }
    Ok(evicted as f64 / trials.max(1) as f64)
}

/// Shortest prefix of `supply` whose [`primed_eviction_rate`] reaches `alpha`,
/// found by doubling then bisection on the prefix length.
pub fn build_primed_to_probability(
    target: &mut Target<'_>,
    supply: &[LineAddress],
    sweeps: usize,
    alpha: f64,
    trials: usize,
) -> Result<EvictionSet> {
    if !(0.0..=1.0).contains(&alpha) || trials == 0 || sweeps == 0 {
        return Err(Error::config(
            "alpha must lie in [0, 1]; sweeps and trials must be positive",
        ));
    }
    let rate = |t: &mut Target<'_>, n: usize| primed_eviction_rate(t, &supply[..n], sweeps, trials);
    if supply.is_empty() {
        return Err(Error::SupplyExhausted {
            best: 0.0,
            target: alpha,
            supplied: 0,
        });
    }
    let (mut lo, mut hi) = (0, 1);
    loop {
        let r = rate(target, hi)?;
        if r >= alpha {
            break;
        }
        if hi == supply.len() {
            return Err(Error::SupplyExhausted {
                best: r,
                target: alpha,
                supplied: supply.len(),
            });
        }
        lo = hi;
        hi = (2 * hi).min(supply.len());
    }
    // rate(lo) < alpha <= rate(hi)
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if rate(target, mid)? >= alpha {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(EvictionSet {
        addresses: supply[..hi].to_vec(),
        victim: target.victim,
    })
}
