//! Distinguishing attacks on the cryptographic victims.
//!
//! Each round measures both keys once, in random order. A measurement primes
//! the attacker's lines, lets the victim run, and counts misses on one probe
//! sweep. The attack stops when Welch's test separates the two keys' mean
//! miss counts, or at the round cap.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::addr::{DomainId, Line, LineAddress, MemoryRegion, RegionAllocator};
use crate::cache::CacheModel;
use crate::designs::DesignConfig;
use crate::error::{Error, Result};
use crate::evset::{build_primed_to_probability, Target};
use crate::rng::RngStream;
use crate::victims::aes::{AesKeyPair, AesVictim, Rounds};
use crate::victims::modexp::{ExponentPair, ModExpVictim, DEFAULT_BIT};
use crate::victims::{CachePort, VictimKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    EvictionSet,
    Occupancy,
}

impl AttackKind {
    pub const ALL: [AttackKind; 2] = [AttackKind::EvictionSet, AttackKind::Occupancy];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::EvictionSet => "eviction-set",
            AttackKind::Occupancy => "occupancy",
        }
    }
}

impl std::fmt::Display for AttackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "eviction-set" | "evset" | "evictionset" => Ok(AttackKind::EvictionSet),
            "occupancy" => Ok(AttackKind::Occupancy),
            other => Err(Error::config(format!(
                "unknown attack `{other}` (expected eviction-set or occupancy)"
            ))),
        }
    }
}

/// When the stopping test is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LookSchedule {
    /// At `min_rounds`, twice that, four times that and so on, plus the cap.
    /// The overall confidence is split evenly across the looks.
    #[default]
    Doubling,
    /// After every round from `min_rounds` on, each at the full confidence.
    /// The overall false-stop rate grows with the cap.
    EveryRound,
}

impl LookSchedule {
    /// Rounds at which the test runs, and the per-look confidence.
    pub fn looks(self, min_rounds: usize, cap: usize, confidence: f64) -> (Vec<usize>, f64) {
        match self {
            LookSchedule::EveryRound => ((min_rounds.min(cap)..=cap).collect(), confidence),
            LookSchedule::Doubling => {
                let mut at = Vec::new();
                let mut n = min_rounds.max(1);
                while n < cap {
                    at.push(n);
                    n *= 2;
                }
                at.push(cap);
                let per_look = 1.0 - (1.0 - confidence) / at.len() as f64;
                (at, per_look)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    pub victim: VictimKind,
    pub kind: AttackKind,
    pub prime_repetitions: usize,
    /// Defaults to 1000 rounds for mod-exp and 100000 for AES.
    pub round_cap: Option<usize>,
    /// Overall confidence that the two keys' means differ.
    pub confidence: f64,
    pub min_rounds: usize,
    pub schedule: LookSchedule,
    /// Steady-state probability with which the prime evicts the monitored line.
    pub alpha: f64,
    /// Trials used to estimate that probability.
    pub alpha_trials: usize,
    /// Use exactly this many colliding addresses instead of building to `alpha`.
    pub evset_size: Option<usize>,
    /// Extra attacker lines touched after a round with no probe misses.
    pub fallback_lines: usize,
    pub aes_rounds: Rounds,
    pub exponent_bit: u32,
    /// Replace the second key with the first (soundness check).
    pub identical_keys: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            victim: VictimKind::Aes,
            kind: AttackKind::EvictionSet,
            prime_repetitions: 3,
            round_cap: None,
            confidence: 0.95,
            min_rounds: 16,
            schedule: LookSchedule::Doubling,
            alpha: 0.9,
            alpha_trials: 1000,
            evset_size: None,
            fallback_lines: 1,
            aes_rounds: Rounds::All,
            exponent_bit: DEFAULT_BIT,
            identical_keys: false,
        }
    }
}

impl AttackConfig {
    pub fn new(victim: VictimKind, kind: AttackKind) -> Self {
        AttackConfig {
            victim,
            kind,
            ..Default::default()
        }
    }

    pub fn effective_round_cap(&self) -> usize {
        self.round_cap.unwrap_or(match self.victim {
            VictimKind::Aes => 100_000,
            VictimKind::ModExp => 1000,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.effective_round_cap() == 0 {
            return Err(Error::config("round_cap must be positive"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::config("confidence must lie in (0, 1)"));
        }
        if self.min_rounds < 2 {
            return Err(Error::config("min_rounds must be at least 2"));
        }
        if self.prime_repetitions == 0 {
            return Err(Error::config("prime_repetitions must be positive"));
        }
        if self.evset_size == Some(0) {
            return Err(Error::config("evset_size must be positive"));
        }
        Ok(())
    }
}

/// Two-sided normal critical value for `confidence`.
pub fn critical_value(confidence: f64) -> f64 {
    Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(1.0 - (1.0 - confidence) / 2.0)
}

/// Running mean and variance.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut m = Moments::default();
        for &x in xs {
            m.push(x);
        }
        m
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }
}

/// Welch's t statistic; `None` when both samples have zero variance.
pub fn welch_t(a: &Moments, b: &Moments) -> Option<f64> {
    let se2 = a.variance() / a.n as f64 + b.variance() / b.n as f64;
    if se2 > 0.0 {
        Some((a.mean - b.mean) / se2.sqrt())
    } else {
        None
    }
}

/// Two-sided Student-t critical value; the normal quantile once `df` is huge.
pub fn t_critical_value(confidence: f64, df: f64) -> f64 {
    if !df.is_finite() || df > 1e6 {
        return critical_value(confidence);
    }
    StudentsT::new(0.0, 1.0, df)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - (1.0 - confidence) / 2.0)
}

/// Welch-Satterthwaite degrees of freedom; `None` when both variances vanish.
pub fn welch_df(a: &Moments, b: &Moments) -> Option<f64> {
    let (va, vb) = (a.variance() / a.n as f64, b.variance() / b.n as f64);
    let se2 = va + vb;
    if se2 <= 0.0 {
        return None;
    }
    let denom = va * va / (a.n - 1) as f64 + vb * vb / (b.n - 1) as f64;
    Some(se2 * se2 / denom)
}

fn welch_moments(a: &Moments, b: &Moments, confidence: f64) -> bool {
    match (welch_t(a, b), welch_df(a, b)) {
        (Some(t), Some(df)) => t.abs() > t_critical_value(confidence, df),
        _ => a.mean != b.mean,
    }
}

/// Whether the two samples' means differ at `confidence` under Welch's
/// unequal-variance t-test, two-sided.
pub fn welch_confident(a: &[f64], b: &[f64], confidence: f64) -> bool {
    if a.len() < 2 || b.len() < 2 {
        return false;
    }
    welch_moments(&Moments::from_slice(a), &Moments::from_slice(b), confidence)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Stop {
    Confident,
    CapReached,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistinguishResult {
    /// Victim executions: two per round.
    pub encryptions: u64,
    pub rounds: usize,
    pub stopped: Stop,
    pub mean_misses: [f64; 2],
    pub miss_variance: [f64; 2],
    /// Attacker lines primed and probed per measurement.
    pub probe_lines: usize,
    /// Rounds in which the first key was measured first.
    pub key1_first: usize,
}

impl DistinguishResult {
    pub fn capped(&self) -> bool {
        self.stopped == Stop::CapReached
    }
}

enum Secrets {
    Aes {
        pair: AesKeyPair,
        victims: Box<[AesVictim; 2]>,
    },
    ModExp(ExponentPair),
}

/// One attack instance: a cache, a placed victim and the attacker's lines.
pub struct Attack<'a> {
    cache: &'a mut dyn CacheModel,
    victim_region: &'a MemoryRegion,
    lines: Vec<LineAddress>,
    attacker: DomainId,
    scratch: &'a MemoryRegion,
    scratch_cursor: u64,
    fallback: bool,
    secrets: Secrets,
    cfg: &'a AttackConfig,
}

impl<'a> Attack<'a> {
    /// `lines` is the eviction set or the occupancy buffer; `scratch` supplies
    /// the fresh lines touched after silent rounds.
    pub fn new(
        cache: &'a mut dyn CacheModel,
        victim_region: &'a MemoryRegion,
        lines: Vec<LineAddress>,
        scratch: &'a MemoryRegion,
        cfg: &'a AttackConfig,
        rng: &mut RngStream,
    ) -> Result<Self> {
        cfg.validate()?;
        if lines.is_empty() {
            return Err(Error::config(
                "the attack needs a non-empty eviction set or buffer",
            ));
        }
        if victim_region.size_lines() < cfg.victim.region_lines() {
            return Err(Error::config(
                "victim region is too small for the victim's buffers",
            ));
        }
        let secrets = match cfg.victim {
            VictimKind::Aes => {
                let mut pair = AesKeyPair::generate(rng);
                if cfg.identical_keys {
                    pair.key2 = pair.key1;
                }
                let victims = Box::new([
                    AesVictim::new(&pair.key1).with_rounds(cfg.aes_rounds),
                    AesVictim::new(&pair.key2).with_rounds(cfg.aes_rounds),
                ]);
                Secrets::Aes { pair, victims }
            }
            VictimKind::ModExp => {
                let mut pair = ExponentPair::generate(rng, cfg.exponent_bit)?;
                if cfg.identical_keys {
                    pair.e2 = pair.e1;
                }
                Secrets::ModExp(pair)
            }
        };
        Ok(Attack {
            cache,
            victim_region,
            lines,
            attacker: scratch.domain(),
            scratch,
            scratch_cursor: 0,
            fallback: cfg.kind == AttackKind::EvictionSet && cfg.fallback_lines > 0,
            secrets,
            cfg,
        })
    }

    fn prime(&mut self) -> Result<()> {
        for _ in 0..self.cfg.prime_repetitions {
            for &a in &self.lines {
                self.cache.read(a, self.attacker)?;
            }
        }
        Ok(())
    }

    fn probe(&mut self) -> Result<u64> {
        let mut misses = 0;
        for &a in &self.lines {
            if !self.cache.read(a, self.attacker)?.hit {
                misses += 1;
            }
        }
        Ok(misses)
    }

    /// Prime, one victim execution with key `which`, probe.
    pub fn measure(&mut self, which: usize, rng: &mut RngStream) -> Result<u64> {
        match &self.secrets {
            Secrets::Aes { pair, .. } => {
                let pt = pair.sample_vulnerable_plaintext(rng);
                self.prime()?;
                let Secrets::Aes { victims, .. } = &self.secrets else {
                    unreachable!()
                };
                victims[which].encrypt(
                    &pt,
                    &mut CachePort::new(&mut *self.cache, self.victim_region),
                )?;
                self.probe()
            }
            &Secrets::ModExp(pair) => {
                let (e, bit) = (pair.exponent(which), pair.bit);
                let mut misses = 0;
                for b in ModExpVictim::bit_order() {
                    if b == bit {
                        self.prime()?;
                    }
                    ModExpVictim.step(
                        e,
                        b,
                        &mut CachePort::new(&mut *self.cache, self.victim_region),
                    )?;
                    if b == bit {
                        misses = self.probe()?;
                    }
                }
                Ok(misses)
            }
        }
    }

    fn touch_fresh_lines(&mut self) -> Result<()> {
        for _ in 0..self.cfg.fallback_lines {
            let addr = self.scratch.line(self.scratch_cursor)?;
            self.scratch_cursor = (self.scratch_cursor + 1) % self.scratch.size_lines();
            self.cache.read(addr, self.attacker)?;
        }
        Ok(())
    }

    pub fn run(&mut self, rng: &mut RngStream) -> Result<DistinguishResult> {
        let cap = self.cfg.effective_round_cap();
        let (looks, per_look) =
            self.cfg
                .schedule
                .looks(self.cfg.min_rounds, cap, self.cfg.confidence);
        let mut next_look = looks.iter().copied().peekable();
        let mut m = [Moments::default(); 2];
        let mut key1_first = 0;
        let mut rounds = 0;
        let mut stopped = Stop::CapReached;
        while rounds < cap {
            let first = usize::from(rng.gen::<bool>());
            if first == 0 {
                key1_first += 1;
            }
            let mut silent = true;
            for which in [first, 1 - first] {
                let misses = self.measure(which, rng)?;
                silent &= misses == 0;
                m[which].push(misses as f64);
            }
            if silent && self.fallback {
                self.touch_fresh_lines()?;
            }
            rounds += 1;
            if next_look.next_if_eq(&rounds).is_some() && welch_moments(&m[0], &m[1], per_look) {
                stopped = Stop::Confident;
                break;
            }
        }
        Ok(DistinguishResult {
            encryptions: 2 * rounds as u64,
            rounds,
            stopped,
            mean_misses: [m[0].mean(), m[1].mean()],
            miss_variance: [m[0].variance(), m[1].variance()],
            probe_lines: self.lines.len(),
            key1_first,
        })
    }
}

/// Regions of one attack run.
struct Layout {
    victim: MemoryRegion,
    pool: MemoryRegion,
    scratch: MemoryRegion,
}

fn layout(design: &DesignConfig, victim: VictimKind, rng: &mut RngStream) -> Result<Layout> {
    let mut alloc = RegionAllocator::default();
    let lines = design.lines as u64;
    Ok(Layout {
        victim: alloc.allocate(rng, victim.region_lines().max(64), DomainId::VICTIM)?,
        pool: alloc.allocate(rng, 16 * lines, DomainId::ATTACKER)?,
        scratch: alloc.allocate(rng, 1 << 20, DomainId::ATTACKER)?,
    })
}

/// The attacker lines for one run: an eviction set for the monitored line or
/// a cache-sized buffer.
fn attack_lines(
    cache: &mut dyn CacheModel,
    l: &Layout,
    cfg: &AttackConfig,
    rng: &mut RngStream,
) -> Result<Vec<LineAddress>> {
    if cfg.kind == AttackKind::Occupancy {
        // as much as the attacker can hold, which a partition may cap below the cache size
        let lines = cache.capacity_for(DomainId::ATTACKER) as u64;
        return (0..lines).map(|o| l.pool.line(o)).collect();
    }
    let victim = Line::new(cfg.victim.monitored_line(&l.victim)?, DomainId::VICTIM);
    let mut target = Target {
        cache,
        pool: &l.pool,
        victim,
    };
    let want = cfg.evset_size.unwrap_or(l.pool.size_lines() as usize);
    let supply = target.oracle_colliders(want, rng)?;
    let set = if cfg.evset_size.is_some() {
        supply
    } else {
        match build_primed_to_probability(
            &mut target,
            &supply,
            cfg.prime_repetitions,
            cfg.alpha,
            cfg.alpha_trials,
        ) {
            Ok(set) => set.addresses,
            Err(Error::SupplyExhausted { .. }) => supply,
            Err(e) => return Err(e),
        }
    };
    if set.is_empty() {
        // no attacker line can displace the victim: prime as many lines as
        // a set holds anyway
        let ways = target.cache.geometry().ways as u64;
        return (0..ways).map(|o| l.pool.line(o)).collect();
    }
    target.cache.flush_all();
    Ok(set)
}

/// Builds the design, places victim and attacker at random bases, prepares
/// the attacker's lines and runs one distinguishing attack.
pub fn run_attack(
    design: &DesignConfig,
    cfg: &AttackConfig,
    seed: u64,
) -> Result<DistinguishResult> {
    cfg.validate()?;
    let root = RngStream::new(seed);
    let mut cache = design.build(root.child(0).seed())?;
    let mut rng = root.child(1);
    let l = layout(design, cfg.victim, &mut rng)?;
    let lines = attack_lines(cache.as_mut(), &l, cfg, &mut rng)?;
    cache.flush_all();
    cache.reset_statistics();
    let mut attack = Attack::new(cache.as_mut(), &l.victim, lines, &l.scratch, cfg, &mut rng)?;
    attack.run(&mut rng)
}

/// Seed of run `index` in a batch rooted at `seed_base`.
pub fn run_seed(seed_base: u64, index: usize) -> u64 {
    RngStream::new(seed_base).child(index as u64).seed()
}

/// `runs` independent attacks, in run-index order.
pub fn run_attacks(
    design: &DesignConfig,
    cfg: &AttackConfig,
    runs: usize,
    seed_base: u64,
) -> Result<Vec<DistinguishResult>> {
    (0..runs)
        .into_par_iter()
        .map(|i| run_attack(design, cfg, run_seed(seed_base, i)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MedianSummary {
    /// Median encryptions; capped runs count at the cap.
    pub median: f64,
    pub capped_fraction: f64,
    pub runs: usize,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

pub fn summarize(results: &[DistinguishResult]) -> Option<MedianSummary> {
    let mut enc: Vec<f64> = results.iter().map(|r| r.encryptions as f64).collect();
    let capped = results.iter().filter(|r| r.capped()).count();
    Some(MedianSummary {
        median: median(&mut enc)?,
        capped_fraction: capped as f64 / results.len() as f64,
        runs: results.len(),
    })
}

pub fn median_encryptions(
    design: &DesignConfig,
    cfg: &AttackConfig,
    runs: usize,
    seed_base: u64,
) -> Result<MedianSummary> {
    if runs == 0 {
        return Err(Error::config("runs must be positive"));
    }
    let results = run_attacks(design, cfg, runs, seed_base)?;
    Ok(summarize(&results).expect("non-empty"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub size: usize,
    pub summary: MedianSummary,
}

/// Median encryptions of the eviction-set attack for each set size, and the
/// size with the fewest.
pub fn optimal_evset_sweep(
    design: &DesignConfig,
    cfg: &AttackConfig,
    sizes: &[usize],
    runs: usize,
    seed_base: u64,
) -> Result<(Vec<SweepPoint>, usize)> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::config("sweep sizes must be non-empty and positive"));
    }
    let mut points = Vec::with_capacity(sizes.len());
    for (i, &size) in sizes.iter().enumerate() {
        let c = AttackConfig {
            kind: AttackKind::EvictionSet,
            evset_size: Some(size),
            ..cfg.clone()
        };
        let summary = median_encryptions(design, &c, runs, run_seed(seed_base, i))?;
        points.push(SweepPoint { size, summary });
    }
    let best = points
        .iter()
        .min_by(|a, b| a.summary.median.total_cmp(&b.summary.median))
        .map(|p| p.size)
        .expect("non-empty");
    Ok((points, best))
}
