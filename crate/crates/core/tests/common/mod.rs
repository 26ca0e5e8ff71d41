//! Checks shared by the property suites and the acceptance report.
#![allow(dead_code)]

use std::collections::VecDeque;

use cachefx_core::attack::welch_confident;
use cachefx_core::designs::{DesignConfig, DesignKind};
use cachefx_core::index::KeyedIndex;
use cachefx_core::ree::{kl_divergence, EvictionHistogram};
use cachefx_core::{AccessKind, DomainId, LineAddress, ReplacementPolicy, RngStream};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Brute-force LRU: one recency list per set, most recent first.
pub struct ReferenceLru {
    sets: Vec<VecDeque<u64>>,
    ways: usize,
}

impl ReferenceLru {
    pub fn new(sets: usize, ways: usize) -> Self {
        ReferenceLru {
            sets: vec![VecDeque::new(); sets],
            ways,
        }
    }

    /// Returns (hit, evicted line).
    pub fn access(&mut self, line: u64) -> (bool, Option<u64>) {
        let n = self.sets.len() as u64;
        let set = &mut self.sets[(line % n) as usize];
        if let Some(pos) = set.iter().position(|&l| l == line) {
            set.remove(pos);
            set.push_front(line);
            return (true, None);
        }
        let evicted = if set.len() == self.ways {
            set.pop_back()
        } else {
            None
        };
        set.push_front(line);
        (false, evicted)
    }
}

/// Drives an LRU design and the reference with the same trace; first
/// divergence is reported.
pub fn lru_matches_reference(
    design: DesignKind,
    sets: usize,
    ways: usize,
    trace: &[u64],
) -> Result<(), String> {
    let cfg = DesignConfig::new(design, sets * ways, ways, ReplacementPolicy::Lru);
    let mut cache = cfg.build(0).map_err(|e| e.to_string())?;
    let mut reference = ReferenceLru::new(
        if design == DesignKind::FullyAssociative {
            1
        } else {
            sets
        },
        ways,
    );
    for (step, &line) in trace.iter().enumerate() {
        let got = cache
            .read(LineAddress::new(line), DomainId::ATTACKER)
            .map_err(|e| e.to_string())?;
        let want = reference.access(line);
        let got = (got.hit, got.evicted.map(|l| l.addr.value()));
        if got != want {
            return Err(format!(
                "{design} step {step} line {line}: got {got:?}, want {want:?}"
            ));
        }
    }
    Ok(())
}

pub fn random_trace(rng: &mut RngStream, len: usize, span: u64) -> Vec<u64> {
    (0..len).map(|_| rng.gen_range(0..span)).collect()
}

/// Every value of the 2·bits window maps to a distinct value and inverts back.
pub fn bijective_exhaustive(key: u64, bits: u32) -> Result<(), String> {
    let f = KeyedIndex::new(key, bits);
    let n = 1u64 << (2 * bits);
    let mut seen = vec![false; n as usize];
    for x in 0..n {
        let y = f.permute(x);
        if y >= n || seen[y as usize] {
            return Err(format!(
                "bits {bits} key {key:#x}: {x} -> {y} collides or escapes"
            ));
        }
        seen[y as usize] = true;
        if f.invert(y) != x {
            return Err(format!("bits {bits} key {key:#x}: invert({y}) != {x}"));
        }
    }
    Ok(())
}

/// KL cases with closed forms.
pub fn kl_analytic_cases() -> Result<(), String> {
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    let uniform4 = [0.25; 4];
    let cases: [(&str, f64, f64); 4] = [
        (
            "identical",
            kl_divergence(&uniform4, &uniform4).unwrap(),
            0.0,
        ),
        (
            "point mass vs uniform",
            kl_divergence(&[1.0, 0.0, 0.0, 0.0], &uniform4).unwrap(),
            2.0,
        ),
        (
            "two-point",
            kl_divergence(&[0.5, 0.5], &[0.25, 0.75]).unwrap(),
            0.5 * 2f64.log2() + 0.5 * (0.5f64 / 0.75).log2(),
        ),
        (
            "histogram on one of 2048 offsets",
            EvictionHistogram::from_counts({
                let mut c = vec![0; 2048];
                c[17] = 1000;
                c
            })
            .relative_entropy(),
            11.0,
        ),
    ];
    for (name, got, want) in cases {
        if !close(got, want) {
            return Err(format!("{name}: {got} != {want}"));
        }
    }
    if EvictionHistogram::from_counts(vec![5; 128]).relative_entropy() != 0.0 {
        return Err("flat histogram is not zero".into());
    }
    if kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).is_ok() {
        return Err("unsupported q accepted".into());
    }
    Ok(())
}

/// False-positive rate of the Welch test on samples drawn from one mean.
/// Sizes and spreads differ between the two samples.
pub fn welch_false_positive_rate(
    trials: usize,
    sizes: (usize, usize),
    sds: (f64, f64),
    seed: u64,
) -> f64 {
    let mut rng = RngStream::new(seed);
    let a_dist = Normal::new(3.0, sds.0).unwrap();
    let b_dist = Normal::new(3.0, sds.1).unwrap();
    let mut hits = 0;
    for _ in 0..trials {
        let a: Vec<f64> = (0..sizes.0).map(|_| a_dist.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..sizes.1).map(|_| b_dist.sample(&mut rng)).collect();
        hits += usize::from(welch_confident(&a, &b, 0.95));
    }
    hits as f64 / trials as f64
}

/// Outcome trace of a mixed two-domain workload.
pub fn workload_trace(design: DesignKind, seed: u64) -> Vec<(bool, Option<u64>)> {
    let cfg = DesignConfig::new(design, 256, 8, ReplacementPolicy::Random);
    let mut cache = cfg.build(seed).unwrap();
    let mut rng = RngStream::new(seed ^ 0x5eed);
    let mut out = Vec::with_capacity(20_000);
    for _ in 0..20_000 {
        let domain = DomainId(rng.gen_range(0..2));
        let line = LineAddress::new(rng.gen_range(0..2048) + 4096 * domain.0 as u64);
        let kind = if rng.gen_bool(0.1) {
            AccessKind::Write
        } else {
            AccessKind::Read
        };
        let o = cache.access(line, domain, kind).unwrap();
        out.push((o.hit, o.evicted.map(|l| l.addr.value())));
    }
    out
}

pub fn replay_is_identical(design: DesignKind, seed: u64) -> bool {
    workload_trace(design, seed) == workload_trace(design, seed)
}
