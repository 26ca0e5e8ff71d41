//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Runs as part of `cargo test`; a FAIL line does not fail the build unless
//! `CACHEFX_ACCEPTANCE_STRICT=1`. The 1000-run baselines take about two hours
//! and only run with `CACHEFX_FULL_BASELINES=1`.

mod common;

use std::time::{Duration, Instant};

use cachefx_core::attack::{median, median_encryptions, AttackConfig, AttackKind, MedianSummary};
use cachefx_core::evset::{alpha_set_size, run_construction, EvsetConfig, Method};
use cachefx_core::ree::{relative_eviction_entropy, ReeConfig};
use cachefx_core::victims::VictimKind;
use cachefx_core::{DesignConfig, DesignKind, ReplacementPolicy, RngStream};

const LINES: usize = 2048;
const WAYS: usize = 16;

const REE_EXACT_BITS: f64 = 7.0;
const REE_EXACT_TOL: f64 = 0.1;
const REE_EXACT_BUDGET: Duration = Duration::from_secs(120);
const REE_PARTITIONED_TOL: f64 = 0.05;
const REE_RANDOM_MAX: f64 = 0.1;
const CEASER_S_MIN_SPAN: f64 = 6.0;
const CEASER_S_SAMPLES: usize = 20_000;
/// SHM costs two orders of magnitude more than GEM; a few seeds settle it.
const SHM_SEEDS: u64 = 5;
const METHOD_SEEDS: u64 = 31;
const SKEW_SPEEDUP: (f64, f64) = (2.0, 5.0);
const ALPHA: f64 = 0.9;
const ALPHA_SEEDS: u64 = 5;
const ALPHA_RATIO: (f64, f64) = (6.0, 15.0);
const SCATTER_SUCCESS: (f64, f64) = (0.01, 0.08);
const BASELINE_LINES: usize = 256;
const SMOKE_RUNS: usize = 100;
const SMOKE_TOL: f64 = 0.60;
const SMOKE_BUDGET: Duration = Duration::from_secs(30 * 60);
const FULL_RUNS: usize = 1000;
const FULL_TOL: f64 = 0.35;
const FULL_BUDGET: Duration = Duration::from_secs(4 * 3600);
/// (victim, kind, median encryptions)
const BASELINES: [(VictimKind, AttackKind, f64); 4] = [
    (VictimKind::Aes, AttackKind::EvictionSet, 10_590.0),
    (VictimKind::ModExp, AttackKind::EvictionSet, 94.0),
    (VictimKind::Aes, AttackKind::Occupancy, 5_664.0),
    (VictimKind::ModExp, AttackKind::Occupancy, 68.0),
];
const ISOLATION_RUNS_MODEXP: usize = 20;
const ISOLATION_RUNS_AES: usize = 10;
const WELCH_TRIALS: usize = 10_000;
const WELCH_BAND: (f64, f64) = (0.04, 0.06);

enum Verdict {
    Pass,
    Fail,
    Skip,
}

struct Report {
    failures: usize,
}

impl Report {
    fn check(&mut self, name: &str, f: impl FnOnce() -> (Verdict, String)) {
        let t0 = Instant::now();
        let (verdict, detail) = f();
        let tag = match verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => {
                self.failures += 1;
                "FAIL"
            }
            Verdict::Skip => "SKIP",
        };
        println!("{tag} {name}: {detail} [{:.1?}]", t0.elapsed());
    }
}

fn verdict(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

fn design(kind: DesignKind, lines: usize, ways: usize) -> DesignConfig {
    DesignConfig::new(kind, lines, ways, ReplacementPolicy::Random)
}

fn ree_with(d: &DesignConfig, samples: usize) -> f64 {
    let cfg = ReeConfig {
        samples,
        ..ReeConfig::default()
    };
    relative_eviction_entropy(d, &cfg, 1).expect("ree run").bits
}

fn ree(d: &DesignConfig) -> f64 {
    ree_with(d, ReeConfig::default().samples)
}

fn ree_exactness() -> (Verdict, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in [DesignKind::SetAssociative, DesignKind::Ceaser] {
        let t0 = Instant::now();
        let bits = ree(&design(kind, LINES, WAYS));
        let dt = t0.elapsed();
        ok &= (bits - REE_EXACT_BITS).abs() <= REE_EXACT_TOL && dt < REE_EXACT_BUDGET;
        parts.push(format!("{kind} {bits:.3} bits in {dt:.1?}"));
    }
    (
        verdict(ok),
        format!(
            "{} (want {REE_EXACT_BITS} ± {REE_EXACT_TOL}, < {REE_EXACT_BUDGET:?})",
            parts.join(", ")
        ),
    )
}

fn ree_zero_leakage() -> (Verdict, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for (kind, lo, hi) in [
        (
            DesignKind::WayPartitioned,
            -REE_PARTITIONED_TOL,
            REE_PARTITIONED_TOL,
        ),
        (
            DesignKind::PlCache,
            -REE_PARTITIONED_TOL,
            REE_PARTITIONED_TOL,
        ),
        (
            DesignKind::FullyAssociative,
            f64::NEG_INFINITY,
            REE_RANDOM_MAX,
        ),
        (DesignKind::NewCache, f64::NEG_INFINITY, REE_RANDOM_MAX),
    ] {
        let bits = ree(&design(kind, LINES, WAYS));
        let pass = if hi == REE_RANDOM_MAX {
            bits < hi
        } else {
            (lo..=hi).contains(&bits)
        };
        ok &= pass;
        parts.push(format!("{kind} {bits:.3}"));
    }
    (
        verdict(ok),
        format!(
            "{} (partitioned 0 ± {REE_PARTITIONED_TOL}, random < {REE_RANDOM_MAX})",
            parts.join(", ")
        ),
    )
}

fn ceaser_s_monotonicity() -> (Verdict, String) {
    let ceaser_s = |ways: usize, p: usize| {
        ree_with(
            &design(DesignKind::CeaserS, LINES, ways).with_partitions(p),
            CEASER_S_SAMPLES,
        )
    };
    let at16: Vec<f64> = [1, 2, 4, 8, 16]
        .iter()
        .map(|&p| ceaser_s(WAYS, p))
        .collect();
    let decreasing = at16.windows(2).all(|w| w[1] < w[0]);
    let mut grid = at16.clone();
    for ways in [1usize, 2, 4, 8] {
        let mut p = 1;
        while p <= ways {
            grid.push(ceaser_s(ways, p));
            p *= 2;
        }
    }
    let max = grid.iter().cloned().fold(f64::MIN, f64::max);
    let min = grid.iter().cloned().fold(f64::MAX, f64::min);
    let span = max - min;
    let series: Vec<String> = at16.iter().map(|b| format!("{b:.2}")).collect();
    (
        verdict(decreasing && span >= CEASER_S_MIN_SPAN),
        format!(
            "{CEASER_S_SAMPLES} samples; 16 ways, partitions 1..16: [{}] strictly decreasing={decreasing}; grid of {} span {span:.2} bits (want >= {CEASER_S_MIN_SPAN})",
            series.join(", "),
            grid.len()
        ),
    )
}

fn ppp_true_conflicts() -> (Verdict, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in DesignKind::ALL {
        let r = run_construction(
            &design(kind, LINES, WAYS),
            Method::Ppp,
            None,
            &EvsetConfig::default(),
            1,
        );
        match r {
            Ok(r) => {
                // nothing can collide across way partitions; an empty set is the right answer there
                let nonempty = !r.set.is_empty() || kind == DesignKind::WayPartitioned;
                ok &= r.true_conflict_rate == 1.0 && nonempty;
                parts.push(format!(
                    "{kind} {} ({} lines)",
                    r.true_conflict_rate,
                    r.set.len()
                ));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{kind} error: {e}"));
            }
        }
    }
    (verdict(ok), parts.join(", "))
}

fn median_accesses(kind: DesignKind, method: Method) -> f64 {
    let seeds = if method == Method::Shm {
        SHM_SEEDS
    } else {
        METHOD_SEEDS
    };
    let mut xs: Vec<f64> = (0..seeds)
        .map(|s| {
            run_construction(
                &design(kind, LINES, WAYS),
                method,
                None,
                &EvsetConfig::default(),
                1000 + s,
            )
            .map_or(f64::INFINITY, |r| r.memory_accesses as f64)
        })
        .collect();
    median(&mut xs).expect("seeds")
}

fn method_ordering() -> (Verdict, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    let mut ppp = std::collections::HashMap::new();
    for kind in [
        DesignKind::SetAssociative,
        DesignKind::Ceaser,
        DesignKind::CeaserS,
        DesignKind::ScatterCache,
    ] {
        let [shm, gem, p] = Method::ALL.map(|m| median_accesses(kind, m));
        ok &= shm >= gem && gem >= p;
        ppp.insert(kind, p);
        parts.push(format!("{kind} shm {shm:.3e} gem {gem:.3e} ppp {p:.3e}"));
    }
    let speedup = ppp[&DesignKind::Ceaser] / ppp[&DesignKind::CeaserS];
    ok &= (SKEW_SPEEDUP.0..=SKEW_SPEEDUP.1).contains(&speedup);
    (
        verdict(ok),
        format!(
            "medians over {SHM_SEEDS} (shm) / {METHOD_SEEDS} seeds: {}; ceaser/ceaser-s ppp {speedup:.2}x (want {}..{})",
            parts.join("; "),
            SKEW_SPEEDUP.0,
            SKEW_SPEEDUP.1
        ),
    )
}

fn alpha_sizes() -> (Verdict, String) {
    let cfg = EvsetConfig::default();
    let median_size = |kind| {
        let mut xs: Vec<f64> = (0..ALPHA_SEEDS)
            .map(|s| {
                alpha_set_size(&design(kind, LINES, WAYS), ALPHA, &cfg, 2000 + s)
                    .map_or(f64::NAN, |n| n as f64)
            })
            .collect();
        median(&mut xs).expect("seeds")
    };
    let scatter = median_size(DesignKind::ScatterCache);
    let ceaser = median_size(DesignKind::Ceaser);
    let ratio = scatter / ceaser;
    let mut rates: Vec<f64> = (0..ALPHA_SEEDS)
        .map(|s| {
            run_construction(
                &design(DesignKind::ScatterCache, LINES, WAYS),
                Method::Ppp,
                Some(WAYS),
                &cfg,
                3000 + s,
            )
            .map_or(f64::NAN, |r| r.success_rate)
        })
        .collect();
    let success = median(&mut rates).expect("seeds");
    let ok = (ALPHA_RATIO.0..=ALPHA_RATIO.1).contains(&ratio)
        && (SCATTER_SUCCESS.0..=SCATTER_SUCCESS.1).contains(&success);
    (
        verdict(ok),
        format!(
            "alpha {ALPHA}: scatter {scatter} / ceaser {ceaser} = {ratio:.2} (want {}..{}); scatter {WAYS}-line success {success:.3} (want {}..{})",
            ALPHA_RATIO.0, ALPHA_RATIO.1, SCATTER_SUCCESS.0, SCATTER_SUCCESS.1
        ),
    )
}

fn baselines(runs: usize, tol: f64, budget: Duration) -> (Verdict, String) {
    let t0 = Instant::now();
    let fa = design(DesignKind::FullyAssociative, BASELINE_LINES, BASELINE_LINES);
    let mut ok = true;
    let mut parts = Vec::new();
    let mut got = Vec::new();
    for (victim, kind, target) in BASELINES {
        let s: MedianSummary = median_encryptions(&fa, &AttackConfig::new(victim, kind), runs, 7)
            .expect("attack runs");
        let within = (s.median - target).abs() <= tol * target;
        ok &= within;
        got.push((victim, kind, s.median));
        parts.push(format!(
            "{kind}/{victim} {} (target {target}, {:+.0}%, capped {:.0}%)",
            s.median,
            100.0 * (s.median / target - 1.0),
            100.0 * s.capped_fraction
        ));
    }
    for victim in VictimKind::ALL {
        let m = |k| got.iter().find(|g| g.0 == victim && g.1 == k).unwrap().2;
        let less = m(AttackKind::Occupancy) < m(AttackKind::EvictionSet);
        ok &= less;
        parts.push(format!("{victim} occupancy < eviction-set: {less}"));
    }
    let dt = t0.elapsed();
    ok &= dt <= budget;
    (
        verdict(ok),
        format!(
            "{runs} runs, ±{:.0}%, {dt:.0?} of {budget:?}: {}",
            tol * 100.0,
            parts.join("; ")
        ),
    )
}

fn isolation() -> (Verdict, String) {
    let wp = design(DesignKind::WayPartitioned, BASELINE_LINES, WAYS);
    let mut ok = true;
    let mut parts = Vec::new();
    for victim in VictimKind::ALL {
        let runs = if victim == VictimKind::Aes {
            ISOLATION_RUNS_AES
        } else {
            ISOLATION_RUNS_MODEXP
        };
        for kind in AttackKind::ALL {
            let s = median_encryptions(&wp, &AttackConfig::new(victim, kind), runs, 11)
                .expect("attack runs");
            ok &= s.capped_fraction == 1.0;
            parts.push(format!(
                "{kind}/{victim} {:.0}% of {runs} capped",
                100.0 * s.capped_fraction
            ));
        }
    }
    (verdict(ok), parts.join(", "))
}

fn lru_oracle() -> (Verdict, String) {
    let mut rng = RngStream::new(17);
    let mut traces = 0;
    for ways in 1..=8 {
        for sets in [1usize, 4, 16] {
            let trace = common::random_trace(&mut rng, 10_000, (sets * ways * 3) as u64);
            if let Err(e) =
                common::lru_matches_reference(DesignKind::SetAssociative, sets, ways, &trace)
            {
                return (Verdict::Fail, e);
            }
            traces += 1;
        }
    }
    (
        Verdict::Pass,
        format!("{traces} traces of 10^4 steps, W 1..8, exact"),
    )
}

fn bijectivity() -> (Verdict, String) {
    for bits in 0..=10 {
        if let Err(e) = common::bijective_exhaustive(0xc0ffee ^ bits as u64, bits) {
            return (Verdict::Fail, e);
        }
    }
    (Verdict::Pass, "index bits 0..=10 exhaustive".into())
}

fn kl() -> (Verdict, String) {
    match common::kl_analytic_cases() {
        Ok(()) => (Verdict::Pass, "analytic cases exact to 1e-12".into()),
        Err(e) => (Verdict::Fail, e),
    }
}

fn welch() -> (Verdict, String) {
    let fp = common::welch_false_positive_rate(WELCH_TRIALS, (16, 16), (1.0, 1.0), 99);
    let fp2 = common::welch_false_positive_rate(WELCH_TRIALS, (16, 40), (1.0, 3.0), 98);
    let ok = [fp, fp2]
        .iter()
        .all(|f| (WELCH_BAND.0..=WELCH_BAND.1).contains(f));
    (
        verdict(ok),
        format!(
            "false positives {fp:.4} / {fp2:.4} over {WELCH_TRIALS} trials (want {}..{})",
            WELCH_BAND.0, WELCH_BAND.1
        ),
    )
}

fn determinism() -> (Verdict, String) {
    let bad: Vec<String> = DesignKind::ALL
        .iter()
        .filter(|&&d| !common::replay_is_identical(d, 5))
        .map(|d| d.to_string())
        .collect();
    if bad.is_empty() {
        (Verdict::Pass, "all 9 designs replay identically".into())
    } else {
        (Verdict::Fail, format!("diverged: {}", bad.join(", ")))
    }
}

fn main() {
    let full = std::env::var("CACHEFX_FULL_BASELINES").is_ok_and(|v| v == "1");
    let strict = std::env::var("CACHEFX_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut r = Report { failures: 0 };

    r.check("properties/lru-oracle", lru_oracle);
    r.check("properties/index-bijectivity", bijectivity);
    r.check("properties/kl-analytic", kl);
    r.check("properties/welch-calibration", welch);
    r.check("properties/determinism", determinism);
    r.check("ree-exactness", ree_exactness);
    r.check("ree-zero-leakage", ree_zero_leakage);
    r.check("ceaser-s-monotonicity", ceaser_s_monotonicity);
    r.check("ppp-true-conflicts", ppp_true_conflicts);
    r.check("method-ordering", method_ordering);
    r.check("alpha-set-sizes", alpha_sizes);
    r.check("isolation", isolation);
    r.check("baselines-smoke", || {
        baselines(SMOKE_RUNS, SMOKE_TOL, SMOKE_BUDGET)
    });
    if full {
        r.check("baselines-full", || {
            baselines(FULL_RUNS, FULL_TOL, FULL_BUDGET)
        });
    } else {
        r.check("baselines-full", || {
            (
                Verdict::Skip,
                "set CACHEFX_FULL_BASELINES=1 (about 2 h)".into(),
            )
        });
    }

    println!("acceptance: {} failing criteria", r.failures);
    if strict && r.failures > 0 {
        std::process::exit(1);
    }
}
