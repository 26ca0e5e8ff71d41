use cachefx_core::evset::{run_construction, EvsetConfig, Method, Termination};
use cachefx_core::{DesignConfig, DesignKind, ReplacementPolicy};
use proptest::prelude::*;

fn small(kind: DesignKind) -> DesignConfig {
    DesignConfig::new(kind, 256, 8, ReplacementPolicy::Random)
}

#[test]
fn ppp_sets_are_all_true_colliders() {
    for kind in DesignKind::ALL {
        let r =
            run_construction(&small(kind), Method::Ppp, None, &EvsetConfig::default(), 3).unwrap();
        assert_eq!(r.true_conflict_rate, 1.0, "{kind}");
        if kind == DesignKind::WayPartitioned {
            assert!(r.set.is_empty());
        } else {
            assert_eq!(r.terminated, Termination::TargetReached, "{kind}");
            assert!(!r.set.is_empty(), "{kind}");
        }
    }
}

#[test]
fn reduction_methods_reach_target_on_lru_set_associative() {
    for m in [Method::Shm, Method::Gem] {
        // under LRU one sweep of W colliders always evicts the victim
        let lru = DesignConfig::new(DesignKind::SetAssociative, 256, 8, ReplacementPolicy::Lru);
        let r = run_construction(&lru, m, None, &EvsetConfig::default(), 4).unwrap();
        assert_eq!(r.terminated, Termination::TargetReached, "{m}");
        assert_eq!(r.set.len(), 8);
        assert_eq!(r.true_conflict_rate, 1.0);
        assert!(r.success_rate > 0.99);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn construction_is_seed_deterministic(seed in 0u64..1000, m in prop::sample::select(Method::ALL.to_vec())) {
        let cfg = small(DesignKind::Ceaser);
        let a = run_construction(&cfg, m, None, &EvsetConfig::default(), seed).unwrap();
        let b = run_construction(&cfg, m, None, &EvsetConfig::default(), seed).unwrap();
        prop_assert_eq!(a.set, b.set);
        prop_assert_eq!(a.memory_accesses, b.memory_accesses);
    }
}
