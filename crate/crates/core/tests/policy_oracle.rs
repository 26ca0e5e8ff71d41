mod common;

use cachefx_core::{DesignKind, RngStream};
use common::{lru_matches_reference, random_trace};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn set_associative_lru_matches_brute_force(ways in 1usize..=8, sets_log in 0u32..4, seed: u64) {
        let sets = 1 << sets_log;
        let span = (sets * ways * 3) as u64;
        let trace = random_trace(&mut RngStream::new(seed), 10_000, span);
        prop_assert_eq!(lru_matches_reference(DesignKind::SetAssociative, sets, ways, &trace), Ok(()));
    }

    #[test]
    fn fully_associative_lru_matches_brute_force(ways in 1usize..=8, seed: u64) {
        let trace = random_trace(&mut RngStream::new(seed), 10_000, (ways * 2) as u64);
        prop_assert_eq!(lru_matches_reference(DesignKind::FullyAssociative, 1, ways, &trace), Ok(()));
    }
}

#[test]
fn lru_single_domain_plcache_is_set_associative() {
    let trace = random_trace(&mut RngStream::new(3), 10_000, 96);
    assert_eq!(
        lru_matches_reference(DesignKind::PlCache, 4, 8, &trace),
        Ok(())
    );
}
