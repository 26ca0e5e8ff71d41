mod common;

use cachefx_core::DesignKind;
use common::{replay_is_identical, workload_trace};

#[test]
fn every_design_replays_exactly() {
    for d in DesignKind::ALL {
        assert!(replay_is_identical(d, 42), "{d}");
    }
}

#[test]
fn randomized_designs_depend_on_seed() {
    for d in [
        DesignKind::Ceaser,
        DesignKind::CeaserS,
        DesignKind::ScatterCache,
        DesignKind::PhantomCache,
        DesignKind::FullyAssociative,
    ] {
        assert_ne!(workload_trace(d, 1), workload_trace(d, 2), "{d}");
    }
}
