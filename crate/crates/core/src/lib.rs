pub mod addr;
pub mod attack;
pub mod cache;
pub mod designs;
pub mod error;
pub mod evset;
pub mod experiment;
pub mod index;
pub mod policy;
pub mod ree;
pub mod rng;
pub mod stats;
pub mod victims;

pub use addr::{AccessKind, DomainId, Line, LineAddress, MemoryRegion, RegionAllocator};
pub use cache::{AccessOutcome, CacheGeometry, CacheModel};
pub use designs::{DesignConfig, DesignKind};
pub use error::{Error, Result};
pub use policy::ReplacementPolicy;
pub use rng::RngStream;
pub use stats::{CacheStatistics, DomainStats};
