//! The nine cache designs and a name-driven factory.

mod indexed;
mod newcache;
mod waypart;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cache::{CacheGeometry, CacheModel};
use crate::error::{Error, Result};
use crate::policy::ReplacementPolicy;

pub use indexed::IndexedCache;
pub use newcache::NewCache;
pub use waypart::WayPartitionedCache;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DesignKind {
    #[serde(rename = "assoc")]
    SetAssociative,
    #[serde(rename = "fullyassoc")]
    FullyAssociative,
    #[serde(rename = "waypart")]
    WayPartitioned,
    #[serde(rename = "plcache")]
    PlCache,
    #[serde(rename = "ceaser")]
    Ceaser,
    #[serde(rename = "ceaser-s")]
    CeaserS,
    #[serde(rename = "scatter")]
    ScatterCache,
    #[serde(rename = "newcache")]
    NewCache,
    #[serde(rename = "phantom")]
    PhantomCache,
}

impl DesignKind {
    pub const ALL: [DesignKind; 9] = [
        DesignKind::SetAssociative,
        DesignKind::FullyAssociative,
        DesignKind::WayPartitioned,
        DesignKind::PlCache,
        DesignKind::Ceaser,
        DesignKind::CeaserS,
        DesignKind::ScatterCache,
        DesignKind::NewCache,
        DesignKind::PhantomCache,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DesignKind::SetAssociative => "assoc",
            DesignKind::FullyAssociative => "fullyassoc",
            DesignKind::WayPartitioned => "waypart",
            DesignKind::PlCache => "plcache",
            DesignKind::Ceaser => "ceaser",
            DesignKind::CeaserS => "ceaser-s",
            DesignKind::ScatterCache => "scatter",
            DesignKind::NewCache => "newcache",
            DesignKind::PhantomCache => "phantom",
        }
    }

    /// Whether every line can displace every other line.
    pub fn is_fully_associative(self) -> bool {
        matches!(self, DesignKind::FullyAssociative | DesignKind::NewCache)
    }
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DesignKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        DesignKind::ALL
            .into_iter()
            .find(|d| d.name() == lower)
            .or(match lower.as_str() {
                "setassoc" | "set-assoc" => Some(DesignKind::SetAssociative),
                "fully" | "fa" => Some(DesignKind::FullyAssociative),
                "ceasers" => Some(DesignKind::CeaserS),
                "scattercache" => Some(DesignKind::ScatterCache),
                "phantomcache" => Some(DesignKind::PhantomCache),
                _ => None,
            })
            .ok_or_else(|| {
                let names: Vec<_> = DesignKind::ALL.iter().map(|d| d.name()).collect();
                Error::config(format!(
                    "unknown design {s:?} (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}

/// Everything needed to instantiate one cache.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignConfig {
    pub design: DesignKind,
    pub lines: usize,
    pub ways: usize,
    pub policy: ReplacementPolicy,
    /// Skew partitions for ceaser-s and scatter. Defaults: 2 and `ways`.
    pub partitions: Option<usize>,
    /// NewCache extra index bits.
    pub k: u32,
    /// PhantomCache candidate sets per address.
    pub r: usize,
    pub domains: usize,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            design: DesignKind::SetAssociative,
            lines: 2048,
            ways: 16,
            policy: ReplacementPolicy::Random,
            partitions: None,
            k: 2,
            r: 8,
            domains: 2,
        }
    }
}

impl DesignConfig {
    pub fn new(design: DesignKind, lines: usize, ways: usize, policy: ReplacementPolicy) -> Self {
        DesignConfig {
            design,
            lines,
            ways,
            policy,
            ..Default::default()
        }
    }

    pub fn with_partitions(mut self, partitions: usize) -> Self {
        self.partitions = Some(partitions);
        self
    }

    /// Associativity as seen by the design (fully associative caches use every line).
    pub fn effective_ways(&self) -> usize {
        match self.design {
            DesignKind::FullyAssociative | DesignKind::NewCache => self.lines,
            _ => self.ways,
        }
    }

    pub fn effective_partitions(&self) -> usize {
        match self.design {
            DesignKind::CeaserS => self.partitions.unwrap_or(2),
            DesignKind::ScatterCache => self.partitions.unwrap_or(self.ways),
            _ => 1,
        }
    }

    /// Design-specific parameters as `name=value` pairs joined by `;`.
    pub fn params_string(&self) -> String {
        match self.design {
            DesignKind::CeaserS | DesignKind::ScatterCache => {
                format!("partitions={}", self.effective_partitions())
            }
            DesignKind::NewCache => format!("k={}", self.k),
            DesignKind::PhantomCache => format!("r={}", self.r),
            _ => String::new(),
        }
    }

    pub fn geometry(&self) -> Result<CacheGeometry> {
        CacheGeometry::new(self.lines, self.effective_ways())
    }

    pub fn validate(&self) -> Result<()> {
        if self.domains == 0 || self.domains > 255 {
            return Err(Error::config(format!(
                "domains must be in 1..=255, got {}",
                self.domains
            )));
        }
        let geometry = self.geometry()?;
        if self.design != DesignKind::NewCache {
            geometry.index_bits()?;
        }
        let p = self.effective_partitions();
        if p == 0 || p > self.ways || !self.ways.is_multiple_of(p) {
            return Err(Error::config(format!(
                "partitions must divide the {} ways, got {p}",
                self.ways
            )));
        }
        if self.design == DesignKind::PhantomCache && self.r == 0 {
            return Err(Error::config(
                "phantom needs at least one candidate set (r >= 1)",
            ));
        }
        if self.design == DesignKind::WayPartitioned && !self.ways.is_multiple_of(self.domains) {
            return Err(Error::config(format!(
                "{} ways cannot be split evenly over {} domains",
                self.ways, self.domains
            )));
        }
        if self.design == DesignKind::NewCache && !self.lines.is_power_of_two() {
            return Err(Error::config("newcache needs a power-of-two line count"));
        }
        Ok(())
    }

    /// Instantiates the design. All keys and random choices derive from `seed`.
    pub fn build(&self, seed: u64) -> Result<Box<dyn CacheModel>> {
        self.validate()?;
        Ok(match self.design {
            DesignKind::WayPartitioned => Box::new(WayPartitionedCache::new(self, seed)?),
            DesignKind::NewCache => Box::new(NewCache::new(self, seed)?),
            _ => Box::new(IndexedCache::new(self, seed)?),
        })
    }
}
