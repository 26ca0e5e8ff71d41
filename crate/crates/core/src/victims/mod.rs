//! Leaky cryptographic victims driven through a memory handle.

pub mod aes;
pub mod modexp;

use serde::{Deserialize, Serialize};

use crate::addr::{AccessKind, LineAddress, MemoryRegion, LINE_SHIFT};
use crate::cache::{access_region, CacheModel};
use crate::error::{Error, Result};

pub use self::aes::{AesKeyPair, AesVictim, Rounds};
pub use self::modexp::{ExponentPair, ModExpVictim};

/// Where a victim's table and operand accesses go.
pub trait VictimMemory {
    fn access(&mut self, byte_offset: u64, kind: AccessKind) -> Result<()>;

    fn read(&mut self, byte_offset: u64) -> Result<()> {
        self.access(byte_offset, AccessKind::Read)
    }
}

/// Routes victim accesses into a cache through the victim's region.
pub struct CachePort<'a> {
    pub cache: &'a mut dyn CacheModel,
    pub region: &'a MemoryRegion,
}

impl<'a> CachePort<'a> {
    pub fn new(cache: &'a mut dyn CacheModel, region: &'a MemoryRegion) -> Self {
        CachePort { cache, region }
    }
}

impl VictimMemory for CachePort<'_> {
    fn access(&mut self, byte_offset: u64, kind: AccessKind) -> Result<()> {
        access_region(self.cache, self.region, byte_offset >> LINE_SHIFT, kind).map(drop)
    }
}

/// Records the region-relative line offset of every access.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TraceRecorder {
    pub lines: Vec<u64>,
}

impl VictimMemory for TraceRecorder {
    fn access(&mut self, byte_offset: u64, _kind: AccessKind) -> Result<()> {
        self.lines.push(byte_offset >> LINE_SHIFT);
        Ok(())
    }
}

/// Discards every access.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullMemory;

impl VictimMemory for NullMemory {
    fn access(&mut self, _byte_offset: u64, _kind: AccessKind) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VictimKind {
    Aes,
    #[serde(rename = "modexp")]
    ModExp,
}

impl VictimKind {
    pub const ALL: [VictimKind; 2] = [VictimKind::Aes, VictimKind::ModExp];

    pub fn name(self) -> &'static str {
        match self {
            VictimKind::Aes => "aes",
            VictimKind::ModExp => "modexp",
        }
    }

    /// Lines the victim's region must span.
    pub fn region_lines(self) -> u64 {
        match self {
            VictimKind::Aes => aes::REGION_LINES,
            VictimKind::ModExp => modexp::REGION_LINES,
        }
    }

    /// Region-relative line whose access depends on the secret.
    pub fn monitored_offset(self) -> u64 {
        match self {
            VictimKind::Aes => aes::MONITORED_LINE,
            VictimKind::ModExp => modexp::MONITORED_LINE,
        }
    }

    /// Absolute monitored line for a victim placed at `region`.
    pub fn monitored_line(self, region: &MemoryRegion) -> Result<LineAddress> {
        region.line(self.monitored_offset())
    }
}

impl std::fmt::Display for VictimKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for VictimKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aes" => Ok(VictimKind::Aes),
            "modexp" | "mod-exp" | "rsa" => Ok(VictimKind::ModExp),
            other => Err(Error::config(format!(
                "unknown victim `{other}` (expected aes or modexp)"
            ))),
        }
    }
}
