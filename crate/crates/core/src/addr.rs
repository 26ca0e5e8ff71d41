//! Line-granular addresses, security domains and memory regions.
//!
//! Attack code never names raw line addresses. It asks a [`MemoryRegion`]
//! for "offset `k`", and the region translates that into a [`LineAddress`]
//! inside the cache model's address space.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cache line size in bytes.
pub const LINE_SIZE: u64 = 64;
/// log2 of [`LINE_SIZE`].
pub const LINE_SHIFT: u32 = 6;
/// Line addresses live below this bound.
pub const ADDRESS_LIMIT: u64 = 1 << 48;

/// A cache-line granular address (byte address >> 6).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LineAddress(u64);

impl LineAddress {
    pub fn new(line: u64) -> Self {
        debug_assert!(
            line < ADDRESS_LIMIT,
            "line address {line:#x} exceeds 48 bits"
        );
        LineAddress(line & (ADDRESS_LIMIT - 1))
    }

    pub fn from_byte(byte: u64) -> Self {
        Self::new(byte >> LINE_SHIFT)
    }

    #[inline]
    pub fn value(self) -> u64 {
        self.0
    }
}

impl fmt::Display for LineAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

/// Security domain identifier. By convention 0 is the attacker and 1 the victim.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DomainId(pub u8);

impl DomainId {
    pub const ATTACKER: DomainId = DomainId(0);
    pub const VICTIM: DomainId = DomainId(1);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A resident line: address plus owning domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Line {
    pub addr: LineAddress,
    pub domain: DomainId,
}

impl Line {
    pub fn new(addr: LineAddress, domain: DomainId) -> Self {
        Line { addr, domain }
    }

    /// Packs the line into a single word (domain in the top 16 bits).
    #[inline]
    pub(crate) fn key(self) -> u64 {
        self.addr.0 | (u64::from(self.domain.0) << 48)
    }

    #[inline]
    pub(crate) fn from_key(key: u64) -> Self {
        Line {
            addr: LineAddress(key & (ADDRESS_LIMIT - 1)),
            domain: DomainId((key >> 48) as u8),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AccessKind {
    Read,
    Write,
    Invalidate,
}

/// The memory handle: a contiguous, domain-owned range of lines.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemoryRegion {
    tag: u32,
    base: LineAddress,
    size_lines: u64,
    domain: DomainId,
}

impl MemoryRegion {
    pub fn new(tag: u32, base: LineAddress, size_lines: u64, domain: DomainId) -> Result<Self> {
        if size_lines == 0 {
            return Err(Error::config("memory region must hold at least one line"));
        }
        if base.value() + size_lines > ADDRESS_LIMIT {
            return Err(Error::config(
                "memory region exceeds the 48-bit line address space",
            ));
        }
        Ok(MemoryRegion {
            tag,
            base,
            size_lines,
            domain,
        })
    }

    pub fn tag(&self) -> u32 {
        self.tag
    }

    pub fn base(&self) -> LineAddress {
        self.base
    }

    pub fn size_lines(&self) -> u64 {
        self.size_lines
    }

    pub fn domain(&self) -> DomainId {
        self.domain
    }

    /// Translates a line offset into the cache address space.
    pub fn line(&self, offset: u64) -> Result<LineAddress> {
        if offset >= self.size_lines {
            return Err(Error::OffsetOutOfRange {
                offset,
                size: self.size_lines,
            });
        }
        Ok(LineAddress(self.base.0 + offset))
    }

    /// Translates a byte offset into the line that holds it.
    pub fn line_of_byte(&self, byte_offset: u64) -> Result<LineAddress> {
        self.line(byte_offset >> LINE_SHIFT)
    }

    /// Inverse of [`MemoryRegion::line`]; `None` for lines outside the region.
    pub fn offset_of(&self, addr: LineAddress) -> Option<u64> {
        addr.0
            .checked_sub(self.base.0)
            .filter(|&off| off < self.size_lines)
    }

    pub fn contains(&self, addr: LineAddress) -> bool {
        self.offset_of(addr).is_some()
    }

    fn overlaps(&self, base: u64, size: u64) -> bool {
        base < self.base.0 + self.size_lines && self.base.0 < base + size
    }
}

/// Hands out non-overlapping regions with uniformly random bases.
#[derive(Debug)]
pub struct RegionAllocator {
    space_lines: u64,
    regions: Vec<MemoryRegion>,
}

impl Default for RegionAllocator {
    fn default() -> Self {
        Self::new(1 << 32)
    }
}

impl RegionAllocator {
    /// `space_lines` bounds the line addresses from which bases are drawn.
    pub fn new(space_lines: u64) -> Self {
        RegionAllocator {
            space_lines: space_lines.min(ADDRESS_LIMIT),
            regions: Vec::new(),
        }
    }

    pub fn allocate<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        size_lines: u64,
        domain: DomainId,
    ) -> Result<MemoryRegion> {
        if size_lines == 0 || size_lines > self.space_lines {
            return Err(Error::config(format!(
                "cannot place a {size_lines}-line region in a {}-line space",
                self.space_lines
            )));
        }
        for _ in 0..10_000 {
            let base = rng.gen_range(0..=self.space_lines - size_lines);
            if self.regions.iter().all(|r| !r.overlaps(base, size_lines)) {
                let region = MemoryRegion::new(
                    self.regions.len() as u32,
                    LineAddress(base),
                    size_lines,
                    domain,
                )?;
                self.regions.push(region.clone());
                return Ok(region);
            }
        }
        Err(Error::config("address space too crowded to place region"))
    }

    pub fn regions(&self) -> &[MemoryRegion] {
        &self.regions
    }
}
