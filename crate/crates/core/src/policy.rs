//! Per-set replacement state machines.
//!
//! Four policies are supported: true LRU, Bit-PLRU (one MRU bit per way),
//! Tree-PLRU (W-1 tree bits, power-of-two W) and uniform random. Free ways
//! are always filled lowest-index first before a policy victim is chosen;
//! that part lives in the owning cache bank, not here.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplacementPolicy {
    Lru,
    BitPlru,
    TreePlru,
    Random,
}

impl ReplacementPolicy {
    pub const ALL: [ReplacementPolicy; 4] = [
        ReplacementPolicy::Lru,
        ReplacementPolicy::BitPlru,
        ReplacementPolicy::TreePlru,
        ReplacementPolicy::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReplacementPolicy::Lru => "lru",
            ReplacementPolicy::BitPlru => "bitplru",
            ReplacementPolicy::TreePlru => "treeplru",
            ReplacementPolicy::Random => "random",
        }
    }
}

impl fmt::Display for ReplacementPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReplacementPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lru" => Ok(ReplacementPolicy::Lru),
            "bitplru" | "bit-plru" => Ok(ReplacementPolicy::BitPlru),
            "treeplru" | "tree-plru" => Ok(ReplacementPolicy::TreePlru),
            "random" | "rand" => Ok(ReplacementPolicy::Random),
            other => Err(Error::config(format!(
                "unknown replacement policy {other:?} (expected lru, bitplru, treeplru or random)"
            ))),
        }
    }
}

/// Replacement metadata for `sets` sets of `ways` ways each.
#[derive(Clone, Debug)]
pub struct PolicyState {
    kind: ReplacementPolicy,
    sets: usize,
    ways: usize,
    words_per_set: usize,
    /// LRU: last-use stamp per way. Bit-PLRU / Tree-PLRU: packed bits per set.
    meta: Vec<u64>,
    /// Bit-PLRU: number of MRU bits set per set.
    set_bits: Vec<u32>,
    clock: u64,
}

impl PolicyState {
    pub fn new(kind: ReplacementPolicy, sets: usize, ways: usize) -> Result<Self> {
        if sets == 0 || ways == 0 {
            return Err(Error::config("policy needs at least one set and one way"));
        }
        if kind == ReplacementPolicy::TreePlru && !ways.is_power_of_two() {
            return Err(Error::config(format!(
                "tree-PLRU requires power-of-two associativity, got {ways} ways"
            )));
        }
        let words_per_set = ways.div_ceil(64);
        let meta_len = match kind {
            ReplacementPolicy::Lru => sets * ways,
            ReplacementPolicy::BitPlru | ReplacementPolicy::TreePlru => sets * words_per_set,
            ReplacementPolicy::Random => 0,
        };
        let set_bits = if kind == ReplacementPolicy::BitPlru {
            vec![0; sets]
        } else {
            Vec::new()
        };
        Ok(PolicyState {
            kind,
            sets,
            ways,
            words_per_set,
            meta: vec![0; meta_len],
            set_bits,
            clock: 0,
        })
    }

    pub fn kind(&self) -> ReplacementPolicy {
        self.kind
    }

    pub fn ways(&self) -> usize {
        self.ways
    }

    pub fn sets(&self) -> usize {
        self.sets
    }

    pub fn reset(&mut self) {
        self.meta.fill(0);
        self.set_bits.fill(0);
        self.clock = 0;
    }

    #[inline]
    fn bit(&self, set: usize, i: usize) -> bool {
        (self.meta[set * self.words_per_set + i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    fn put_bit(&mut self, set: usize, i: usize, value: bool) {
        let w = &mut self.meta[set * self.words_per_set + i / 64];
        if value {
            *w |= 1 << (i % 64);
        } else {
            *w &= !(1 << (i % 64));
        }
    }

    /// Records a hit or fill of `way` in `set`.
    #[inline]
    pub fn touch(&mut self, set: usize, way: usize) {
        debug_assert!(set < self.sets && way < self.ways);
        match self.kind {
            ReplacementPolicy::Lru => {
                self.clock += 1;
                self.meta[set * self.ways + way] = self.clock;
            }
            ReplacementPolicy::BitPlru => {
                if self.bit(set, way) {
                    return;
                }
                if self.set_bits[set] as usize + 1 == self.ways {
                    let start = set * self.words_per_set;
                    self.meta[start..start + self.words_per_set].fill(0);
                    self.set_bits[set] = 0;
                }
                self.put_bit(set, way, true);
                self.set_bits[set] += 1;
            }
            ReplacementPolicy::TreePlru => {
                let levels = self.ways.trailing_zeros();
                let mut node = 1;
                for depth in (0..levels).rev() {
                    let right = (way >> depth) & 1 == 1;
                    // point the node at the half that does not contain `way`
                    self.put_bit(set, node, !right);
                    node = 2 * node + usize::from(right);
                }
            }
            ReplacementPolicy::Random => {}
        }
    }

    /// Policy victim among the ways accepted by `eligible`, assuming every
    /// way holds a line. Returns `None` when no way is eligible.
    pub fn choose_victim<R: Rng + ?Sized>(
        &self,
        set: usize,
        eligible: impl Fn(usize) -> bool,
        rng: &mut R,
    ) -> Option<usize> {
        match self.kind {
            ReplacementPolicy::Lru => {
                let stamps = &self.meta[set * self.ways..(set + 1) * self.ways];
                (0..self.ways)
                    .filter(|&w| eligible(w))
                    .min_by_key(|&w| (stamps[w], w))
            }
            ReplacementPolicy::BitPlru => (0..self.ways)
                .find(|&w| eligible(w) && !self.bit(set, w))
                .or_else(|| (0..self.ways).find(|&w| eligible(w))),
            ReplacementPolicy::TreePlru => {
                let levels = self.ways.trailing_zeros();
                let (mut lo, mut len, mut node) = (0usize, self.ways, 1usize);
                if !(0..self.ways).any(&eligible) {
                    return None;
                }
                for _ in 0..levels {
                    len /= 2;
                    let mut right = self.bit(set, node);
                    let start = if right { lo + len } else { lo };
                    if !(start..start + len).any(&eligible) {
                        right = !right;
                    }
                    if right {
                        lo += len;
                    }
                    node = 2 * node + usize::from(right);
                }
                Some(lo)
            }
            ReplacementPolicy::Random => {
                let pick = rng.gen_range(0..self.ways);
                if eligible(pick) {
                    return Some(pick);
                }
                let candidates: Vec<usize> = (0..self.ways).filter(|&w| eligible(w)).collect();
                if candidates.is_empty() {
                    None
                } else {
                    Some(candidates[rng.gen_range(0..candidates.len())])
                }
            }
        }
    }

    /// Way to fill next: the lowest invalid way if any, else the policy victim.
    pub fn victim_way<R: Rng + ?Sized>(
        &self,
        set: usize,
        valid: impl Fn(usize) -> bool,
        rng: &mut R,
    ) -> usize {
        (0..self.ways)
            .find(|&w| !valid(w))
            .or_else(|| self.choose_victim(set, |_| true, rng))
            .expect("a full set always has an eligible victim")
    }

    /// LRU recency order, oldest first. Only meaningful for [`ReplacementPolicy::Lru`].
    pub fn lru_order(&self, set: usize) -> Vec<usize> {
        let stamps = &self.meta[set * self.ways..(set + 1) * self.ways];
        let mut order: Vec<usize> = (0..self.ways).collect();
        order.sort_by_key(|&w| (stamps[w], w));
        order
    }

    /// Bit-PLRU MRU bits of `set`.
    pub fn mru_bits(&self, set: usize) -> Vec<bool> {
        (0..self.ways).map(|w| self.bit(set, w)).collect()
    }

    /// Tree-PLRU node bits of `set` in heap order (node 1 is the root).
    pub fn tree_bits(&self, set: usize) -> Vec<bool> {
        (1..self.ways).map(|n| self.bit(set, n)).collect()
    }
}
