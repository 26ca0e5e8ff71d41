//! Keyed set-index functions for randomized caches.
//!
//! A [`KeyedIndex`] is a 4-round balanced Feistel network over the low
//! `2 * index_bits` bits of a line address. The set index is the low half of
//! the permuted value. Bits above the permuted window pass through unchanged
//! and do not influence the set.

use crate::rng::mix64;

const ROUNDS: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyedIndex {
    key: u64,
    index_bits: u32,
    round_keys: [u64; ROUNDS],
}

impl KeyedIndex {
    pub fn new(key: u64, index_bits: u32) -> Self {
        assert!(
            index_bits <= 24,
            "index width {index_bits} exceeds the 48-bit address space"
        );
        let mut round_keys = [0; ROUNDS];
        for (round, rk) in round_keys.iter_mut().enumerate() {
            *rk = mix64(key ^ mix64(round as u64 + 1));
        }
        KeyedIndex {
            key,
            index_bits,
            round_keys,
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn index_bits(&self) -> u32 {
        self.index_bits
    }

    /// Width of the permuted input window.
    pub fn width(&self) -> u32 {
        2 * self.index_bits
    }

    #[inline]
    fn half_mask(&self) -> u64 {
        (1u64 << self.index_bits) - 1
    }

    /// Keyed permutation of the low `width()` bits of `value`.
    #[inline]
    pub fn permute(&self, value: u64) -> u64 {
        let b = self.index_bits;
        if b == 0 {
            return value;
        }
        let mask = self.half_mask();
        let mut l = (value >> b) & mask;
        let mut r = value & mask;
        for rk in self.round_keys {
            let f = mix64(rk ^ r) & mask;
            (l, r) = (r, l ^ f);
        }
        (value & !((1u64 << (2 * b)) - 1)) | (l << b) | r
    }

    /// Inverse of [`KeyedIndex::permute`].
    pub fn invert(&self, value: u64) -> u64 {
        let b = self.index_bits;
        if b == 0 {
            return value;
        }
        let mask = self.half_mask();
        let mut l = (value >> b) & mask;
        let mut r = value & mask;
        for rk in self.round_keys.iter().rev() {
            let f = mix64(rk ^ l) & mask;
            (l, r) = (r ^ f, l);
        }
        (value & !((1u64 << (2 * b)) - 1)) | (l << b) | r
    }

    /// Set index of a line address.
    #[inline]
    pub fn set_of(&self, line: u64) -> usize {
        (self.permute(line) & self.half_mask()) as usize
    }
}

/// Key for an independent index function derived from a base key and a label.
pub fn derive_key(base: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(mix64(base), |acc, &l| {
        mix64(acc ^ mix64(l.wrapping_add(0x632b_e59b_d9b4_e019)))
    })
}
