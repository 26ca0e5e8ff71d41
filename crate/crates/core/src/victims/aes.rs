//! T-table AES-128 whose every table lookup is a victim memory access.
//!
//! Four 1 KiB tables `Te0..Te3` sit back to back at the start of the victim
//! region. An entry is 4 bytes, so the line of lookup `x` in a table is
//! `x >> 4`. The last round reuses the same tables with byte masks, which
//! keeps the count at 16 lookups per round.

use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::VictimMemory;
use crate::error::Result;

pub const TABLE_BYTES: u64 = 1024;
pub const REGION_LINES: u64 = 4 * TABLE_BYTES / 64;
/// First line of `Te0`.
pub const MONITORED_LINE: u64 = 0;
/// Key and plaintext bytes that index `Te0` in the first round.
pub const CONSTRAINED_BYTES: [usize; 4] = [0, 4, 8, 12];
pub const LOOKUPS_PER_ENCRYPTION: usize = 160;

struct Tables {
    sbox: [u8; 256],
    te: [[u32; 256]; 4],
}

fn xtime(x: u8) -> u8 {
    (x << 1) ^ if x & 0x80 != 0 { 0x1b } else { 0 }
}

fn gmul(mut a: u8, mut b: u8) -> u8 {
    let mut p = 0;
    while b != 0 {
        if b & 1 != 0 {
            p ^= a;
        }
        a = xtime(a);
        b >>= 1;
    }
    p
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut sbox = [0u8; 256];
        for (x, s) in sbox.iter_mut().enumerate() {
            // inverse as x^254, 0 maps to 0
            let mut inv = 1u8;
            for _ in 0..254 {
                inv = gmul(inv, x as u8);
            }
            let b = if x == 0 { 0 } else { inv };
            *s = b
                ^ b.rotate_left(1)
                ^ b.rotate_left(2)
                ^ b.rotate_left(3)
                ^ b.rotate_left(4)
                ^ 0x63;
        }
        let mut te = [[0u32; 256]; 4];
        for x in 0..256 {
            let s = sbox[x];
            let w = u32::from_be_bytes([xtime(s), s, s, xtime(s) ^ s]);
            for (t, table) in te.iter_mut().enumerate() {
                table[x] = w.rotate_right(8 * t as u32);
            }
        }
        Tables { sbox, te }
    })
}

fn expand_key(key: &[u8; 16]) -> [u32; 44] {
    let sbox = &tables().sbox;
    let mut rk = [0u32; 44];
    for i in 0..4 {
        rk[i] = u32::from_be_bytes(key[4 * i..4 * i + 4].try_into().unwrap());
    }
    let mut rcon = 1u8;
    for i in 4..44 {
        let mut t = rk[i - 1];
        if i % 4 == 0 {
            let b = t.rotate_left(8).to_be_bytes();
            t = u32::from_be_bytes([
                sbox[b[0] as usize],
                sbox[b[1] as usize],
                sbox[b[2] as usize],
                sbox[b[3] as usize],
            ]) ^ (u32::from(rcon) << 24);
            rcon = xtime(rcon);
        }
        rk[i] = rk[i - 4] ^ t;
    }
    rk
}

/// Which rounds' lookups reach the memory handle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rounds {
    #[default]
    All,
    /// Only the first round is visible; later lookups are computed silently.
    FirstOnly,
}

/// AES-128 encryptor with an expanded key.
#[derive(Clone, Debug)]
pub struct AesVictim {
    round_keys: [u32; 44],
    rounds: Rounds,
}

impl AesVictim {
    pub fn new(key: &[u8; 16]) -> Self {
        AesVictim {
            round_keys: expand_key(key),
            rounds: Rounds::All,
        }
    }

    pub fn with_rounds(mut self, rounds: Rounds) -> Self {
        self.rounds = rounds;
        self
    }

    pub fn encrypt(&self, plaintext: &[u8; 16], mem: &mut dyn VictimMemory) -> Result<[u8; 16]> {
        let te = &tables().te;
        let rk = &self.round_keys;
        let mut s = [0u32; 4];
        for i in 0..4 {
            s[i] = u32::from_be_bytes(plaintext[4 * i..4 * i + 4].try_into().unwrap()) ^ rk[i];
        }
        let mut visible = true;
        let mut lookup = |visible: bool, table: usize, idx: u32| -> Result<u32> {
            let idx = (idx & 0xff) as usize;
            if visible {
                mem.read(table as u64 * TABLE_BYTES + 4 * idx as u64)?;
            }
            Ok(te[table][idx])
        };
        for round in 1..10 {
            let mut t = [0u32; 4];
            for i in 0..4 {
                t[i] = lookup(visible, 0, s[i] >> 24)?
                    ^ lookup(visible, 1, s[(i + 1) % 4] >> 16)?
                    ^ lookup(visible, 2, s[(i + 2) % 4] >> 8)?
                    ^ lookup(visible, 3, s[(i + 3) % 4])?
                    ^ rk[4 * round + i];
            }
            s = t;
            if self.rounds == Rounds::FirstOnly {
                visible = false;
            }
        }
        let mut out = [0u8; 16];
        for i in 0..4 {
            let w = (lookup(visible, 2, s[i] >> 24)? & 0xff00_0000)
                ^ (lookup(visible, 3, s[(i + 1) % 4] >> 16)? & 0x00ff_0000)
                ^ (lookup(visible, 0, s[(i + 2) % 4] >> 8)? & 0x0000_ff00)
                ^ (lookup(visible, 1, s[(i + 3) % 4])? & 0x0000_00ff)
                ^ rk[40 + i];
            out[4 * i..4 * i + 4].copy_from_slice(&w.to_be_bytes());
        }
        Ok(out)
    }
}

/// Two keys that send a vulnerable plaintext's first-round `Te0` lookups to
/// one line (`key1`) or to four distinct lines (`key2`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AesKeyPair {
    pub key1: [u8; 16],
    pub key2: [u8; 16],
}

impl AesKeyPair {
    pub fn generate<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut key1 = [0u8; 16];
        rng.fill(&mut key1[..]);
        let mut nibbles: Vec<u8> = (1..16).collect();
        nibbles.shuffle(rng);
        let mut key2 = key1;
        for (&pos, &hi) in CONSTRAINED_BYTES.iter().zip(&nibbles) {
            key2[pos] ^= (hi << 4) | rng.gen_range(0..16u8);
        }
        AesKeyPair { key1, key2 }
    }

    pub fn from_deltas(key1: [u8; 16], deltas: [u8; 4]) -> Self {
        let mut key2 = key1;
        for (&pos, d) in CONSTRAINED_BYTES.iter().zip(deltas) {
            key2[pos] ^= d;
        }
        AesKeyPair { key1, key2 }
    }

    pub fn key(&self, which: usize) -> &[u8; 16] {
        if which == 0 {
            &self.key1
        } else {
            &self.key2
        }
    }

    /// A plaintext whose constrained bytes differ from `key1` in the low nibble only.
    pub fn sample_vulnerable_plaintext<R: Rng + ?Sized>(&self, rng: &mut R) -> [u8; 16] {
        let mut p = [0u8; 16];
        rng.fill(&mut p[..]);
        for pos in CONSTRAINED_BYTES {
            p[pos] = self.key1[pos] ^ rng.gen_range(0..16u8);
        }
        p
    }

    pub fn is_vulnerable(&self, plaintext: &[u8; 16]) -> bool {
        CONSTRAINED_BYTES
            .iter()
            .all(|&i| (plaintext[i] ^ self.key1[i]) >> 4 == 0)
    }
}

/// `Te0` lines touched by the four first-round `Te0` lookups.
pub fn first_round_te0_lines(key: &[u8; 16], plaintext: &[u8; 16]) -> [u8; 4] {
    CONSTRAINED_BYTES.map(|i| (plaintext[i] ^ key[i]) >> 4)
}
