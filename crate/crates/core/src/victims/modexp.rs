//! Square-and-multiply exponentiation over 2048-bit buffers.
//!
//! Only the access pattern is modelled by default. Each operand buffer spans
//! four lines. A square reads accumulator limbs pairwise and reduces through
//! the modulus; a multiply does the same with the base in place of the second
//! accumulator operand. With the `bigint` feature the same pattern can be
//! driven alongside real arithmetic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::VictimMemory;
use crate::addr::AccessKind;
use crate::error::{Error, Result};

pub const OPERAND_LINES: u64 = 4;
pub const BASE_LINE: u64 = 0;
pub const MODULUS_LINE: u64 = BASE_LINE + OPERAND_LINES;
pub const ACCUMULATOR_LINE: u64 = MODULUS_LINE + OPERAND_LINES;
pub const REGION_LINES: u64 = ACCUMULATOR_LINE + OPERAND_LINES;
/// First line of the base buffer.
pub const MONITORED_LINE: u64 = BASE_LINE;
pub const EXPONENT_BITS: u32 = 32;
pub const DEFAULT_BIT: u32 = 7;
/// Accesses issued by one square or one multiply.
pub const ACCESSES_PER_OPERATION: usize = 40;

fn byte(line: u64) -> u64 {
    line * 64
}

/// Stateless driver; buffers live at fixed offsets of the victim region.
#[derive(Clone, Copy, Debug, Default)]
pub struct ModExpVictim;

impl ModExpVictim {
    fn product(&self, other: u64, mem: &mut dyn VictimMemory) -> Result<()> {
        for i in 0..OPERAND_LINES {
            for j in 0..OPERAND_LINES {
                mem.read(byte(ACCUMULATOR_LINE + i))?;
                mem.read(byte(other + j))?;
            }
        }
        for i in 0..OPERAND_LINES {
            mem.read(byte(MODULUS_LINE + i))?;
            mem.access(byte(ACCUMULATOR_LINE + i), AccessKind::Write)?;
        }
        Ok(())
    }

    fn square(&self, mem: &mut dyn VictimMemory) -> Result<()> {
        self.product(ACCUMULATOR_LINE, mem)
    }

    fn multiply(&self, mem: &mut dyn VictimMemory) -> Result<()> {
        self.product(BASE_LINE, mem)
    }

    /// Processes exponent bit `bit`: always a square, then a multiply iff the bit is set.
    pub fn step(&self, exponent: u32, bit: u32, mem: &mut dyn VictimMemory) -> Result<()> {
        if bit >= EXPONENT_BITS {
            return Err(Error::Input(format!("exponent bit {bit} out of range")));
        }
        self.square(mem)?;
        if exponent >> bit & 1 == 1 {
            self.multiply(mem)?;
        }
        Ok(())
    }

    /// Bits in processing order, most significant first.
    pub fn bit_order() -> impl Iterator<Item = u32> {
        (0..EXPONENT_BITS).rev()
    }

    pub fn run_all(&self, exponent: u32, mem: &mut dyn VictimMemory) -> Result<()> {
        for bit in Self::bit_order() {
            self.step(exponent, bit, mem)?;
        }
        Ok(())
    }

    /// `base^exponent mod modulus` with the access pattern of [`ModExpVictim::run_all`].
    #[cfg(feature = "bigint")]
    pub fn modpow(
        &self,
        base: &num_bigint::BigUint,
        exponent: u32,
        modulus: &num_bigint::BigUint,
        mem: &mut dyn VictimMemory,
    ) -> Result<num_bigint::BigUint> {
        if modulus.bits() == 0 {
            return Err(Error::Input("modulus must be non-zero".into()));
        }
        let mut acc = num_bigint::BigUint::from(1u32) % modulus;
        for bit in Self::bit_order() {
            self.square(mem)?;
            acc = &acc * &acc % modulus;
            if exponent >> bit & 1 == 1 {
                self.multiply(mem)?;
                acc = acc * base % modulus;
            }
        }
        Ok(acc)
    }
}

/// Exponents that differ in the distinguished bit: clear in `e1`, set in `e2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExponentPair {
    pub e1: u32,
    pub e2: u32,
    pub bit: u32,
}

impl ExponentPair {
    pub fn generate<R: Rng + ?Sized>(rng: &mut R, bit: u32) -> Result<Self> {
        if bit >= EXPONENT_BITS {
            return Err(Error::config(format!(
                "distinguished bit {bit} out of range"
            )));
        }
        let mask = 1u32 << bit;
        Ok(ExponentPair {
            e1: rng.gen::<u32>() & !mask,
            e2: rng.gen::<u32>() | mask,
            bit,
        })
    }

    pub fn exponent(&self, which: usize) -> u32 {
        if which == 0 {
            self.e1
        } else {
            self.e2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::victims::TraceRecorder;

    fn trace_step(e: u32, bit: u32) -> Vec<u64> {
        let mut t = TraceRecorder::default();
        ModExpVictim.step(e, bit, &mut t).unwrap();
        t.lines
    }

    #[test]
    fn square_touches_no_base_line() {
        let t = trace_step(0, 7);
        assert_eq!(t.len(), ACCESSES_PER_OPERATION);
        assert!(t.iter().all(|&l| (MODULUS_LINE..REGION_LINES).contains(&l)));
    }

    #[test]
    fn multiply_touches_every_base_line() {
        let t = trace_step(1 << 7, 7);
        assert_eq!(t.len(), 2 * ACCESSES_PER_OPERATION);
        for l in BASE_LINE..BASE_LINE + OPERAND_LINES {
            assert!(t.contains(&l));
        }
        assert!(t.contains(&MONITORED_LINE));
    }

    #[test]
    fn zero_exponent_is_all_squares() {
        let mut t = TraceRecorder::default();
        ModExpVictim.run_all(0, &mut t).unwrap();
        assert_eq!(t.lines.len(), 32 * ACCESSES_PER_OPERATION);
        let mut t = TraceRecorder::default();
        ModExpVictim.run_all(0b1011, &mut t).unwrap();
        assert_eq!(t.lines.len(), 35 * ACCESSES_PER_OPERATION);
    }

    #[test]
    fn pair_differs_in_bit() {
        let mut rng = RngStream::new(5);
        for _ in 0..1000 {
            let p = ExponentPair::generate(&mut rng, DEFAULT_BIT).unwrap();
            assert_eq!(p.e1 >> 7 & 1, 0);
            assert_eq!(p.e2 >> 7 & 1, 1);
        }
        assert!(ExponentPair::generate(&mut rng, 32).is_err());
        assert!(ModExpVictim
            .step(0, 32, &mut TraceRecorder::default())
            .is_err());
    }

    #[cfg(feature = "bigint")]
    #[test]
    fn traced_modpow_matches_reference() {
        use num_bigint::BigUint;
        let mut rng = RngStream::new(9);
        for _ in 0..20 {
            let bytes: Vec<u8> = (0..256).map(|_| rng.gen()).collect();
            let m = BigUint::from_bytes_be(&bytes) | BigUint::from(1u32);
            let b = BigUint::from_bytes_be(&bytes[..128]);
            let e: u32 = rng.gen();
            let mut t = TraceRecorder::default();
            let got = ModExpVictim.modpow(&b, e, &m, &mut t).unwrap();
            assert_eq!(got, b.modpow(&BigUint::from(e), &m));
            let ops = 32 + e.count_ones() as usize;
            assert_eq!(t.lines.len(), ops * ACCESSES_PER_OPERATION);
        }
    }
}
