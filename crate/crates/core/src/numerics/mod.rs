//! Bit-exact scalar arithmetic, register packing and the tensor-core MMA.
//!
//! Scalars travel as raw bit patterns in a `u32`: a binary32 value uses all
//! 32 bits, a binary16 value uses the low 16. Arithmetic is emulated in
//! software so results never depend on the host FPU.

mod mma;
mod softfloat;

use core::fmt;

use crate::error::{Error, Result};

pub use mma::{mma_4x4, Tile4x4};

use softfloat::{HALF, SINGLE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Precision {
    Fp16,
    Fp32,
}

impl Precision {
    pub const fn bits(self) -> u32 {
        match self {
            Precision::Fp16 => 16,
            Precision::Fp32 => 32,
        }
    }

    /// Mask selecting the meaningful bits of a scalar of this precision.
    pub const fn mask(self) -> u32 {
        match self {
            Precision::Fp16 => 0xFFFF,
            Precision::Fp32 => 0xFFFF_FFFF,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            Precision::Fp16 => "fp16",
            Precision::Fp32 => "fp32",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Precision::Fp16, Precision::Fp32].into_iter().find(|p| p.name() == s)
    }

    fn format(self) -> softfloat::Format {
        match self {
            Precision::Fp16 => HALF,
            Precision::Fp32 => SINGLE,
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RoundingMode {
    #[default]
    NearestEven,
    /// Used inside the tensor-core MMA unit only.
    TowardZero,
}

/// Raw content of one 32-bit register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Word32(pub u32);

impl Word32 {
    pub const ZERO: Word32 = Word32(0);

    pub const fn bits(self) -> u32 {
        self.0
    }

    pub const fn lo(self) -> u16 {
        self.0 as u16
    }

    pub const fn hi(self) -> u16 {
        (self.0 >> 16) as u16
    }
}

impl fmt::LowerHex for Word32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::LowerHex::fmt(&self.0, f)
    }
}

/// Packs two binary16 lane results into one register, `lo` in bits 0..16.
pub const fn pack_fp16_pair(lo: u16, hi: u16) -> Word32 {
    Word32(((hi as u32) << 16) | lo as u32)
}

pub const fn unpack_fp16_pair(w: Word32) -> (u16, u16) {
    (w.lo(), w.hi())
}

/// XORs the given bit positions into `w`. One or two distinct positions.
pub fn flip_bits(w: Word32, bit_indices: &[u8]) -> Result<Word32> {
    if bit_indices.is_empty() || bit_indices.len() > 2 {
        return Err(Error::contract("flip_bits takes one or two bit indices"));
    }
    if bit_indices.len() == 2 && bit_indices[0] == bit_indices[1] {
        return Err(Error::contract("flip_bits indices must be distinct"));
    }
    let mut mask = 0u32;
    for &i in bit_indices {
        if i > 31 {
            return Err(Error::contract("bit index outside [0, 31]"));
        }
        mask |= 1 << i;
    }
    Ok(Word32(w.0 ^ mask))
}

/// `round(a * b + c)` with one rounding step. Binary16 operands use the low
/// 16 bits of each argument; the upper bits are ignored.
pub fn fma(a: u32, b: u32, c: u32, precision: Precision, rounding: RoundingMode) -> u32 {
    let m = precision.mask();
    softfloat::fma(precision.format(), a & m, b & m, c & m, rounding)
}

pub fn fma16(a: u16, b: u16, c: u16, rounding: RoundingMode) -> u16 {
    softfloat::fma(HALF, a as u32, b as u32, c as u32, rounding) as u16
}

pub fn fma32(a: u32, b: u32, c: u32, rounding: RoundingMode) -> u32 {
    softfloat::fma(SINGLE, a, b, c, rounding)
}

/// `round(a * b)`; the product sign is preserved for zero results.
pub fn mul(a: u32, b: u32, precision: Precision, rounding: RoundingMode) -> u32 {
    let neg_zero = 1 << (precision.bits() - 1);
    fma(a, b, neg_zero, precision, rounding)
}

pub fn add(a: u32, b: u32, precision: Precision, rounding: RoundingMode) -> u32 {
    fma(a, one(precision), b, precision, rounding)
}

pub const fn one(precision: Precision) -> u32 {
    match precision {
        Precision::Fp16 => 0x3C00,
        Precision::Fp32 => 0x3F80_0000,
    }
}

pub fn f32_to_f16(bits: u32, rounding: RoundingMode) -> u16 {
    softfloat::convert(SINGLE, HALF, bits, rounding) as u16
}

/// Exact widening.
pub fn f16_to_f32(bits: u16) -> u32 {
    softfloat::convert(HALF, SINGLE, bits as u32, RoundingMode::NearestEven)
}

/// Re-encodes `bits` from one precision to another.
pub fn convert(bits: u32, from: Precision, to: Precision, rounding: RoundingMode) -> u32 {
    if from == to {
        bits & from.mask()
    } else {
        softfloat::convert(from.format(), to.format(), bits & from.mask(), rounding)
    }
}

/// Encodes a host `f32` value (round-to-nearest for binary16).
pub fn from_f32(x: f32, precision: Precision) -> u32 {
    match precision {
        Precision::Fp32 => x.to_bits(),
        Precision::Fp16 => f32_to_f16(x.to_bits(), RoundingMode::NearestEven) as u32,
    }
}

/// Decodes a scalar to a host `f64` (exact for both precisions).
pub fn to_f64(bits: u32, precision: Precision) -> f64 {
    match precision {
        Precision::Fp32 => f32::from_bits(bits) as f64,
        Precision::Fp16 => f32::from_bits(f16_to_f32(bits as u16)) as f64,
    }
}

pub fn is_nan(bits: u32, precision: Precision) -> bool {
    matches!(precision.format().decode(bits & precision.mask()), softfloat::Value::Nan)
}

/// Sign bit set and not NaN.
pub fn is_negative(bits: u32, precision: Precision) -> bool {
    !is_nan(bits, precision) && (bits >> (precision.bits() - 1)) & 1 == 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fma_examples() {
        assert_eq!(fma(0x3F80_0000, 0x3F80_0000, 0x3F80_0000, Precision::Fp32, RoundingMode::NearestEven), 0x4000_0000);
        // multiplicative zero returns c
        for (x, c) in [(0x3C00u32, 0x4248u32), (0xFBFF, 0x0001), (0x0400, 0x8123)] {
            assert_eq!(fma(0, x, c, Precision::Fp16, RoundingMode::TowardZero), c);
        }
    }

    #[test]
    fn pack_examples() {
        assert_eq!(pack_fp16_pair(0, 0), Word32(0));
        assert_eq!(pack_fp16_pair(0x3C00, 0x4000), Word32(0x4000_3C00));
        assert_eq!(unpack_fp16_pair(Word32(0x4000_3C00)), (0x3C00, 0x4000));
    }

    #[test]
    fn flip_examples() {
        assert_eq!(flip_bits(Word32(0), &[31]).unwrap(), Word32(0x8000_0000));
        assert_eq!(flip_bits(Word32(0xFFFF_FFFF), &[0, 1]).unwrap(), Word32(0xFFFF_FFFC));
        assert_eq!(flip_bits(Word32(0x3F80_0000), &[10]).unwrap(), Word32(0x3F80_0400));
    }

    #[test]
    fn flip_rejects_bad_indices() {
        assert!(matches!(flip_bits(Word32(0), &[32]), Err(Error::Contract(_))));
        assert!(flip_bits(Word32(0), &[]).is_err());
        assert!(flip_bits(Word32(0), &[1, 2, 3]).is_err());
        assert!(flip_bits(Word32(0), &[4, 4]).is_err());
    }

    #[test]
    fn negative_and_nan_predicates() {
        assert!(is_negative(0xBC00, Precision::Fp16));
        assert!(!is_negative(0xFE00, Precision::Fp16));
        assert!(is_nan(0x7FC0_0000, Precision::Fp32));
        assert!(is_negative(0x8000_0000, Precision::Fp32));
    }

    #[test]
    fn mul_keeps_zero_sign() {
        assert_eq!(mul(0xBC00, 0, Precision::Fp16, RoundingMode::NearestEven), 0x8000);
        assert_eq!(mul(0x3C00, 0, Precision::Fp16, RoundingMode::NearestEven), 0);
    }
}
