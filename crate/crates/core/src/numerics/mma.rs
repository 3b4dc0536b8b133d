use super::{f16_to_f32, f32_to_f16, fma32, Precision, RoundingMode};

/// Sixteen scalars in row-major order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tile4x4 {
    pub precision: Precision,
    pub words: [u32; 16],
}

impl Tile4x4 {
    pub const fn zero(precision: Precision) -> Self {
        Tile4x4 { precision, words: [0; 16] }
    }

    pub const fn get(&self, row: usize, col: usize) -> u32 {
        self.words[row * 4 + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: u32) {
        self.words[row * 4 + col] = value;
    }
}

/// Tensor-core multiply-accumulate `D = A·B + C`.
///
/// Binary16 products are exact in binary32; each of the four accumulation
/// steps (k ascending) rounds toward zero in binary32, and a binary16 output
/// is produced by one more toward-zero conversion.
pub fn mma_4x4(a: &Tile4x4, b: &Tile4x4, c: &Tile4x4, out_precision: Precision) -> Tile4x4 {
    debug_assert_eq!(a.precision, Precision::Fp16);
    debug_assert_eq!(b.precision, Precision::Fp16);
    debug_assert_eq!(c.precision, out_precision);
    let mut d = Tile4x4::zero(out_precision);
    for i in 0..4 {
        for j in 0..4 {
            let mut acc = match out_precision {
                Precision::Fp32 => c.get(i, j),
                Precision::Fp16 => f16_to_f32(c.get(i, j) as u16),
            };
            for k in 0..4 {
                let x = f16_to_f32(a.get(i, k) as u16);
                let y = f16_to_f32(b.get(k, j) as u16);
                acc = fma32(x, y, acc, RoundingMode::TowardZero);
            }
            let out = match out_precision {
                Precision::Fp32 => acc,
                Precision::Fp16 => f32_to_f16(acc, RoundingMode::TowardZero) as u32,
            };
            d.set(i, j, out);
        }
    }
    d
}
