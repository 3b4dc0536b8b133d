use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::{self, Precision, RoundingMode};
use crate::simt::Matrix;

/// Channel-major (C, H, W) activation tensor of raw scalar words.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Tensor {
    pub precision: Precision,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<u32>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize, precision: Precision) -> Self {
        Tensor { precision, channels, height, width, data: vec![0; channels * height * width] }
    }

    pub fn from_words(channels: usize, height: usize, width: usize, precision: Precision, data: Vec<u32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::DimensionMismatch {
                expected: format!("{} words", channels * height * width),
                actual: format!("{} words", data.len()),
            });
        }
        Ok(Tensor { precision, channels, height, width, data })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> u32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// `(C·H) × W` view used by the matrix dump format.
    pub fn to_matrix(&self) -> Matrix {
        Matrix { precision: self.precision, rows: self.channels * self.height, cols: self.width, data: self.data.clone() }
    }

    pub fn from_matrix(m: &Matrix, channels: usize) -> Result<Self> {
        if channels == 0 || !m.rows.is_multiple_of(channels) {
            return Err(Error::contract(format!("{} rows do not split into {channels} channels", m.rows)));
        }
        Self::from_words(channels, m.rows / channels, m.cols, m.precision, m.data.clone())
    }

    /// Converts every element; narrowing rounds to nearest even.
    pub fn convert(&self, to: Precision) -> Tensor {
        let data = self.data.iter().map(|&w| numerics::convert(w, self.precision, to, RoundingMode::NearestEven)).collect();
        Tensor { precision: to, channels: self.channels, height: self.height, width: self.width, data }
    }
}
