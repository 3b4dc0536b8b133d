use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::{self, Precision};

/// Row-major matrix of raw scalar words (binary16 values in the low half).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Matrix {
    pub precision: Precision,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize, precision: Precision) -> Self {
        Matrix { precision, rows, cols, data: vec![0; rows * cols] }
    }

    pub fn from_words(rows: usize, cols: usize, precision: Precision, data: Vec<u32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: alloc::format!("{} words", rows * cols),
                actual: alloc::format!("{} words", data.len()),
            });
        }
        Ok(Matrix { precision, rows, cols, data })
    }

    pub fn from_f32(rows: usize, cols: usize, precision: Precision, values: &[f32]) -> Result<Self> {
        let data = values.iter().map(|&v| numerics::from_f32(v, precision)).collect();
        Self::from_words(rows, cols, precision, data)
    }

    pub fn identity(n: usize, precision: Precision) -> Self {
        let mut m = Self::zeros(n, n, precision);
        for i in 0..n {
            m.set(i, i, numerics::one(precision));
        }
        m
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, word: u32) {
        self.data[row * self.cols + col] = word;
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&w| numerics::to_f64(w, self.precision)).collect()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}
