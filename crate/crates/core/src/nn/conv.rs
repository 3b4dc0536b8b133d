use alloc::format;

use super::Tensor;
use crate::error::{Error, Result};
use crate::simt::Matrix;

/// Output spatial size of a valid (unpadded) convolution.
pub fn conv_output_dims(height: usize, width: usize, kh: usize, kw: usize, stride: usize) -> Result<(usize, usize)> {
    if kh == 0 || kw == 0 || stride == 0 || kh > height || kw > width {
        return Err(Error::contract(format!("kernel {kh}x{kw} stride {stride} does not fit {height}x{width}")));
    }
    Ok(((height - kh) / stride + 1, (width - kw) / stride + 1))
}

/// Lowers a convolution input to a `(C·kh·kw) × (out_h·out_w)` matrix.
///
/// Row `c·kh·kw + ky·kw + kx` holds input channel `c` at kernel offset
/// `(ky, kx)`; column `oy·out_w + ox` is the receptive field of that output.
pub fn im2col(input: &Tensor, kh: usize, kw: usize, stride: usize) -> Result<Matrix> {
    let (oh, ow) = conv_output_dims(input.height, input.width, kh, kw, stride)?;
    let mut out = Matrix::zeros(input.channels * kh * kw, oh * ow, input.precision);
    for c in 0..input.channels {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (c * kh + ky) * kw + kx;
                for oy in 0..oh {
                    for ox in 0..ow {
                        out.set(row, oy * ow + ox, input.get(c, oy * stride + ky, ox * stride + kx));
                    }
                }
            }
        }
    }
    Ok(out)
}
