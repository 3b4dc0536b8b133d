//! A small GEMM-backed convolutional detector.
//!
//! Convolutions lower to im2col + [`Kernel`](crate::simt::Kernel) launches, so
//! every multiply-accumulate of an inference goes through the warp
//! interpreter and is an injection site. Criticality compares decoded
//! detections of a faulty run against the golden run of the same frame.

mod conv;
mod detect;
mod network;
mod tensor;

use alloc::vec::Vec;

pub use crate::analysis::{Criticality, CriticalKind};
pub use conv::{conv_output_dims, im2col};
pub use detect::{classify_criticality, decode_detections, BBox, DecodeParams, Detection, HeadConfig, MatchParams};
pub use network::{FaultyInference, InferenceResult, Layer, Network, NetworkSpec, PreparedFrame};
pub use tensor::Tensor;

use crate::numerics::{self, Precision};
use crate::rng::{rng_from_seed, split, unit_f32};

/// Seed of the shipped reference weights.
pub const REFERENCE_WEIGHT_SEED: u64 = 0x5746_4e4e_2021;
/// Seed of the shipped synthetic frames.
pub const REFERENCE_FRAME_SEED: u64 = 0x4652_414d_4553;
pub const REFERENCE_FRAMES: usize = 16;
pub const REFERENCE_INPUT: (usize, usize, usize) = (3, 21, 21);
pub const LEAKY_SLOPE: f32 = 0.1;

/// Uniform weights in `±sqrt(6 / fan_in)`.
fn he_uniform(seed: u64, layer: u64, count: usize, fan_in: usize) -> Vec<f32> {
    let mut rng = rng_from_seed(split(seed, layer, 0));
    let bound = libm::sqrtf(6.0 / fan_in as f32);
    (0..count).map(|_| (2.0 * unit_f32(&mut rng) - 1.0) * bound).collect()
}

/// Four valid convolutions (3→8→16→16→18 channels) with LeakyReLU between
/// them and a detection head on an 8×8 grid, 2 boxes per cell, 4 classes.
/// The 21×21 input makes the strided second convolution read every output
/// of the first, so no conv1 element is dead.
pub fn reference_network() -> NetworkSpec {
    let conv = |layer: u64, cin: usize, cout: usize, k: usize, stride: usize| {
        let fan_in = cin * k * k;
        Layer::Conv {
            out_channels: cout,
            kernel_h: k,
            kernel_w: k,
            stride,
            weights: he_uniform(REFERENCE_WEIGHT_SEED, layer, cout * fan_in, fan_in),
        }
    };
    let act = || Layer::Activation { slope: LEAKY_SLOPE };
    NetworkSpec {
        input: REFERENCE_INPUT,
        layers: alloc::vec![
            conv(0, 3, 8, 3, 1),
            act(),
            conv(1, 8, 16, 3, 2),
            act(),
            conv(2, 16, 16, 2, 1),
            act(),
            conv(3, 16, 18, 1, 1),
            Layer::DetectionHead(HeadConfig { grid: 8, boxes: 2, classes: 4 }),
        ],
    }
}

/// Procedural frame: per-channel gradient background with a few solid
/// rectangles of random colour.
pub fn synthetic_frame(seed: u64, index: usize, dims: (usize, usize, usize)) -> Tensor {
    let (c, h, w) = dims;
    let mut rng = rng_from_seed(split(seed, 0, index as u64));
    let mut px = alloc::vec![0f32; c * h * w];
    let tilt: Vec<(f32, f32)> = (0..c).map(|_| (0.3 * unit_f32(&mut rng), 0.3 * unit_f32(&mut rng))).collect();
    for (ch, (ty, tx)) in tilt.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                px[(ch * h + y) * w + x] = ty * y as f32 / h as f32 + tx * x as f32 / w as f32;
            }
        }
    }
    let objects = 1 + (rng_below(&mut rng, 3) as usize);
    for _ in 0..objects {
        let bh = 3 + rng_below(&mut rng, (h / 2) as u64) as usize;
        let bw = 3 + rng_below(&mut rng, (w / 2) as u64) as usize;
        let y0 = rng_below(&mut rng, (h - bh + 1) as u64) as usize;
        let x0 = rng_below(&mut rng, (w - bw + 1) as u64) as usize;
        let colour: Vec<f32> = (0..c).map(|_| unit_f32(&mut rng)).collect();
        for (ch, v) in colour.iter().enumerate() {
            for y in y0..y0 + bh {
                for x in x0..x0 + bw {
                    px[(ch * h + y) * w + x] = *v;
                }
            }
        }
    }
    let data = px.iter().map(|&v| numerics::from_f32(v, Precision::Fp32)).collect();
    Tensor { precision: Precision::Fp32, channels: c, height: h, width: w, data }
}

fn rng_below(rng: &mut crate::rng::SimRng, bound: u64) -> u64 {
    crate::rng::below(rng, bound)
}

/// The shipped frame set in binary32.
pub fn reference_frames() -> Vec<Tensor> {
    (0..REFERENCE_FRAMES).map(|i| synthetic_frame(REFERENCE_FRAME_SEED, i, REFERENCE_INPUT)).collect()
}
