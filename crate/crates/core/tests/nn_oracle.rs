use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use warpfi_core::analysis::{diff, ComparePolicy};
use warpfi_core::fault::{sample_site, sample_site_where, FaultDescriptor, FaultModel, StorageClass};
use warpfi_core::nn::{im2col, reference_frames, reference_network, Layer, Network, Tensor};
use warpfi_core::numerics::{self, fma16, fma32, from_f32, Precision, RoundingMode};
use warpfi_core::rng::split;
use warpfi_core::simt::{run_gemm, site_to_elements, Algorithm, ExecStatus, KernelConfig, Matrix, RegClass, TraceProfile};

fn fma(a: u32, b: u32, c: u32, p: Precision) -> u32 {
    match p {
        Precision::Fp32 => fma32(a, b, c, RoundingMode::NearestEven),
        Precision::Fp16 => u32::from(fma16(a as u16, b as u16, c as u16, RoundingMode::NearestEven)),
    }
}

/// Valid convolution straight from the definition, accumulating channel by
/// channel, then kernel row, then kernel column.
fn direct_conv(x: &Tensor, w: &[u32], out_c: usize, kh: usize, kw: usize, stride: usize) -> Tensor {
    let oh = (x.height - kh) / stride + 1;
    let ow = (x.width - kw) / stride + 1;
    let mut y = Tensor::zeros(out_c, oh, ow, x.precision);
    for o in 0..out_c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0;
                for c in 0..x.channels {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let wv = w[((o * x.channels + c) * kh + ky) * kw + kx];
                            acc = fma(wv, x.get(c, oy * stride + ky, ox * stride + kx), acc, x.precision);
                        }
                    }
                }
                y.data[(o * oh + oy) * ow + ox] = acc;
            }
        }
    }
    y
}

#[test]
fn conv_via_im2col_matches_direct_convolution() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(0xc0de);
    for case in 0..50 {
        let p = if case % 2 == 0 { Precision::Fp32 } else { Precision::Fp16 };
        let c = rng.gen_range(1..5);
        let kh = rng.gen_range(1..4);
        let kw = rng.gen_range(1..4);
        let stride = rng.gen_range(1..3);
        let h = rng.gen_range(kh..kh + 9);
        let w = rng.gen_range(kw..kw + 9);
        let out_c = rng.gen_range(1..9);
        let x = Tensor::from_words(c, h, w, p, (0..c * h * w).map(|_| from_f32(rng.gen_range(-1.0..1.0), p)).collect()).unwrap();
        let weights: Vec<u32> = (0..out_c * c * kh * kw).map(|_| from_f32(rng.gen_range(-1.0..1.0), p)).collect();

        let cols = im2col(&x, kh, kw, stride).unwrap();
        let wm = Matrix::from_words(out_c, c * kh * kw, p, weights.clone()).unwrap();
        let cfg = KernelConfig::new(Algorithm::SoftwareGemm, p, out_c, cols.cols, cols.rows).unwrap();
        let r = run_gemm(&wm, &cols, cfg, None).unwrap();
        let expected = direct_conv(&x, &weights, out_c, kh, kw, stride);
        assert_eq!(r.c.data, expected.data, "case {case}: {c}x{h}x{w} k{kh}x{kw} s{stride} -> {out_c} {p}");
    }
}

/// The reference network evaluated with [`direct_conv`] and a scalar LeakyReLU.
fn direct_forward(input: &Tensor, p: Precision) -> Tensor {
    let spec = reference_network();
    let mut x = input.clone();
    for layer in &spec.layers {
        match layer {
            Layer::Conv { out_channels, kernel_h, kernel_w, stride, weights } => {
                let w: Vec<u32> = weights.iter().map(|&v| from_f32(v, p)).collect();
                x = direct_conv(&x, &w, *out_channels, *kernel_h, *kernel_w, *stride);
            }
            Layer::Activation { slope } => {
                let s = from_f32(*slope, p);
                for v in &mut x.data {
                    if numerics::to_f64(*v, p) < 0.0 {
                        *v = numerics::mul(*v, s, p, RoundingMode::NearestEven);
                    }
                }
            }
            _ => {}
        }
    }
    x
}

#[test]
fn network_inference_matches_direct_forward_pass() {
    let frames = reference_frames();
    for p in [Precision::Fp32, Precision::Fp16] {
        let net = Network::new(&reference_network(), p, Algorithm::SoftwareGemm).unwrap();
        for f in [&frames[0], &frames[7]] {
            let input = f.convert(p);
            let r = net.infer(&input, None).unwrap();
            assert_eq!(r.status, ExecStatus::Completed);
            assert_eq!(r.raw, direct_forward(&input, p), "{p}");
        }
    }
}

#[test]
fn inference_is_deterministic_and_detects_objects() {
    let frames = reference_frames();
    for algorithm in [Algorithm::SoftwareGemm, Algorithm::TensorCoreGemm] {
        let net = Network::new(&reference_network(), Precision::Fp16, algorithm).unwrap();
        let input = frames[4].convert(Precision::Fp16);
        let a = net.infer(&input, None).unwrap();
        assert_eq!(a, net.infer(&input, None).unwrap());
        assert_eq!(a, net.prepare(&input).unwrap().run(None).unwrap().result);
    }
    let net = Network::new(&reference_network(), Precision::Fp32, Algorithm::SoftwareGemm).unwrap();
    let total: usize = frames.iter().map(|f| net.infer(f, None).unwrap().detections.len()).sum();
    assert!(total >= 16, "frames should carry detections, got {total}");
}

#[test]
fn warp_random_value_in_first_conv_reaches_the_output() {
    let frames = reference_frames();
    for p in [Precision::Fp32, Precision::Fp16] {
        let net = Network::new(&reference_network(), p, Algorithm::SoftwareGemm).unwrap();
        let first = TraceProfile { kernels: vec![net.trace_profile().unwrap().kernels[0].clone()] };
        let prepared: Vec<_> = frames.iter().map(|f| net.prepare(&f.convert(p)).unwrap()).collect();
        let mut nonempty = 0;
        for i in 0..200u64 {
            let seed = split(0x5752_5631, 0, i);
            let site = sample_site(seed, &first, FaultModel::WarpRandomValue, &[RegClass::ArithmeticDest], StorageClass::UnprotectedDatapath).unwrap();
            assert_eq!(site.kernel, 0);
            let desc = FaultDescriptor::new(FaultModel::WarpRandomValue, site, seed).unwrap();
            let frame = &prepared[i as usize % prepared.len()];
            let r = frame.run(Some(&desc)).unwrap();
            if r.result.raw != frame.golden().raw {
                nonempty += 1;
            }
        }
        assert!(nonempty >= 198, "{p}: only {nonempty}/200 reached the raw output");
    }
}

#[test]
fn last_layer_fault_lands_on_its_site_map() {
    let frames = reference_frames();
    let net = Network::new(&reference_network(), Precision::Fp32, Algorithm::SoftwareGemm).unwrap();
    let last = net.gemm_count() - 1;
    let cfg = net.gemm_config(last).unwrap();
    let profile = TraceProfile { kernels: vec![net.trace_profile().unwrap().kernels[last].clone()] };
    let frame = net.prepare(&frames[2]).unwrap();
    let mut hits = 0;
    for i in 0..40u64 {
        let seed = split(0x4c41_5354, 0, i);
        let mut site = sample_site_where(seed, &profile, FaultModel::SingleRandomValue, StorageClass::UnprotectedDatapath, |e| {
            e.class == Some(RegClass::ArithmeticDest)
        })
        .unwrap();
        site.kernel = last as u32;
        let desc = FaultDescriptor::new(FaultModel::SingleRandomValue, site, seed).unwrap();
        let r = frame.run(Some(&desc)).unwrap();
        let gemm = diff(&r.gemm_golden, &r.gemm_observed, ComparePolicy::Exact).unwrap();
        let map = site_to_elements(&warpfi_core::fault::FaultSite { kernel: 0, ..site }, &cfg).unwrap();
        let got: BTreeSet<_> = gemm.coords().collect();
        assert!(got.is_subset(&map), "{got:?} not within {map:?}");
        // the last GEMM feeds the head directly, so the raw diff is the GEMM diff
        let raw_golden = frame.golden().raw.to_matrix();
        let raw = diff(&raw_golden, &r.result.raw.to_matrix(), ComparePolicy::Exact).unwrap();
        assert_eq!(raw.len(), gemm.len());
        hits += usize::from(!got.is_empty());
    }
    assert!(hits > 0);
}
