use alloc::format;
use alloc::vec::Vec;

use super::conv::{conv_output_dims, im2col};
use super::detect::{decode_detections, DecodeParams, Detection, HeadConfig};
use super::Tensor;
use crate::error::{Error, Result};
use crate::fault::FaultDescriptor;
use crate::numerics::{self, Precision, RoundingMode};
use crate::simt::{trace_profile, Algorithm, ExecStatus, Kernel, KernelConfig, Matrix, TraceProfile};

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// Valid convolution; `weights` is `out_channels × (in_channels·kh·kw)`
    /// binary32 values in im2col row order.
    Conv { out_channels: usize, kernel_h: usize, kernel_w: usize, stride: usize, weights: Vec<f32> },
    /// Fully connected over the flattened input; `weights` is `out_features × inputs`.
    Dense { out_features: usize, weights: Vec<f32> },
    Activation { slope: f32 },
    DetectionHead(HeadConfig),
}

impl Layer {
    pub fn is_gemm(&self) -> bool {
        matches!(self, Layer::Conv { .. } | Layer::Dense { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    /// (channels, height, width) of the input frame.
    pub input: (usize, usize, usize),
    pub layers: Vec<Layer>,
}

impl NetworkSpec {
    /// Checks layer compatibility and returns the shape after every layer.
    pub fn shapes(&self) -> Result<Vec<(usize, usize, usize)>> {
        let mut shape = self.input;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let (c, h, w) = shape;
            shape = match layer {
                Layer::Conv { out_channels, kernel_h, kernel_w, stride, weights } => {
                    if weights.len() != out_channels * c * kernel_h * kernel_w {
                        return Err(Error::contract(format!("layer {i}: {} conv weights for {out_channels}x{c}x{kernel_h}x{kernel_w}", weights.len())));
                    }
                    let (oh, ow) = conv_output_dims(h, w, *kernel_h, *kernel_w, *stride)?;
                    (*out_channels, oh, ow)
                }
                Layer::Dense { out_features, weights } => {
                    if weights.len() != out_features * c * h * w {
                        return Err(Error::contract(format!("layer {i}: {} dense weights for {out_features}x{}", weights.len(), c * h * w)));
                    }
                    (*out_features, 1, 1)
                }
                Layer::Activation { .. } => shape,
                Layer::DetectionHead(head) => {
                    if shape != (head.channels(), head.grid, head.grid) {
                        return Err(Error::contract(format!("layer {i}: head expects {}x{g}x{g}, got {c}x{h}x{w}", head.channels(), g = head.grid)));
                    }
                    if i + 1 != self.layers.len() {
                        return Err(Error::contract("the detection head must be the last layer"));
                    }
                    shape
                }
            };
            out.push(shape);
        }
        Ok(out)
    }

    pub fn head(&self) -> Option<&HeadConfig> {
        match self.layers.last() {
            Some(Layer::DetectionHead(h)) => Some(h),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    /// Output of the last non-head layer; all zero unless `status` is `Completed`.
    pub raw: Tensor,
    /// Empty unless `status` is `Completed`.
    pub detections: Vec<Detection>,
    pub status: ExecStatus,
}

#[derive(Debug, Clone)]
struct GemmLayer {
    layer: usize,
    /// Weight operand in the network precision.
    weights: Matrix,
}

/// A network instantiated for one precision and GEMM algorithm.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    shapes: Vec<(usize, usize, usize)>,
    precision: Precision,
    algorithm: Algorithm,
    gemms: Vec<GemmLayer>,
    decode: DecodeParams,
}

impl Network {
    /// Binary16 variants round the binary32 weights to nearest even.
    pub fn new(spec: &NetworkSpec, precision: Precision, algorithm: Algorithm) -> Result<Self> {
        let shapes = spec.shapes()?;
        if spec.head().is_none() {
            return Err(Error::contract("network has no detection head"));
        }
        let mut gemms = Vec::new();
        for (i, layer) in spec.layers.iter().enumerate() {
            let (rows, w) = match layer {
                Layer::Conv { out_channels, weights, .. } => (*out_channels, weights),
                Layer::Dense { out_features, weights } => (*out_features, weights),
                _ => continue,
            };
            let cols = w.len() / rows;
            let words = w.iter().map(|&v| numerics::from_f32(v, precision)).collect();
            gemms.push(GemmLayer { layer: i, weights: Matrix::from_words(rows, cols, precision, words)? });
        }
        Ok(Network { spec: spec.clone(), shapes, precision, algorithm, gemms, decode: DecodeParams::default() })
    }

    pub fn with_decode(mut self, decode: DecodeParams) -> Self {
        self.decode = decode;
        self
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn head(&self) -> &HeadConfig {
        self.spec.head().expect("checked at construction")
    }

    pub fn gemm_count(&self) -> usize {
        self.gemms.len()
    }

    /// Kernel configuration of GEMM layer `g`.
    pub fn gemm_config(&self, g: usize) -> Result<KernelConfig> {
        let gl = self.gemms.get(g).ok_or_else(|| Error::invalid_site(format!("network has no GEMM {g}")))?;
        let input = if gl.layer == 0 { self.spec.input } else { self.shapes[gl.layer - 1] };
        let (_, h, w) = input;
        let n = match &self.spec.layers[gl.layer] {
            Layer::Conv { kernel_h, kernel_w, stride, .. } => {
                let (oh, ow) = conv_output_dims(h, w, *kernel_h, *kernel_w, *stride)?;
                oh * ow
            }
            _ => 1,
        };
        KernelConfig::new(self.algorithm, self.precision, gl.weights.rows, n, gl.weights.cols)
    }

    /// One kernel per GEMM layer, in layer order.
    pub fn trace_profile(&self) -> Result<TraceProfile> {
        let mut kernels = Vec::new();
        for g in 0..self.gemms.len() {
            kernels.extend(trace_profile(&self.gemm_config(g)?).kernels);
        }
        Ok(TraceProfile { kernels })
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.dims() != self.spec.input || input.precision != self.precision {
            return Err(Error::DimensionMismatch {
                expected: format!("{:?} {}", self.spec.input, self.precision),
                actual: format!("{:?} {}", input.dims(), input.precision),
            });
        }
        Ok(())
    }

    fn gemm_operand(&self, layer: usize, x: &Tensor) -> Result<Matrix> {
        match &self.spec.layers[layer] {
            Layer::Conv { kernel_h, kernel_w, stride, .. } => im2col(x, *kernel_h, *kernel_w, *stride),
            _ => Matrix::from_words(x.data.len(), 1, x.precision, x.data.clone()),
        }
    }

    fn apply_pointwise(&self, layer: usize, x: &mut Tensor) {
        if let Layer::Activation { slope } = self.spec.layers[layer] {
            let s = numerics::from_f32(slope, self.precision);
            for w in &mut x.data {
                if numerics::is_negative(*w, self.precision) {
                    *w = numerics::mul(*w, s, self.precision, RoundingMode::NearestEven);
                }
            }
        }
    }

    fn gemm_index(&self, layer: usize) -> Option<usize> {
        self.gemms.iter().position(|g| g.layer == layer)
    }

    /// Fault-free forward pass of layers `from..`, starting from `x`.
    fn forward_from(&self, from: usize, mut x: Tensor) -> Result<Tensor> {
        for layer in from..self.spec.layers.len() {
            if let Some(g) = self.gemm_index(layer) {
                let b = self.gemm_operand(layer, &x)?;
                let kernel = Kernel::new(&self.gemms[g].weights, &b, self.gemm_config(g)?)?;
                let (c, h, w) = self.shapes[layer];
                x = Tensor::from_words(c, h, w, self.precision, kernel.golden().c.data.clone())?;
            } else {
                self.apply_pointwise(layer, &mut x);
            }
        }
        Ok(x)
    }

    pub fn infer(&self, input: &Tensor, fault: Option<&FaultDescriptor>) -> Result<InferenceResult> {
        match fault {
            None => {
                self.check_input(input)?;
                let raw = self.forward_from(0, input.clone())?;
                let detections = decode_detections(&raw, self.head(), &self.decode)?;
                Ok(InferenceResult { raw, detections, status: ExecStatus::Completed })
            }
            Some(d) => Ok(self.prepare(input)?.run(Some(d))?.result),
        }
    }

    /// Runs the golden pass and keeps every GEMM kernel for injection.
    pub fn prepare(&self, input: &Tensor) -> Result<PreparedFrame<'_>> {
        self.check_input(input)?;
        let mut kernels = Vec::with_capacity(self.gemms.len());
        let mut x = input.clone();
        for layer in 0..self.spec.layers.len() {
            if let Some(g) = self.gemm_index(layer) {
                let b = self.gemm_operand(layer, &x)?;
                let kernel = Kernel::new(&self.gemms[g].weights, &b, self.gemm_config(g)?)?;
                let (c, h, w) = self.shapes[layer];
                x = Tensor::from_words(c, h, w, self.precision, kernel.golden().c.data.clone())?;
                kernels.push(kernel);
            } else {
                self.apply_pointwise(layer, &mut x);
            }
        }
        let detections = decode_detections(&x, self.head(), &self.decode)?;
        Ok(PreparedFrame { net: self, kernels, golden: InferenceResult { raw: x, detections, status: ExecStatus::Completed } })
    }
}

/// Golden state of one input frame.
#[derive(Debug, Clone)]
pub struct PreparedFrame<'a> {
    net: &'a Network,
    kernels: Vec<Kernel>,
    golden: InferenceResult,
}

/// Result of one faulty inference plus the faulted layer's GEMM output.
#[derive(Debug, Clone)]
pub struct FaultyInference {
    pub result: InferenceResult,
    pub gemm_golden: Matrix,
    pub gemm_observed: Matrix,
    pub simulated_instructions: u64,
}

impl PreparedFrame<'_> {
    pub fn golden(&self) -> &InferenceResult {
        &self.golden
    }

    pub fn network(&self) -> &Network {
        self.net
    }

    /// Injects into GEMM `fault.site.kernel` and propagates the corruption.
    pub fn run(&self, fault: Option<&FaultDescriptor>) -> Result<FaultyInference> {
        let Some(desc) = fault else {
            let c = self.kernels.last().map(|k| k.golden().c.clone()).unwrap_or_else(|| Matrix::zeros(0, 0, self.net.precision));
            return Ok(FaultyInference { result: self.golden.clone(), gemm_golden: c.clone(), gemm_observed: c, simulated_instructions: 0 });
        };
        let g = desc.site.kernel as usize;
        let kernel = self.kernels.get(g).ok_or_else(|| Error::invalid_site(format!("network has no GEMM {g}")))?;
        let local = FaultDescriptor { site: crate::fault::FaultSite { kernel: 0, ..desc.site }, ..desc.clone() };
        let r = kernel.run(Some(&local))?;
        let gemm_golden = kernel.golden().c.clone();
        let mut simulated = r.simulated_instructions;
        let result = if !r.status.is_completed() {
            let (c, h, w) = self.golden.raw.dims();
            InferenceResult { raw: Tensor::zeros(c, h, w, self.net.precision), detections: Vec::new(), status: r.status }
        } else if r.c == gemm_golden {
            self.golden.clone()
        } else {
            let layer = self.net.gemms[g].layer;
            let (c, h, w) = self.net.shapes[layer];
            let x = Tensor::from_words(c, h, w, self.net.precision, r.c.data.clone())?;
            let raw = self.net.forward_from(layer + 1, x)?;
            simulated += self.kernels[g + 1..].iter().map(|k| k.golden().simulated_instructions).sum::<u64>();
            let detections = decode_detections(&raw, self.net.head(), &self.net.decode)?;
            InferenceResult { raw, detections, status: ExecStatus::Completed }
        };
        Ok(FaultyInference { result, gemm_golden, gemm_observed: r.c, simulated_instructions: simulated })
    }
}
