//! Loaded injection targets and the per-injection draw.

use warpfi_core::experiment::{evaluate_gemm, evaluate_network, Evaluation};
use warpfi_core::fault::{sample_site_where, FaultDescriptor, FaultModel};
use warpfi_core::nn::{Network, PreparedFrame, Tensor};
use warpfi_core::numerics::{self, Precision};
use warpfi_core::rng::{below, rng_from_seed, split, unit_f32};
use warpfi_core::simt::{Kernel, KernelConfig, Matrix, TraceEntry, TraceProfile};

use crate::config::{Resolved, ResolvedTarget};
use crate::error::{Error, Result};
use crate::formats::{load_frame, load_matrix, load_network};

const OPERAND_A_TAG: u64 = 0x41;
const OPERAND_B_TAG: u64 = 0x42;
const FRAME_TAG: u64 = 0x66_7261_6d65;

/// Seed of injection `index` of `model`: `split(master, model tag, index)`.
pub fn injection_seed(master_seed: u64, model: FaultModel, index: u64) -> u64 {
    split(master_seed, model.tag(), index)
}

/// Operand with entries uniform in [-1, 1), rounded to `precision`.
pub fn random_matrix(seed: u64, rows: usize, cols: usize, precision: Precision) -> Matrix {
    let mut rng = rng_from_seed(seed);
    let data = (0..rows * cols).map(|_| numerics::from_f32(2.0 * unit_f32(&mut rng) - 1.0, precision)).collect();
    Matrix::from_words(rows, cols, precision, data).expect("sized by construction")
}

#[allow(clippy::large_enum_variant)]
pub enum Target {
    Gemm(Kernel),
    Network { net: Network, frames: Vec<Tensor> },
}

impl Target {
    pub fn load(cfg: &Resolved) -> Result<Self> {
        match &cfg.target {
            ResolvedTarget::Gemm { algorithm, precision, m, n, k, input_seed, a, b } => {
                let kc = KernelConfig::new(*algorithm, *precision, *m, *n, *k)?;
                let (a, b) = match (a, b) {
                    (Some(a), Some(b)) => (load_matrix(a)?, load_matrix(b)?),
                    _ => (
                        random_matrix(split(*input_seed, OPERAND_A_TAG, 0), *m, *k, *precision),
                        random_matrix(split(*input_seed, OPERAND_B_TAG, 0), *k, *n, *precision),
                    ),
                };
                Ok(Target::Gemm(Kernel::new(&a, &b, kc)?))
            }
            ResolvedTarget::Network { algorithm, precision, network, frames } => {
                let spec = load_network(network)?;
                let net = Network::new(&spec, *precision, *algorithm)?.with_decode(cfg.decode);
                let frames = frames
                    .iter()
                    .map(|p| Ok(load_frame(p, spec.input.0)?.convert(*precision)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Target::Network { net, frames })
            }
        }
    }

    /// Runs the golden passes that injections are compared against.
    pub fn prepare(&self, cfg: &Resolved) -> Result<Prepared<'_>> {
        let (profile, frames) = match self {
            Target::Gemm(k) => (warpfi_core::simt::trace_profile(k.config()), Vec::new()),
            Target::Network { net, frames } => {
                (net.trace_profile()?, frames.iter().map(|f| net.prepare(f)).collect::<warpfi_core::Result<Vec<_>>>()?)
            }
        };
        let prepared = Prepared { target: self, cfg: cfg.clone(), profile, frames };
        prepared.check_sites()?;
        Ok(prepared)
    }
}

pub struct Prepared<'a> {
    target: &'a Target,
    cfg: Resolved,
    profile: TraceProfile,
    frames: Vec<PreparedFrame<'a>>,
}

impl Prepared<'_> {
    pub fn config(&self) -> &Resolved {
        &self.cfg
    }

    pub fn profile(&self) -> &TraceProfile {
        &self.profile
    }

    fn accepts(&self, e: &TraceEntry) -> bool {
        e.class.is_some_and(|c| self.cfg.classes.contains(&c)) && (self.cfg.opcodes.is_empty() || self.cfg.opcodes.contains(&e.opcode))
    }

    fn check_sites(&self) -> Result<()> {
        for &(model, _) in &self.cfg.mix {
            let storage = self.cfg.storage.for_model(model);
            sample_site_where(0, &self.profile, model, storage, |e| self.accepts(e))
                .map_err(|e| Error::config(format!("{model}: {e}")))?;
        }
        Ok(())
    }

    /// Descriptor and frame index of injection `index` of `model`.
    pub fn draw(&self, model: FaultModel, index: u64) -> Result<(FaultDescriptor, Option<usize>)> {
        let seed = injection_seed(self.cfg.master_seed, model, index);
        let storage = self.cfg.storage.for_model(model);
        let site = sample_site_where(seed, &self.profile, model, storage, |e| self.accepts(e))?;
        let frame = (!self.frames.is_empty())
            .then(|| below(&mut rng_from_seed(split(seed, FRAME_TAG, 0)), self.frames.len() as u64) as usize);
        Ok((FaultDescriptor::new(model, site, seed)?, frame))
    }

    pub fn evaluate(&self, desc: &FaultDescriptor, frame: Option<usize>) -> Result<Evaluation> {
        let (ecc, th) = (self.cfg.ecc, &self.cfg.thresholds);
        let eval = match (self.target, frame) {
            (Target::Gemm(kernel), None) => evaluate_gemm(kernel, desc, ecc, th)?,
            (Target::Network { .. }, Some(f)) => {
                let frame = self.frames.get(f).ok_or_else(|| Error::Log(format!("frame {f} out of range")))?;
                evaluate_network(frame, desc, ecc, th)?
            }
            (Target::Gemm(_), Some(_)) => return Err(Error::Log("GEMM target takes no frame index".into())),
            (Target::Network { .. }, None) => return Err(Error::Log("network target needs a frame index".into())),
        };
        Ok(eval)
    }
}
