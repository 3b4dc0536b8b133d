//! One injection end to end: ECC filter, execution, diff, geometry and,
//! for detection networks, criticality.

use crate::analysis::{classify_coords, diff, ComparePolicy, DueReason, Outcome, DEFAULT_SQUARE_DENSITY};
use crate::error::Result;
use crate::fault::{ecc_filter, EccMode, EccVerdict, FaultDescriptor};
use crate::nn::{classify_criticality, MatchParams, PreparedFrame};
use crate::simt::{ExecStatus, Kernel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub square_density: f64,
    pub matching: MatchParams,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { square_density: DEFAULT_SQUARE_DENSITY, matching: MatchParams::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Evaluation {
    pub outcome: Outcome,
    /// Warp instructions interpreted for this injection.
    pub simulated_instructions: u64,
}

fn ecc_shortcut(desc: &FaultDescriptor, ecc: EccMode) -> Option<Evaluation> {
    let outcome = match ecc_filter(&desc.site, desc.model, ecc) {
        EccVerdict::Pass => return None,
        EccVerdict::Corrected => Outcome::Masked,
        EccVerdict::DueDoubleBit => Outcome::Due(DueReason::EccDoubleBit),
    };
    Some(Evaluation { outcome, simulated_instructions: 0 })
}

fn due(status: ExecStatus) -> Option<Outcome> {
    match status {
        ExecStatus::Completed => None,
        ExecStatus::Hang { .. } => Some(Outcome::Due(DueReason::Hang)),
        ExecStatus::Crash(_) => Some(Outcome::Due(DueReason::Crash)),
    }
}

pub fn evaluate_gemm(kernel: &Kernel, desc: &FaultDescriptor, ecc: EccMode, thresholds: &Thresholds) -> Result<Evaluation> {
    if let Some(e) = ecc_shortcut(desc, ecc) {
        return Ok(e);
    }
    let r = kernel.run(Some(desc))?;
    let outcome = match due(r.status) {
        Some(o) => o,
        None => {
            let d = diff(&kernel.golden().c, &r.c, ComparePolicy::Exact)?;
            if d.is_empty() {
                Outcome::Masked
            } else {
                Outcome::Sdc { geometry: classify_coords(d.coords(), thresholds.square_density)?, criticality: None }
            }
        }
    };
    Ok(Evaluation { outcome, simulated_instructions: r.simulated_instructions })
}

/// SDC is judged on the network's raw output; geometry describes the
/// corruption of the faulted layer's GEMM output.
pub fn evaluate_network(
    frame: &PreparedFrame<'_>,
    desc: &FaultDescriptor,
    ecc: EccMode,
    thresholds: &Thresholds,
) -> Result<Evaluation> {
    if let Some(e) = ecc_shortcut(desc, ecc) {
        return Ok(e);
    }
    let r = frame.run(Some(desc))?;
    let golden = frame.golden();
    let outcome = match due(r.result.status) {
        Some(o) => o,
        None if r.result.raw == golden.raw => Outcome::Masked,
        None => {
            let d = diff(&r.gemm_golden, &r.gemm_observed, ComparePolicy::Exact)?;
            Outcome::Sdc {
                geometry: classify_coords(d.coords(), thresholds.square_density)?,
                criticality: Some(classify_criticality(&golden.detections, &r.result.detections, &thresholds.matching)),
            }
        }
    };
    Ok(Evaluation { outcome, simulated_instructions: r.simulated_instructions })
}
