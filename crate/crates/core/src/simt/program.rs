use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use super::{Algorithm, KernelConfig, RegClass, WARP_SIZE};
use crate::error::{Error, Result};
use crate::fault::{FaultSite, Lane};
use crate::numerics::Precision;

/// Per-lane register file slots.
pub(crate) mod reg {
    pub const ACC: usize = 0;
    pub const APTR: usize = 1;
    pub const BPTR: usize = 2;
    pub const CPTR: usize = 3;
    pub const ITER: usize = 4;
    pub const PRED: usize = 5;
    pub const FRAG_A: usize = 6;
    pub const FRAG_B: usize = 7;
    pub const COUNT: usize = 8;
}

/// Static instruction. `u`/`q` are the K offset within the current K tile
/// (`q` counts 4-wide MMA steps).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Op {
    SetAptr,
    SetBptr,
    SetCptr,
    InitIter,
    Ffma { u: u16 },
    Hfma2 { u: u16 },
    CvtA { sub: u8, q: u16 },
    CvtB { sub: u8, q: u16 },
    Hmma { sub: u8, q: u16 },
    AdvA,
    AdvB,
    DecIter,
    SetPred,
    Bra,
    Store,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Opcode {
    SetAddress,
    InitCounter,
    Ffma,
    Hfma2,
    Cvt,
    Hmma,
    AdvanceAddress,
    DecCounter,
    SetPredicate,
    Branch,
    Store,
}

impl Opcode {
    pub const ALL: [Opcode; 11] = [
        Opcode::SetAddress,
        Opcode::InitCounter,
        Opcode::Ffma,
        Opcode::Hfma2,
        Opcode::Cvt,
        Opcode::Hmma,
        Opcode::AdvanceAddress,
        Opcode::DecCounter,
        Opcode::SetPredicate,
        Opcode::Branch,
        Opcode::Store,
    ];

    pub const fn name(self) -> &'static str {
        match self {
            Opcode::SetAddress => "set-address",
            Opcode::InitCounter => "init-counter",
            Opcode::Ffma => "ffma",
            Opcode::Hfma2 => "hfma2",
            Opcode::Cvt => "cvt",
            Opcode::Hmma => "hmma",
            Opcode::AdvanceAddress => "advance-address",
            Opcode::DecCounter => "dec-counter",
            Opcode::SetPredicate => "set-predicate",
            Opcode::Branch => "branch",
            Opcode::Store => "store",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.name() == s)
    }
}

impl Op {
    pub(crate) fn opcode(self) -> Opcode {
        match self {
            Op::SetAptr | Op::SetBptr | Op::SetCptr => Opcode::SetAddress,
            Op::InitIter => Opcode::InitCounter,
            Op::Ffma { .. } => Opcode::Ffma,
            Op::Hfma2 { .. } => Opcode::Hfma2,
            Op::CvtA { .. } | Op::CvtB { .. } => Opcode::Cvt,
            Op::Hmma { .. } => Opcode::Hmma,
            Op::AdvA | Op::AdvB => Opcode::AdvanceAddress,
            Op::DecIter => Opcode::DecCounter,
            Op::SetPred => Opcode::SetPredicate,
            Op::Bra => Opcode::Branch,
            Op::Store => Opcode::Store,
        }
    }
}

/// Lane geometry of one kernel configuration.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub cfg: KernelConfig,
    pub epl: usize,
    pub lanes_used: usize,
    /// Lanes per 4×4 sub-tile (tensor-core kernels).
    pub group_lanes: usize,
}

pub(crate) const fn lane_mask(lo: usize, count: usize) -> u32 {
    if count >= 32 {
        u32::MAX
    } else {
        ((1u32 << count) - 1) << lo
    }
}

impl Layout {
    pub fn new(cfg: &KernelConfig) -> Self {
        let epl = cfg.elements_per_lane();
        Layout {
            cfg: *cfg,
            epl,
            lanes_used: cfg.lanes_used(),
            group_lanes: 16 / epl,
        }
    }

    pub fn all_lanes(&self) -> u32 {
        lane_mask(0, self.lanes_used)
    }

    pub fn group_base(&self, sub: usize) -> usize {
        sub * self.group_lanes
    }

    pub fn group_mask(&self, sub: usize) -> u32 {
        lane_mask(self.group_base(sub), self.group_lanes)
    }

    /// Tensor-core fragment registers live in the first 8 lanes of a group.
    pub fn frag_mask(&self, sub: usize) -> u32 {
        lane_mask(self.group_base(sub), 8)
    }

    pub fn subtile_origin(&self, sub: usize) -> (usize, usize) {
        let per_row = self.cfg.tile_n / 4;
        ((sub / per_row) * 4, (sub % per_row) * 4)
    }

    /// Tile-local (row, first col) of the `epl` elements owned by `lane`.
    pub fn lane_origin(&self, lane: usize) -> (usize, usize) {
        match self.cfg.algorithm {
            Algorithm::SoftwareGemm => {
                let e0 = lane * self.epl;
                (e0 / self.cfg.tile_n, e0 % self.cfg.tile_n)
            }
            Algorithm::TensorCoreGemm => {
                let sub = lane / self.group_lanes;
                let e0 = (lane % self.group_lanes) * self.epl;
                let (r0, c0) = self.subtile_origin(sub);
                (r0 + e0 / 4, c0 + e0 % 4)
            }
        }
    }

    /// Lane of sub-tile `sub` holding sub-tile element `idx` (row-major 0..16).
    pub fn subtile_lane(&self, sub: usize, idx: usize) -> usize {
        self.group_base(sub) + idx / self.epl
    }

    fn push_own(&self, lane: usize, out: &mut Vec<(usize, usize)>) {
        let (r, c) = self.lane_origin(lane);
        for h in 0..self.epl {
            out.push((r, c + h));
        }
    }

    /// Tile-local output elements fed by the value `op` writes in `lane`.
    pub fn feeds(&self, op: Op, lane: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let tensor = self.cfg.algorithm == Algorithm::TensorCoreGemm;
        match op {
            Op::SetAptr | Op::AdvA if tensor => {
                let (r, _) = self.lane_origin(lane);
                let (_, c0) = self.subtile_origin(lane / self.group_lanes);
                out.extend((0..4).map(|c| (r, c0 + c)));
            }
            Op::SetBptr | Op::AdvB if tensor => {
                let (_, c) = self.lane_origin(lane);
                let (r0, _) = self.subtile_origin(lane / self.group_lanes);
                for r in 0..4 {
                    out.extend((0..self.epl).map(|h| (r0 + r, c + h)));
                }
            }
            Op::CvtA { sub, .. } => {
                let t = lane - self.group_base(sub as usize);
                let (r0, c0) = self.subtile_origin(sub as usize);
                let i = (2 * t) / 4;
                out.extend((0..4).map(|c| (r0 + i, c0 + c)));
            }
            Op::CvtB { sub, .. } => {
                let t = lane - self.group_base(sub as usize);
                let (r0, c0) = self.subtile_origin(sub as usize);
                let j = (2 * t) % 4;
                for r in 0..4 {
                    out.push((r0 + r, c0 + j));
                    out.push((r0 + r, c0 + j + 1));
                }
            }
            Op::Bra | Op::Store => {}
            _ => self.push_own(lane, &mut out),
        }
        out
    }

    /// Destination register, its class and writing lanes.
    pub fn dest(&self, op: Op) -> Option<(usize, RegClass, u32)> {
        let all = self.all_lanes();
        Some(match op {
            Op::SetAptr | Op::AdvA => (reg::APTR, RegClass::AddressBase, all),
            Op::SetBptr | Op::AdvB => (reg::BPTR, RegClass::AddressBase, all),
            Op::SetCptr => (reg::CPTR, RegClass::AddressBase, all),
            Op::InitIter | Op::DecIter => (reg::ITER, RegClass::LoopCounter, all),
            Op::SetPred => (reg::PRED, RegClass::PredicateMask, all),
            Op::Ffma { .. } | Op::Hfma2 { .. } => (reg::ACC, RegClass::ArithmeticDest, all),
            Op::Hmma { sub, .. } => (reg::ACC, RegClass::ArithmeticDest, self.group_mask(sub as usize)),
            Op::CvtA { sub, .. } => (reg::FRAG_A, RegClass::ArithmeticDest, self.frag_mask(sub as usize)),
            Op::CvtB { sub, .. } => (reg::FRAG_B, RegClass::ArithmeticDest, self.frag_mask(sub as usize)),
            Op::Bra | Op::Store => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Program {
    pub ops: Vec<Op>,
    pub loop_start: usize,
    pub iterations: usize,
}

impl Program {
    pub fn build(cfg: &KernelConfig) -> Self {
        let mut ops = alloc::vec![Op::SetAptr, Op::SetBptr, Op::SetCptr, Op::InitIter];
        let loop_start = ops.len();
        match cfg.algorithm {
            Algorithm::SoftwareGemm => {
                for u in 0..cfg.tile_k as u16 {
                    ops.push(match cfg.precision {
                        Precision::Fp32 => Op::Ffma { u },
                        Precision::Fp16 => Op::Hfma2 { u },
                    });
                }
            }
            Algorithm::TensorCoreGemm => {
                let subtiles = (cfg.tile_m / 4) * (cfg.tile_n / 4);
                for q in 0..(cfg.tile_k / 4) as u16 {
                    for sub in 0..subtiles as u8 {
                        if cfg.precision == Precision::Fp32 {
                            ops.push(Op::CvtA { sub, q });
                            ops.push(Op::CvtB { sub, q });
                        }
                        ops.push(Op::Hmma { sub, q });
                    }
                }
            }
        }
        ops.extend([Op::AdvA, Op::AdvB, Op::DecIter, Op::SetPred, Op::Bra, Op::Store]);
        Program { ops, loop_start, iterations: cfg.loop_iterations() }
    }

    fn body_len(&self) -> usize {
        self.ops.len() - self.loop_start - 1
    }

    pub fn fault_free_len(&self) -> usize {
        self.loop_start + self.iterations * self.body_len() + 1
    }

    /// The instruction issued at dynamic index `dyn_inst` in a fault-free run.
    pub fn fault_free_op(&self, dyn_inst: u64) -> Option<Op> {
        let d = usize::try_from(dyn_inst).ok()?;
        if d < self.loop_start {
            return Some(self.ops[d]);
        }
        let body = d - self.loop_start;
        let loop_len = self.iterations * self.body_len();
        if body < loop_len {
            Some(self.ops[self.loop_start + body % self.body_len()])
        } else if body == loop_len {
            self.ops.last().copied()
        } else {
            None
        }
    }
}

/// One dynamic instruction of the fault-free per-warp trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEntry {
    pub opcode: Opcode,
    /// `None` for instructions without a destination register.
    pub class: Option<RegClass>,
    /// Lanes writing the destination register.
    pub lanes: u32,
}

/// Fault-free trace of one kernel launch; every warp runs the same sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelTrace {
    pub warps: usize,
    pub entries: Vec<TraceEntry>,
}

impl KernelTrace {
    pub fn per_warp_instructions(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn total_instructions(&self) -> u64 {
        self.warps as u64 * self.per_warp_instructions()
    }

    pub fn count_where(&self, pred: impl Fn(&TraceEntry) -> bool) -> u64 {
        self.entries.iter().filter(|e| pred(e)).count() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TraceProfile {
    pub kernels: Vec<KernelTrace>,
}

impl TraceProfile {
    pub fn total_instructions(&self) -> u64 {
        self.kernels.iter().map(KernelTrace::total_instructions).sum()
    }
}

pub(crate) fn kernel_trace(cfg: &KernelConfig) -> KernelTrace {
    let layout = Layout::new(cfg);
    let program = Program::build(cfg);
    let entries = (0..program.fault_free_len() as u64)
        .map(|d| {
            let op = program.fault_free_op(d).expect("index within trace");
            let dest = layout.dest(op);
            TraceEntry {
                opcode: op.opcode(),
                class: dest.map(|(_, c, _)| c),
                lanes: dest.map_or(0, |(_, _, l)| l),
            }
        })
        .collect();
    KernelTrace { warps: cfg.num_warps(), entries }
}

/// Fault-free trace summary of a single GEMM launch.
pub fn trace_profile(cfg: &KernelConfig) -> TraceProfile {
    TraceProfile { kernels: alloc::vec![kernel_trace(cfg)] }
}

/// Resolves a site to its static instruction and writing lanes.
pub(crate) fn resolve_site(cfg: &KernelConfig, site: &FaultSite) -> Result<(Op, usize, u32)> {
    let layout = Layout::new(cfg);
    let program = Program::build(cfg);
    if site.warp as usize >= cfg.num_warps() {
        return Err(Error::invalid_site(format!("warp {} of {}", site.warp, cfg.num_warps())));
    }
    let op = program.fault_free_op(site.dyn_inst).ok_or_else(|| {
        Error::invalid_site(format!("dynamic instruction {} beyond trace length {}", site.dyn_inst, program.fault_free_len()))
    })?;
    let (reg, class, lanes) = layout
        .dest(op)
        .ok_or_else(|| Error::invalid_site(format!("instruction {} has no destination", site.dyn_inst)))?;
    if class != site.reg_class {
        return Err(Error::invalid_site(format!(
            "instruction {} writes a {} register, site names {}",
            site.dyn_inst,
            class.name(),
            site.reg_class.name()
        )));
    }
    let lanes = match site.lane {
        Lane::All => lanes,
        Lane::One(l) if (l as usize) < WARP_SIZE && lanes & (1 << l) != 0 => 1 << l,
        Lane::One(l) => {
            return Err(Error::invalid_site(format!("lane {l} does not write instruction {}", site.dyn_inst)))
        }
    };
    Ok((op, reg, lanes))
}

/// Output coordinates nominally fed by the register value at `site`; the
/// union over the writing lanes for warp-wide sites.
pub fn site_to_elements(site: &FaultSite, cfg: &KernelConfig) -> Result<BTreeSet<(usize, usize)>> {
    let (op, _, lanes) = resolve_site(cfg, site)?;
    let layout = Layout::new(cfg);
    let grid_cols = cfg.warp_grid().1;
    let (wr, wc) = (site.warp as usize / grid_cols, site.warp as usize % grid_cols);
    let mut out = BTreeSet::new();
    for lane in (0..WARP_SIZE).filter(|l| lanes & (1 << l) != 0) {
        for (r, c) in layout.feeds(op, lane) {
            let (gr, gc) = (wr * cfg.tile_m + r, wc * cfg.tile_n + c);
            if gr < cfg.m && gc < cfg.n {
                out.insert((gr, gc));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn software_fp32_trace_shape() {
        let cfg = KernelConfig::with_tiles(Algorithm::SoftwareGemm, Precision::Fp32, 8, 8, 8, 8, 4, 4).unwrap();
        let t = kernel_trace(&cfg);
        assert_eq!(t.warps, 2);
        // 4 prologue + 2 iterations × (4 FMA + 5 loop ops) + store
        assert_eq!(t.entries.len(), 4 + 2 * 9 + 1);
        assert_eq!(t.count_where(|e| e.opcode == Opcode::Ffma), 8);
    }

    #[test]
    fn tensor_core_lane_layout() {
        let cfg = KernelConfig::new(Algorithm::TensorCoreGemm, Precision::Fp16, 8, 8, 4).unwrap();
        let layout = Layout::new(&cfg);
        assert_eq!(layout.group_lanes, 8);
        assert_eq!(layout.lane_origin(0), (0, 0));
        assert_eq!(layout.lane_origin(1), (0, 2));
        assert_eq!(layout.lane_origin(7), (3, 2));
        assert_eq!(layout.lane_origin(8), (0, 4));
        assert_eq!(layout.lane_origin(31), (7, 6));
        let mut seen = BTreeSet::new();
        for lane in 0..32 {
            let (r, c) = layout.lane_origin(lane);
            assert!(seen.insert((r, c)) && seen.insert((r, c + 1)));
        }
        assert_eq!(seen.len(), 64);
    }

    #[test]
    fn fault_free_op_walks_the_loop() {
        let cfg = KernelConfig::new(Algorithm::SoftwareGemm, Precision::Fp32, 8, 4, 8).unwrap();
        let p = Program::build(&cfg);
        assert_eq!(p.fault_free_op(0), Some(Op::SetAptr));
        assert_eq!(p.fault_free_op(4), Some(Op::Ffma { u: 0 }));
        assert_eq!(p.fault_free_op(13), Some(Op::Ffma { u: 0 }));
        assert_eq!(p.fault_free_op(22), Some(Op::Store));
        assert_eq!(p.fault_free_op(23), None);
    }
}
