//! Warp-level execution engine for tiled GEMM kernels.
//!
//! Each warp owns one `tile_m × tile_n` output tile and runs a small
//! SASS-like program over the K dimension: a prologue that sets address and
//! loop registers, a loop body of FMA (or cast + MMA) instructions with
//! pointer/counter updates and a predicated back-branch, and a store.
//! Every instruction has a dynamic index within its warp; a fault descriptor
//! names one of them and the interpreter mutates that instruction's
//! destination registers right after it writes them.
//!
//! Lane layout (documented mapping, fixed for all kernels):
//!
//! - Software GEMM: lane `l` owns tile elements `l*e .. l*e+e` in row-major
//!   order, `e` = 1 for binary32 and 2 for binary16 (a packed `HFMA2` pair).
//! - Tensor-core GEMM: the tile is split into 4×4 sub-tiles; sub-tile `s`
//!   belongs to lanes `s*16/e .. (s+1)*16/e`, each lane holding `e`
//!   consecutive sub-tile elements.
//!
//! Device memory holds `A` row-major, `B` transposed (column-major), and `C`
//! row-major in three disjoint segments; any access outside them crashes.

mod exec;
mod matrix;
mod program;

use core::fmt;

use crate::error::{Error, Result};
use crate::numerics::Precision;

pub use exec::{run_gemm, Kernel};
pub use matrix::Matrix;
pub use program::{site_to_elements, trace_profile, KernelTrace, Opcode, TraceEntry, TraceProfile};

pub const WARP_SIZE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    SoftwareGemm,
    TensorCoreGemm,
}

impl Algorithm {
    pub const fn name(self) -> &'static str {
        match self {
            Algorithm::SoftwareGemm => "software",
            Algorithm::TensorCoreGemm => "tensor-core",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Algorithm::SoftwareGemm, Algorithm::TensorCoreGemm].into_iter().find(|a| a.name() == s)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What a destination register holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegClass {
    ArithmeticDest,
    LoopCounter,
    AddressBase,
    PredicateMask,
}

impl RegClass {
    pub const ALL: [RegClass; 4] = [
        RegClass::ArithmeticDest,
        RegClass::LoopCounter,
        RegClass::AddressBase,
        RegClass::PredicateMask,
    ];

    pub const fn name(self) -> &'static str {
        match self {
            RegClass::ArithmeticDest => "arithmetic",
            RegClass::LoopCounter => "loop-counter",
            RegClass::AddressBase => "address",
            RegClass::PredicateMask => "predicate",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CrashCause {
    /// Load or store outside every allocated matrix.
    OutOfBounds { address: u32 },
    /// An MMA issued while part of its lane group was diverged.
    DivergentMma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExecStatus {
    Completed,
    /// The warp exceeded its dynamic instruction budget.
    Hang { budget: u64 },
    Crash(CrashCause),
}

impl ExecStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, ExecStatus::Completed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GemmResult {
    /// `m × n` output; only fully written when `status` is `Completed`.
    pub c: Matrix,
    pub status: ExecStatus,
    /// Dynamic instructions issued by each warp (zero for warps never run).
    pub dynamic_instruction_count: alloc::vec::Vec<u64>,
    /// Instructions interpreted by this call (the golden cache skips warps).
    pub simulated_instructions: u64,
}

/// Hang watchdog: budget = this factor × fault-free per-warp count.
pub const BUDGET_FACTOR: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KernelConfig {
    pub algorithm: Algorithm,
    pub precision: Precision,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub tile_m: usize,
    pub tile_n: usize,
    pub tile_k: usize,
    /// Per-warp dynamic instruction limit.
    pub instruction_budget: u64,
}

impl KernelConfig {
    /// Default tiling for the algorithm/precision pair and a 4× hang budget.
    pub fn new(algorithm: Algorithm, precision: Precision, m: usize, n: usize, k: usize) -> Result<Self> {
        let (tile_m, tile_n) = match (algorithm, precision) {
            (Algorithm::SoftwareGemm, Precision::Fp32) => (8, 4),
            (Algorithm::SoftwareGemm, Precision::Fp16) => (8, 8),
            (Algorithm::TensorCoreGemm, Precision::Fp32) => (8, 4),
            (Algorithm::TensorCoreGemm, Precision::Fp16) => (8, 8),
        };
        Self::with_tiles(algorithm, precision, m, n, k, tile_m, tile_n, 4)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_tiles(
        algorithm: Algorithm,
        precision: Precision,
        m: usize,
        n: usize,
        k: usize,
        tile_m: usize,
        tile_n: usize,
        tile_k: usize,
    ) -> Result<Self> {
        let mut cfg = KernelConfig {
            algorithm,
            precision,
            m,
            n,
            k,
            tile_m,
            tile_n,
            tile_k,
            instruction_budget: u64::MAX,
        };
        cfg.check_shape()?;
        cfg.instruction_budget = BUDGET_FACTOR * cfg.fault_free_warp_instructions();
        Ok(cfg)
    }

    fn check_shape(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.k == 0 {
            return Err(Error::contract("matrix dimensions must be nonzero"));
        }
        if self.tile_m == 0 || self.tile_n == 0 || self.tile_k == 0 {
            return Err(Error::contract("tile dimensions must be nonzero"));
        }
        let epl = self.elements_per_lane();
        if self.algorithm == Algorithm::TensorCoreGemm
            && (!self.tile_m.is_multiple_of(4) || !self.tile_n.is_multiple_of(4) || !self.tile_k.is_multiple_of(4))
        {
            return Err(Error::contract("tensor-core tiles must be multiples of 4"));
        }
        if !self.tile_n.is_multiple_of(epl) {
            return Err(Error::contract("tile_n must hold whole packed pairs"));
        }
        if self.tile_m * self.tile_n > WARP_SIZE * epl {
            return Err(Error::contract("warp tile exceeds 32 lanes"));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check_shape()?;
        if self.instruction_budget <= self.fault_free_warp_instructions() {
            return Err(Error::contract("instruction budget must exceed the fault-free count"));
        }
        Ok(())
    }

    /// Output scalars held by each lane register.
    pub const fn elements_per_lane(&self) -> usize {
        match self.precision {
            Precision::Fp16 => 2,
            Precision::Fp32 => 1,
        }
    }

    pub const fn lanes_used(&self) -> usize {
        self.tile_m * self.tile_n / self.elements_per_lane()
    }

    pub const fn padded(&self) -> (usize, usize, usize) {
        (
            self.m.div_ceil(self.tile_m) * self.tile_m,
            self.n.div_ceil(self.tile_n) * self.tile_n,
            self.k.div_ceil(self.tile_k) * self.tile_k,
        )
    }

    /// Warp tiles along (rows, cols).
    pub const fn warp_grid(&self) -> (usize, usize) {
        (self.m.div_ceil(self.tile_m), self.n.div_ceil(self.tile_n))
    }

    pub const fn num_warps(&self) -> usize {
        let (r, c) = self.warp_grid();
        r * c
    }

    pub const fn loop_iterations(&self) -> usize {
        self.k.div_ceil(self.tile_k)
    }

    pub fn fault_free_warp_instructions(&self) -> u64 {
        program::Program::build(self).fault_free_len() as u64
    }
}
