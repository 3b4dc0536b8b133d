use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::program::{reg, Layout, Op, Program};
use super::{CrashCause, ExecStatus, GemmResult, KernelConfig, Matrix, WARP_SIZE};
use crate::error::{Error, Result};
use crate::fault::{apply_fault_warp, FaultDescriptor};
use crate::numerics::{
    f32_to_f16, fma16, fma32, mma_4x4, pack_fp16_pair, unpack_fp16_pair, Precision, RoundingMode, Tile4x4, Word32,
};

const A_BASE: u32 = 0x1000_0000;
const B_BASE: u32 = 0x2000_0000;
const C_BASE: u32 = 0x3000_0000;

/// A GEMM launch bound to its inputs, with the fault-free result cached.
///
/// Warps share no state except output stores to disjoint tiles, so a faulty
/// run only re-executes the faulted warp on top of the cached golden tiles.
#[derive(Debug, Clone)]
pub struct Kernel {
    cfg: KernelConfig,
    layout: Layout,
    program: Program,
    dims: (usize, usize, usize),
    /// `A` padded, row-major `m' × k'`.
    a_mem: Vec<u32>,
    /// `B` padded and transposed, row-major `n' × k'`.
    b_mem: Vec<u32>,
    golden_mem: Vec<u32>,
    golden: GemmResult,
}

struct Warp {
    regs: [[u32; reg::COUNT]; WARP_SIZE],
    active: u32,
    launch: u32,
}

fn lanes_of(mask: u32) -> impl Iterator<Item = usize> {
    (0..WARP_SIZE).filter(move |l| mask & (1 << l) != 0)
}

enum Step {
    Next,
    Jump(usize),
    Exit,
}

impl Kernel {
    pub fn new(a: &Matrix, b: &Matrix, cfg: KernelConfig) -> Result<Self> {
        cfg.validate()?;
        for (name, mat, rows, cols) in [("A", a, cfg.m, cfg.k), ("B", b, cfg.k, cfg.n)] {
            if mat.dims() != (rows, cols) || mat.precision != cfg.precision {
                return Err(Error::DimensionMismatch {
                    expected: format!("{name} {rows}x{cols} {}", cfg.precision),
                    actual: format!("{name} {}x{} {}", mat.rows, mat.cols, mat.precision),
                });
            }
        }
        let (mp, np, kp) = cfg.padded();
        let mut a_mem = vec![0; mp * kp];
        for i in 0..cfg.m {
            a_mem[i * kp..i * kp + cfg.k].copy_from_slice(&a.data[i * cfg.k..(i + 1) * cfg.k]);
        }
        let mut b_mem = vec![0; np * kp];
        for kk in 0..cfg.k {
            for j in 0..cfg.n {
                b_mem[j * kp + kk] = b.get(kk, j);
            }
        }
        let mut kernel = Kernel {
            cfg,
            layout: Layout::new(&cfg),
            program: Program::build(&cfg),
            dims: (mp, np, kp),
            a_mem,
            b_mem,
            golden_mem: Vec::new(),
            golden: GemmResult {
                c: Matrix::zeros(cfg.m, cfg.n, cfg.precision),
                status: ExecStatus::Completed,
                dynamic_instruction_count: Vec::new(),
                simulated_instructions: 0,
            },
        };
        let mut mem = vec![0; mp * np];
        let golden = kernel.execute_all(&mut mem, None)?;
        if !golden.status.is_completed() {
            return Err(Error::contract(format!("fault-free run ended with {:?}", golden.status)));
        }
        kernel.golden_mem = mem;
        kernel.golden = golden;
        Ok(kernel)
    }

    pub fn config(&self) -> &KernelConfig {
        &self.cfg
    }

    pub fn golden(&self) -> &GemmResult {
        &self.golden
    }

    /// Runs the kernel with an optional fault, reusing golden tiles for all
    /// warps other than the faulted one.
    pub fn run(&self, fault: Option<&FaultDescriptor>) -> Result<GemmResult> {
        let Some(desc) = fault else {
            return Ok(self.golden.clone());
        };
        self.check_fault(desc)?;
        let w = desc.site.warp as usize;
        let mut mem = self.golden_mem.clone();
        for warp in w..self.cfg.num_warps() {
            self.for_tile(warp, |i| mem[i] = 0);
        }
        let (status, count) = self.execute_warp(w, &mut mem, Some(desc))?;
        let mut counts = self.golden.dynamic_instruction_count.clone();
        counts[w] = count;
        if status.is_completed() {
            for warp in w + 1..self.cfg.num_warps() {
                self.for_tile(warp, |i| mem[i] = self.golden_mem[i]);
            }
        } else {
            counts[w + 1..].iter_mut().for_each(|c| *c = 0);
        }
        Ok(GemmResult { c: self.crop(&mem), status, dynamic_instruction_count: counts, simulated_instructions: count })
    }

    /// Runs every warp in launch order; the reference for [`Kernel::run`].
    pub fn run_full(&self, fault: Option<&FaultDescriptor>) -> Result<GemmResult> {
        if let Some(desc) = fault {
            self.check_fault(desc)?;
        }
        let (mp, np, _) = self.dims;
        self.execute_all(&mut vec![0; mp * np], fault)
    }

    fn check_fault(&self, desc: &FaultDescriptor) -> Result<()> {
        desc.check()?;
        if desc.site.kernel != 0 {
            return Err(Error::invalid_site(format!("kernel {} of a single GEMM launch", desc.site.kernel)));
        }
        super::program::resolve_site(&self.cfg, &desc.site).map(|_| ())
    }

    fn execute_all(&self, mem: &mut [u32], fault: Option<&FaultDescriptor>) -> Result<GemmResult> {
        let warps = self.cfg.num_warps();
        let mut counts = vec![0; warps];
        let mut status = ExecStatus::Completed;
        for (w, count) in counts.iter_mut().enumerate() {
            let f = fault.filter(|d| d.site.warp as usize == w);
            let (s, c) = self.execute_warp(w, mem, f)?;
            *count = c;
            if !s.is_completed() {
                status = s;
                break;
            }
        }
        let simulated = counts.iter().sum();
        Ok(GemmResult { c: self.crop(mem), status, dynamic_instruction_count: counts, simulated_instructions: simulated })
    }

    fn tile_origin(&self, warp: usize) -> (usize, usize) {
        let cols = self.cfg.warp_grid().1;
        ((warp / cols) * self.cfg.tile_m, (warp % cols) * self.cfg.tile_n)
    }

    fn for_tile(&self, warp: usize, mut f: impl FnMut(usize)) {
        let (r0, c0) = self.tile_origin(warp);
        let np = self.dims.1;
        for r in r0..r0 + self.cfg.tile_m {
            for c in c0..c0 + self.cfg.tile_n {
                f(r * np + c);
            }
        }
    }

    fn crop(&self, mem: &[u32]) -> Matrix {
        let np = self.dims.1;
        let mut out = Matrix::zeros(self.cfg.m, self.cfg.n, self.cfg.precision);
        for i in 0..self.cfg.m {
            out.data[i * self.cfg.n..(i + 1) * self.cfg.n].copy_from_slice(&mem[i * np..i * np + self.cfg.n]);
        }
        out
    }

    fn load(&self, mem: &[u32], addr: u32) -> core::result::Result<u32, CrashCause> {
        let oob = CrashCause::OutOfBounds { address: addr };
        let (seg, base) = match addr {
            a if a >= C_BASE => (mem, C_BASE),
            a if a >= B_BASE => (&self.b_mem[..], B_BASE),
            a if a >= A_BASE => (&self.a_mem[..], A_BASE),
            _ => return Err(oob),
        };
        seg.get((addr - base) as usize).copied().ok_or(oob)
    }

    fn store(mem: &mut [u32], addr: u32, word: u32) -> core::result::Result<(), CrashCause> {
        let oob = CrashCause::OutOfBounds { address: addr };
        let slot = addr.checked_sub(C_BASE).and_then(|i| mem.get_mut(i as usize)).ok_or(oob)?;
        *slot = word;
        Ok(())
    }

    fn execute_warp(&self, warp: usize, mem: &mut [u32], fault: Option<&FaultDescriptor>) -> Result<(ExecStatus, u64)> {
        let launch = self.layout.all_lanes();
        let mut st = Warp { regs: [[0; reg::COUNT]; WARP_SIZE], active: launch, launch };
        let budget = self.cfg.instruction_budget;
        let mut pc = 0;
        let mut dyn_inst = 0u64;
        loop {
            if dyn_inst >= budget {
                return Ok((ExecStatus::Hang { budget }, dyn_inst));
            }
            let op = self.program.ops[pc];
            let step = match self.step(warp, op, &mut st, mem) {
                Ok(step) => step,
                Err(cause) => return Ok((ExecStatus::Crash(cause), dyn_inst + 1)),
            };
            if let Some(desc) = fault.filter(|d| d.site.dyn_inst == dyn_inst) {
                let (r, _, lanes) = self.layout.dest(op).ok_or_else(|| Error::invalid_site("instruction has no destination"))?;
                let mut words = [Word32::ZERO; WARP_SIZE];
                for (w, regs) in words.iter_mut().zip(&st.regs) {
                    *w = Word32(regs[r]);
                }
                apply_fault_warp(desc, &mut words, lanes & st.active)?;
                for (w, regs) in words.iter().zip(st.regs.iter_mut()) {
                    regs[r] = w.0;
                }
            }
            dyn_inst += 1;
            pc = match step {
                Step::Next => pc + 1,
                Step::Jump(t) => t,
                Step::Exit => return Ok((ExecStatus::Completed, dyn_inst)),
            };
        }
    }

    fn step(&self, warp: usize, op: Op, st: &mut Warp, mem: &mut [u32]) -> core::result::Result<Step, CrashCause> {
        let cfg = &self.cfg;
        let (_, np, kp) = self.dims;
        let (tr, tc) = self.tile_origin(warp);
        let tile_k = cfg.tile_k as u32;
        match op {
            Op::SetAptr | Op::SetBptr | Op::SetCptr => {
                for l in lanes_of(st.active) {
                    let (r, c) = self.layout.lane_origin(l);
                    let (slot, value) = match op {
                        Op::SetAptr => (reg::APTR, A_BASE + ((tr + r) * kp) as u32),
                        Op::SetBptr => (reg::BPTR, B_BASE + ((tc + c) * kp) as u32),
                        _ => (reg::CPTR, C_BASE + ((tr + r) * np + tc + c) as u32),
                    };
                    st.regs[l][slot] = value;
                }
            }
            Op::InitIter => self.each(st, |r| r[reg::ITER] = cfg.loop_iterations() as u32),
            Op::AdvA => self.each(st, |r| r[reg::APTR] = r[reg::APTR].wrapping_add(tile_k)),
            Op::AdvB => self.each(st, |r| r[reg::BPTR] = r[reg::BPTR].wrapping_add(tile_k)),
            Op::DecIter => self.each(st, |r| r[reg::ITER] = r[reg::ITER].wrapping_sub(1)),
            Op::SetPred => self.each(st, |r| r[reg::PRED] = u32::from(r[reg::ITER] != 0)),
            Op::Ffma { u } => {
                for l in lanes_of(st.active) {
                    let r = &mut st.regs[l];
                    let a = self.load(mem, r[reg::APTR].wrapping_add(u32::from(u)))?;
                    let b = self.load(mem, r[reg::BPTR].wrapping_add(u32::from(u)))?;
                    r[reg::ACC] = fma32(a, b, r[reg::ACC], RoundingMode::NearestEven);
                }
            }
            Op::Hfma2 { u } => {
                for l in lanes_of(st.active) {
                    let r = &mut st.regs[l];
                    let a = self.load(mem, r[reg::APTR].wrapping_add(u32::from(u)))? as u16;
                    let b_lo = self.load(mem, r[reg::BPTR].wrapping_add(u32::from(u)))? as u16;
                    let b_hi = self.load(mem, r[reg::BPTR].wrapping_add(kp as u32 + u32::from(u)))? as u16;
                    let (c_lo, c_hi) = unpack_fp16_pair(Word32(r[reg::ACC]));
                    r[reg::ACC] = pack_fp16_pair(
                        fma16(a, b_lo, c_lo, RoundingMode::NearestEven),
                        fma16(a, b_hi, c_hi, RoundingMode::NearestEven),
                    )
                    .0;
                }
            }
            Op::CvtA { sub, q } | Op::CvtB { sub, q } => {
                let base = self.layout.group_base(sub as usize);
                let kk = 4 * u32::from(q);
                let is_a = matches!(op, Op::CvtA { .. });
                for t in 0..8 {
                    let lane = base + t;
                    if st.active & (1 << lane) == 0 {
                        continue;
                    }
                    let mut halves = [0u16; 2];
                    for (h, half) in halves.iter_mut().enumerate() {
                        let f = 2 * t + h;
                        let src = &st.regs[base + f];
                        let word = if is_a {
                            self.load(mem, src[reg::APTR].wrapping_add(kk + (f % 4) as u32))?
                        } else {
                            self.load(mem, src[reg::BPTR].wrapping_add(kk + (f / 4) as u32))?
                        };
                        *half = f32_to_f16(word, RoundingMode::NearestEven);
                    }
                    let slot = if is_a { reg::FRAG_A } else { reg::FRAG_B };
                    st.regs[lane][slot] = pack_fp16_pair(halves[0], halves[1]).0;
                }
            }
            Op::Hmma { sub, q } => self.hmma(sub as usize, u32::from(q), st, mem)?,
            Op::Bra => {
                let taken = lanes_of(st.active).filter(|&l| st.regs[l][reg::PRED] != 0).fold(0u32, |m, l| m | 1 << l);
                if taken != 0 {
                    st.active = taken;
                    return Ok(Step::Jump(self.program.loop_start));
                }
                st.active = st.launch;
            }
            Op::Store => {
                for l in lanes_of(st.active) {
                    let r = st.regs[l];
                    match cfg.precision {
                        Precision::Fp32 => Self::store(mem, r[reg::CPTR], r[reg::ACC])?,
                        Precision::Fp16 => {
                            let (lo, hi) = unpack_fp16_pair(Word32(r[reg::ACC]));
                            Self::store(mem, r[reg::CPTR], u32::from(lo))?;
                            Self::store(mem, r[reg::CPTR].wrapping_add(1), u32::from(hi))?;
                        }
                    }
                }
                return Ok(Step::Exit);
            }
        }
        Ok(Step::Next)
    }

    fn each(&self, st: &mut Warp, f: impl Fn(&mut [u32; reg::COUNT])) {
        for l in 0..WARP_SIZE {
            if st.active & (1 << l) != 0 {
                f(&mut st.regs[l]);
            }
        }
    }

    fn hmma(&self, sub: usize, q: u32, st: &mut Warp, mem: &[u32]) -> core::result::Result<(), CrashCause> {
        let layout = &self.layout;
        let mask = layout.group_mask(sub);
        if st.active & mask != mask {
            return Err(CrashCause::DivergentMma);
        }
        let kp = self.dims.2 as u32;
        let epl = layout.epl;
        let kk = 4 * q;
        let base = layout.group_base(sub);
        let mut a = Tile4x4::zero(Precision::Fp16);
        let mut b = Tile4x4::zero(Precision::Fp16);
        for i in 0..4 {
            for c in 0..4 {
                let (ea, eb) = (i * 4 + c, i * 4 + c);
                match self.cfg.precision {
                    Precision::Fp16 => {
                        let la = layout.subtile_lane(sub, ea);
                        a.set(i, c, self.load(mem, st.regs[la][reg::APTR].wrapping_add(kk + c as u32))? & 0xFFFF);
                        // B(i, c): reduction index i, column c
                        let lb = layout.subtile_lane(sub, eb);
                        let addr = st.regs[lb][reg::BPTR].wrapping_add((c % epl) as u32 * kp + kk + i as u32);
                        b.set(i, c, self.load(mem, addr)? & 0xFFFF);
                    }
                    Precision::Fp32 => {
                        let (fa, fb) = (st.regs[base + ea / 2][reg::FRAG_A], st.regs[base + eb / 2][reg::FRAG_B]);
                        let half = |w: u32, e: usize| if e.is_multiple_of(2) { w & 0xFFFF } else { w >> 16 };
                        a.set(i, c, half(fa, ea));
                        b.set(i, c, half(fb, eb));
                    }
                }
            }
        }
        let prec = self.cfg.precision;
        let mut acc = Tile4x4::zero(prec);
        for e in 0..16 {
            let w = st.regs[layout.subtile_lane(sub, e)][reg::ACC];
            acc.words[e] = match prec {
                Precision::Fp32 => w,
                Precision::Fp16 if e % 2 == 0 => w & 0xFFFF,
                Precision::Fp16 => w >> 16,
            };
        }
        let d = mma_4x4(&a, &b, &acc, prec);
        for lane_off in 0..16 / epl {
            let lane = base + lane_off;
            st.regs[lane][reg::ACC] = match prec {
                Precision::Fp32 => d.words[lane_off],
                Precision::Fp16 => pack_fp16_pair(d.words[2 * lane_off] as u16, d.words[2 * lane_off + 1] as u16).0,
            };
        }
        Ok(())
    }
}

/// One-shot GEMM: builds the kernel (golden run) and executes it with `fault`.
pub fn run_gemm(a: &Matrix, b: &Matrix, cfg: KernelConfig, fault: Option<&FaultDescriptor>) -> Result<GemmResult> {
    let kernel = Kernel::new(a, b, cfg)?;
    kernel.run(fault)
}
