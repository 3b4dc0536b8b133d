//! Fault models, site sampling, register mutation and the behavioral ECC filter.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use rand_core::RngCore;

use crate::error::{Error, Result};
use crate::numerics::{flip_bits, Word32};
use crate::rng::{below, rng_from_seed, split};
use crate::simt::{RegClass, TraceEntry, TraceProfile, WARP_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FaultModel {
    SingleBitFlip,
    DoubleBitFlip,
    SingleRandomValue,
    WarpRandomValue,
    WarpZeroValue,
}

impl FaultModel {
    pub const ALL: [FaultModel; 5] = [
        FaultModel::SingleBitFlip,
        FaultModel::DoubleBitFlip,
        FaultModel::SingleRandomValue,
        FaultModel::WarpRandomValue,
        FaultModel::WarpZeroValue,
    ];

    pub const fn name(self) -> &'static str {
        match self {
            FaultModel::SingleBitFlip => "single-bit-flip",
            FaultModel::DoubleBitFlip => "double-bit-flip",
            FaultModel::SingleRandomValue => "single-random-value",
            FaultModel::WarpRandomValue => "warp-random-value",
            FaultModel::WarpZeroValue => "warp-zero-value",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Stable tag used when deriving per-injection seeds.
    pub const fn tag(self) -> u64 {
        match self {
            FaultModel::SingleBitFlip => 1,
            FaultModel::DoubleBitFlip => 2,
            FaultModel::SingleRandomValue => 3,
            FaultModel::WarpRandomValue => 4,
            FaultModel::WarpZeroValue => 5,
        }
    }

    pub const fn is_warp_wide(self) -> bool {
        matches!(self, FaultModel::WarpRandomValue | FaultModel::WarpZeroValue)
    }

    pub const fn default_storage(self) -> StorageClass {
        match self {
            FaultModel::SingleBitFlip | FaultModel::DoubleBitFlip => StorageClass::ProtectedRegister,
            _ => StorageClass::UnprotectedDatapath,
        }
    }
}

impl fmt::Display for FaultModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StorageClass {
    ProtectedRegister,
    UnprotectedDatapath,
}

impl StorageClass {
    pub const fn name(self) -> &'static str {
        match self {
            StorageClass::ProtectedRegister => "protected-register",
            StorageClass::UnprotectedDatapath => "unprotected-datapath",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [StorageClass::ProtectedRegister, StorageClass::UnprotectedDatapath]
            .into_iter()
            .find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Lane {
    One(u8),
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FaultSite {
    /// Kernel launch within the target (layer index for networks).
    pub kernel: u32,
    pub warp: u32,
    pub lane: Lane,
    pub dyn_inst: u64,
    pub reg_class: RegClass,
    pub storage: StorageClass,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Payload {
    Bits(Vec<u8>),
    /// One word for single-lane models, `WARP_SIZE` words indexed by lane otherwise.
    Words(Vec<Word32>),
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FaultDescriptor {
    pub model: FaultModel,
    pub site: FaultSite,
    pub payload: Payload,
    pub seed: u64,
}

const PAYLOAD_TAG: u64 = 0x70_6179_6c6f_6164;

impl FaultDescriptor {
    /// Builds the descriptor with its payload drawn from `seed`.
    pub fn new(model: FaultModel, site: FaultSite, seed: u64) -> Result<Self> {
        let desc = FaultDescriptor { model, site, payload: generate_payload(model, seed), seed };
        desc.check()?;
        Ok(desc)
    }

    /// Checks model/lane/payload agreement.
    pub fn check(&self) -> Result<()> {
        if self.model.is_warp_wide() != (self.site.lane == Lane::All) {
            return Err(Error::contract(format!("{} needs lane {}", self.model, if self.model.is_warp_wide() { "ALL" } else { "index" })));
        }
        if let Lane::One(l) = self.site.lane {
            if l as usize >= WARP_SIZE {
                return Err(Error::contract(format!("lane {l} out of range")));
            }
        }
        let ok = match (&self.payload, self.model) {
            (Payload::Bits(b), FaultModel::SingleBitFlip) => b.len() == 1 && b[0] < 32,
            (Payload::Bits(b), FaultModel::DoubleBitFlip) => b.len() == 2 && b[0] != b[1] && b.iter().all(|&i| i < 32),
            (Payload::Words(w), FaultModel::SingleRandomValue) => w.len() == 1,
            (Payload::Words(w), FaultModel::WarpRandomValue) => w.len() == WARP_SIZE,
            (Payload::None, FaultModel::WarpZeroValue) => true,
            _ => false,
        };
        if !ok {
            return Err(Error::contract(format!("payload does not match {}", self.model)));
        }
        Ok(())
    }
}

/// Draws the mutation payload of `model` from `seed`.
pub fn generate_payload(model: FaultModel, seed: u64) -> Payload {
    let mut rng = rng_from_seed(split(seed, PAYLOAD_TAG, 0));
    match model {
        FaultModel::SingleBitFlip => Payload::Bits(alloc::vec![below(&mut rng, 32) as u8]),
        FaultModel::DoubleBitFlip => {
            let first = below(&mut rng, 32) as u8;
            let second = (first + 1 + below(&mut rng, 31) as u8) % 32;
            Payload::Bits(alloc::vec![first, second])
        }
        FaultModel::SingleRandomValue => Payload::Words(alloc::vec![Word32(rng.next_u32())]),
        FaultModel::WarpRandomValue => Payload::Words((0..WARP_SIZE).map(|_| Word32(rng.next_u32())).collect()),
        FaultModel::WarpZeroValue => Payload::None,
    }
}

/// Mutated register word of `lane`; `clean` is the value just written.
pub fn apply_fault(desc: &FaultDescriptor, lane: usize, clean: Word32) -> Result<Word32> {
    match (&desc.payload, desc.model) {
        (Payload::Bits(bits), FaultModel::SingleBitFlip | FaultModel::DoubleBitFlip) => flip_bits(clean, bits),
        (Payload::Words(w), FaultModel::SingleRandomValue) if w.len() == 1 => Ok(w[0]),
        (Payload::Words(w), FaultModel::WarpRandomValue) if lane < w.len() => Ok(w[lane]),
        (Payload::None, FaultModel::WarpZeroValue) => Ok(Word32::ZERO),
        _ => Err(Error::contract(format!("payload does not match {}", desc.model))),
    }
}

/// Applies the fault to every active destination lane of a warp register.
pub fn apply_fault_warp(desc: &FaultDescriptor, words: &mut [Word32; WARP_SIZE], active: u32) -> Result<()> {
    let lanes = match desc.site.lane {
        Lane::One(l) => (1u32 << l) & active,
        Lane::All => active,
    };
    for (lane, w) in words.iter_mut().enumerate() {
        if lanes & (1 << lane) != 0 {
            *w = apply_fault(desc, lane, *w)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum EccMode {
    #[default]
    Off,
    SecDed,
}

impl EccMode {
    pub const fn name(self) -> &'static str {
        match self {
            EccMode::Off => "off",
            EccMode::SecDed => "sec-ded",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [EccMode::Off, EccMode::SecDed].into_iter().find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EccVerdict {
    Pass,
    Corrected,
    DueDoubleBit,
}

pub fn ecc_filter(site: &FaultSite, model: FaultModel, mode: EccMode) -> EccVerdict {
    match (mode, site.storage, model) {
        (EccMode::SecDed, StorageClass::ProtectedRegister, FaultModel::SingleBitFlip) => EccVerdict::Corrected,
        (EccMode::SecDed, StorageClass::ProtectedRegister, FaultModel::DoubleBitFlip) => EccVerdict::DueDoubleBit,
        _ => EccVerdict::Pass,
    }
}

/// Samples a site uniformly over (kernel, warp, lane, instruction) tuples of
/// the target register classes.
pub fn sample_site(
    seed: u64,
    profile: &TraceProfile,
    model: FaultModel,
    target_classes: &[RegClass],
    storage: StorageClass,
) -> Result<FaultSite> {
    sample_site_where(seed, profile, model, storage, |e| e.class.is_some_and(|c| target_classes.contains(&c)))
}

/// As [`sample_site`] with an arbitrary instruction filter.
pub fn sample_site_where(
    seed: u64,
    profile: &TraceProfile,
    model: FaultModel,
    storage: StorageClass,
    filter: impl Fn(&TraceEntry) -> bool,
) -> Result<FaultSite> {
    let weight = |e: &TraceEntry| -> u64 {
        if e.lanes == 0 || e.class.is_none() || !filter(e) {
            0
        } else if model.is_warp_wide() {
            1
        } else {
            u64::from(e.lanes.count_ones())
        }
    };
    let per_warp: Vec<u64> = profile.kernels.iter().map(|k| k.entries.iter().map(weight).sum()).collect();
    let total: u64 = profile.kernels.iter().zip(&per_warp).map(|(k, w)| k.warps as u64 * w).sum();
    if total == 0 {
        return Err(Error::NoSites);
    }
    let mut rng = rng_from_seed(seed);
    let mut r = below(&mut rng, total);
    for (ki, (kernel, &w)) in profile.kernels.iter().zip(&per_warp).enumerate() {
        let block = kernel.warps as u64 * w;
        if r >= block {
            r -= block;
            continue;
        }
        let warp = r / w;
        r %= w;
        for (dyn_inst, e) in kernel.entries.iter().enumerate() {
            let ew = weight(e);
            if r >= ew {
                r -= ew;
                continue;
            }
            let lane = if model.is_warp_wide() {
                Lane::All
            } else {
                let mut lanes = e.lanes;
                for _ in 0..r {
                    lanes &= lanes - 1;
                }
                Lane::One(lanes.trailing_zeros() as u8)
            };
            return Ok(FaultSite {
                kernel: ki as u32,
                warp: warp as u32,
                lane,
                dyn_inst: dyn_inst as u64,
                reg_class: e.class.expect("weighted entries have a class"),
                storage,
            });
        }
    }
    unreachable!("sample index within total weight")
}
