//! Campaign configuration files (TOML).
//!
//! ```toml
//! [target]
//! kind = "gemm"                 # or "network"
//! algorithm = "software"        # or "tensor-core"
//! precision = "fp32"            # or "fp16"
//! m = 256
//! n = 256
//! k = 256
//! input_seed = 7                # operands drawn uniformly from [-1, 1)
//! # a = "a.wfmx"                # or explicit matrix dumps
//! # b = "b.wfmx"
//!
//! # kind = "network" instead takes
//! # network = "assets/reference.wfnn"
//! # frames = ["assets/frames/frame_00.wfmx", ...]
//!
//! [faults]
//! classes = ["arithmetic"]      # arithmetic, loop-counter, address, predicate
//! opcodes = []                  # optional opcode filter, e.g. ["hfma2"]
//! storage = "default"           # or protected-register / unprotected-datapath
//!
//! [faults.mix]
//! single-bit-flip = 644
//! warp-random-value = 644
//!
//! [campaign]
//! master_seed = 2021
//! ecc = "off"                   # or "sec-ded"
//! workers = 8                   # optional; never affects results
//!
//! [thresholds]
//! square_density = 0.5
//! conf_threshold = 0.6
//! nms_iou = 0.5
//! match_iou = 0.5
//! tolerable_iou = 0.8
//!
//! [fit]                         # optional
//! fluence = 1e10
//! reference_flux = 13.0
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use warpfi_core::analysis::{FitParams, DEFAULT_SQUARE_DENSITY, SEA_LEVEL_FLUX};
use warpfi_core::experiment::Thresholds;
use warpfi_core::fault::{EccMode, FaultModel, StorageClass};
use warpfi_core::nn::{DecodeParams, MatchParams};
use warpfi_core::numerics::Precision;
use warpfi_core::simt::{Algorithm, Opcode, RegClass};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub target: TargetConfig,
    pub faults: FaultConfig,
    #[serde(default)]
    pub campaign: RunConfig,
    #[serde(default)]
    pub thresholds: ThresholdConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetConfig {
    Gemm {
        algorithm: String,
        precision: String,
        m: usize,
        n: usize,
        k: usize,
        #[serde(default)]
        input_seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        b: Option<PathBuf>,
    },
    Network {
        #[serde(default = "default_algorithm")]
        algorithm: String,
        precision: String,
        network: PathBuf,
        frames: Vec<PathBuf>,
    },
}

fn default_algorithm() -> String {
    Algorithm::SoftwareGemm.name().to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultConfig {
    #[serde(default = "default_classes")]
    pub classes: Vec<String>,
    #[serde(default)]
    pub opcodes: Vec<String>,
    #[serde(default = "default_storage")]
    pub storage: String,
    pub mix: BTreeMap<String, u64>,
}

fn default_classes() -> Vec<String> {
    vec![RegClass::ArithmeticDest.name().to_string()]
}

fn default_storage() -> String {
    "default".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_ecc")]
    pub ecc: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn default_ecc() -> String {
    EccMode::Off.name().to_string()
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { master_seed: 0, ecc: default_ecc(), workers: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdConfig {
    pub square_density: f64,
    pub conf_threshold: f64,
    pub nms_iou: f64,
    pub match_iou: f64,
    pub tolerable_iou: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        let decode = DecodeParams::default();
        let matching = MatchParams::default();
        ThresholdConfig {
            square_density: DEFAULT_SQUARE_DENSITY,
            conf_threshold: decode.conf_threshold,
            nms_iou: decode.nms_iou,
            match_iou: matching.match_iou,
            tolerable_iou: matching.tolerable_iou,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub fluence: f64,
    #[serde(default = "default_flux")]
    pub reference_flux: f64,
}

fn default_flux() -> f64 {
    SEA_LEVEL_FLUX
}

/// Which per-injection storage class to stamp on sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageChoice {
    /// Each model's own default.
    PerModel,
    Fixed(StorageClass),
}

impl StorageChoice {
    pub fn for_model(self, model: FaultModel) -> StorageClass {
        match self {
            StorageChoice::PerModel => model.default_storage(),
            StorageChoice::Fixed(s) => s,
        }
    }
}

/// A config with every name resolved to its typed value.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub target: ResolvedTarget,
    /// Models in canonical order with their injection counts (zero counts dropped).
    pub mix: Vec<(FaultModel, u64)>,
    pub classes: Vec<RegClass>,
    pub opcodes: Vec<Opcode>,
    pub storage: StorageChoice,
    pub ecc: EccMode,
    pub master_seed: u64,
    pub thresholds: Thresholds,
    pub decode: DecodeParams,
    pub fit: Option<FitParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResolvedTarget {
    Gemm { algorithm: Algorithm, precision: Precision, m: usize, n: usize, k: usize, input_seed: u64, a: Option<PathBuf>, b: Option<PathBuf> },
    Network { algorithm: Algorithm, precision: Precision, network: PathBuf, frames: Vec<PathBuf> },
}

impl Resolved {
    pub fn total_injections(&self) -> u64 {
        self.mix.iter().map(|(_, n)| n).sum()
    }
}

fn lookup<T>(what: &str, name: &str, f: impl Fn(&str) -> Option<T>) -> Result<T> {
    f(name).ok_or_else(|| Error::config(format!("unknown {what} {name:?}")))
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v <= 1.0) {
        return Err(Error::config(format!("thresholds.{name} must be in (0, 1], got {v}")));
    }
    Ok(())
}

fn check_file(p: &Path) -> Result<()> {
    if !p.is_file() {
        return Err(Error::config(format!("referenced file {} does not exist", p.display())));
    }
    Ok(())
}

impl CampaignConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    /// Parses a config file and makes its relative paths absolute.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let base = std::path::absolute(base).map_err(|e| Error::io(base, e))?;
        cfg.rebase(&base);
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.target {
            TargetConfig::Gemm { a, b, .. } => {
                a.as_mut().map(fix);
                b.as_mut().map(fix);
            }
            TargetConfig::Network { network, frames, .. } => {
                fix(network);
                frames.iter_mut().for_each(fix);
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every field, including that referenced files exist.
    pub fn resolve(&self) -> Result<Resolved> {
        self.resolve_with(true)
    }

    /// As [`resolve`](Self::resolve) without touching the filesystem, for
    /// reading logs whose inputs may have moved.
    pub fn resolve_names(&self) -> Result<Resolved> {
        self.resolve_with(false)
    }

    fn resolve_with(&self, check_files: bool) -> Result<Resolved> {
        let target = match &self.target {
            TargetConfig::Gemm { algorithm, precision, m, n, k, input_seed, a, b } => {
                if *m == 0 || *n == 0 || *k == 0 {
                    return Err(Error::config("GEMM dimensions must be nonzero"));
                }
                if a.is_some() != b.is_some() {
                    return Err(Error::config("give both `a` and `b` operand files or neither"));
                }
                for p in a.iter().chain(b).filter(|_| check_files) {
                    check_file(p)?;
                }
                ResolvedTarget::Gemm {
                    algorithm: lookup("algorithm", algorithm, Algorithm::from_name)?,
                    precision: lookup("precision", precision, Precision::from_name)?,
                    m: *m,
                    n: *n,
                    k: *k,
                    input_seed: *input_seed,
                    a: a.clone(),
                    b: b.clone(),
                }
            }
            TargetConfig::Network { algorithm, precision, network, frames } => {
                if frames.is_empty() {
                    return Err(Error::config("network target needs at least one frame"));
                }
                for p in std::iter::once(network).chain(frames).filter(|_| check_files) {
                    check_file(p)?;
                }
                ResolvedTarget::Network {
                    algorithm: lookup("algorithm", algorithm, Algorithm::from_name)?,
                    precision: lookup("precision", precision, Precision::from_name)?,
                    network: network.clone(),
                    frames: frames.clone(),
                }
            }
        };

        let mut mix = Vec::new();
        for (name, &count) in &self.faults.mix {
            let model = lookup("fault model", name, FaultModel::from_name)?;
            if count > 0 {
                mix.push((model, count));
            }
        }
        mix.sort();
        if mix.is_empty() {
            return Err(Error::config("fault mix has no injections"));
        }

        let classes = self
            .faults
            .classes
            .iter()
            .map(|c| lookup("register class", c, RegClass::from_name))
            .collect::<Result<Vec<_>>>()?;
        if classes.is_empty() {
            return Err(Error::config("faults.classes is empty"));
        }
        let opcodes = self.faults.opcodes.iter().map(|o| lookup("opcode", o, Opcode::from_name)).collect::<Result<Vec<_>>>()?;
        let storage = match self.faults.storage.as_str() {
            "default" => StorageChoice::PerModel,
            s => StorageChoice::Fixed(lookup("storage class", s, StorageClass::from_name)?),
        };

        let t = &self.thresholds;
        check_unit("square_density", t.square_density)?;
        check_unit("conf_threshold", t.conf_threshold)?;
        check_unit("nms_iou", t.nms_iou)?;
        check_unit("match_iou", t.match_iou)?;
        check_unit("tolerable_iou", t.tolerable_iou)?;
        if self.campaign.workers == Some(0) {
            return Err(Error::config("campaign.workers must be positive"));
        }
        let fit = match &self.fit {
            Some(f) => Some(FitParams::new(f.fluence, f.reference_flux).map_err(|e| Error::config(e.to_string()))?),
            None => None,
        };

        Ok(Resolved {
            target,
            mix,
            classes,
            opcodes,
            storage,
            ecc: lookup("ecc mode", &self.campaign.ecc, EccMode::from_name)?,
            master_seed: self.campaign.master_seed,
            thresholds: Thresholds {
                square_density: t.square_density,
                matching: MatchParams { match_iou: t.match_iou, tolerable_iou: t.tolerable_iou },
            },
            decode: DecodeParams { conf_threshold: t.conf_threshold, nms_iou: t.nms_iou },
            fit,
        })
    }

    /// The config as recorded in logs: worker count dropped, since it never
    /// changes results.
    pub fn canonical(&self) -> CampaignConfig {
        let mut c = self.clone();
        c.campaign.workers = None;
        c
    }
}
