//! JSON-lines campaign log.
//!
//! The first line is a [`LogHeader`]; every following line is one
//! [`LogRecord`]. Bit-flip payloads are written as one mask word per flipped
//! bit, value payloads as the raw replacement words, all as 8-digit hex.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use warpfi_core::analysis::{CriticalKind, Criticality, DueReason, GeometryClass, Outcome};
use warpfi_core::fault::{FaultDescriptor, FaultModel, FaultSite, Lane, Payload, StorageClass};
use warpfi_core::numerics::Word32;
use warpfi_core::simt::RegClass;

use crate::config::CampaignConfig;
use crate::error::{Error, Result};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogHeader {
    pub tool: String,
    pub version: String,
    /// SHA-256 of the canonical config as compact JSON.
    pub config_hash: String,
    pub config: CampaignConfig,
}

impl LogHeader {
    pub fn new(config: &CampaignConfig) -> Self {
        let config = config.canonical();
        LogHeader { tool: TOOL.into(), version: TOOL_VERSION.into(), config_hash: config_hash(&config), config }
    }

    /// Rejects logs from another tool version or with an edited config.
    pub fn check(&self) -> Result<()> {
        if self.tool != TOOL || self.version != TOOL_VERSION {
            return Err(Error::Incompatible {
                found: format!("{} {}", self.tool, self.version),
                expected: format!("{TOOL} {TOOL_VERSION}"),
            });
        }
        if config_hash(&self.config) != self.config_hash {
            return Err(Error::Log("config does not match its recorded hash".into()));
        }
        Ok(())
    }
}

pub fn config_hash(config: &CampaignConfig) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    let digest = Sha256::digest(&json);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Serialized [`FaultDescriptor`], the unit of replay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriptorRecord {
    pub model: String,
    pub kernel: u32,
    pub warp: u32,
    /// Lane index, or `"all"` for warp-wide models.
    pub lane: LaneRecord,
    pub dyn_inst: u64,
    pub reg_class: String,
    pub storage_class: String,
    pub payload_hex: Vec<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LaneRecord {
    One(u8),
    All(AllLanes),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllLanes {
    All,
}

impl From<&FaultDescriptor> for DescriptorRecord {
    fn from(d: &FaultDescriptor) -> Self {
        let payload_hex = match &d.payload {
            Payload::Bits(bits) => bits.iter().map(|b| format!("{:08x}", 1u32 << b)).collect(),
            Payload::Words(words) => words.iter().map(|w| format!("{:08x}", w.0)).collect(),
            Payload::None => Vec::new(),
        };
        DescriptorRecord {
            model: d.model.name().into(),
            kernel: d.site.kernel,
            warp: d.site.warp,
            lane: match d.site.lane {
                Lane::One(l) => LaneRecord::One(l),
                Lane::All => LaneRecord::All(AllLanes::All),
            },
            dyn_inst: d.site.dyn_inst,
            reg_class: d.site.reg_class.name().into(),
            storage_class: d.site.storage.name().into(),
            payload_hex,
            seed: d.seed,
        }
    }
}

fn parse_word(s: &str) -> Result<u32> {
    if s.len() != 8 {
        return Err(Error::format("descriptor", format!("payload word {s:?} is not 8 hex digits")));
    }
    u32::from_str_radix(s, 16).map_err(|_| Error::format("descriptor", format!("payload word {s:?} is not hex")))
}

impl DescriptorRecord {
    pub fn to_descriptor(&self) -> Result<FaultDescriptor> {
        let bad = |what: &str, v: &str| Error::format("descriptor", format!("unknown {what} {v:?}"));
        let model = FaultModel::from_name(&self.model).ok_or_else(|| bad("model", &self.model))?;
        let words = self.payload_hex.iter().map(|s| parse_word(s)).collect::<Result<Vec<_>>>()?;
        let payload = match model {
            FaultModel::SingleBitFlip | FaultModel::DoubleBitFlip => {
                let bits = words
                    .iter()
                    .map(|w| match w.count_ones() {
                        1 => Ok(w.trailing_zeros() as u8),
                        _ => Err(Error::format("descriptor", format!("bit-flip mask {w:08x} must have one bit set"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Payload::Bits(bits)
            }
            FaultModel::SingleRandomValue | FaultModel::WarpRandomValue => Payload::Words(words.into_iter().map(Word32).collect()),
            FaultModel::WarpZeroValue if words.is_empty() => Payload::None,
            FaultModel::WarpZeroValue => return Err(Error::format("descriptor", "warp-zero-value takes no payload")),
        };
        let desc = FaultDescriptor {
            model,
            site: FaultSite {
                kernel: self.kernel,
                warp: self.warp,
                lane: match self.lane {
                    LaneRecord::One(l) => Lane::One(l),
                    LaneRecord::All(_) => Lane::All,
                },
                dyn_inst: self.dyn_inst,
                reg_class: RegClass::from_name(&self.reg_class).ok_or_else(|| bad("register class", &self.reg_class))?,
                storage: StorageClass::from_name(&self.storage_class).ok_or_else(|| bad("storage class", &self.storage_class))?,
            },
            payload,
            seed: self.seed,
        };
        desc.check().map_err(|e| Error::format("descriptor", e.to_string()))?;
        Ok(desc)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OutcomeRecord {
    Masked,
    Sdc {
        geometry: String,
        /// `tolerable` or a critical kind; absent for plain GEMM targets.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        criticality: Option<String>,
    },
    Due {
        reason: String,
    },
    /// The injection itself failed; kept so no record is ever lost.
    Anomaly {
        message: String,
    },
}

impl From<&Outcome> for OutcomeRecord {
    fn from(o: &Outcome) -> Self {
        match o {
            Outcome::Masked => OutcomeRecord::Masked,
            Outcome::Sdc { geometry, criticality } => OutcomeRecord::Sdc {
                geometry: geometry.name().into(),
                criticality: criticality.map(|c| match c {
                    Criticality::Tolerable => "tolerable".into(),
                    Criticality::Critical(k) => k.name().into(),
                }),
            },
            Outcome::Due(r) => OutcomeRecord::Due { reason: r.name().into() },
        }
    }
}

impl OutcomeRecord {
    /// `None` for anomalies.
    pub fn to_outcome(&self) -> Result<Option<Outcome>> {
        let bad = |what: &str, v: &str| Error::format("outcome", format!("unknown {what} {v:?}"));
        Ok(Some(match self {
            OutcomeRecord::Masked => Outcome::Masked,
            OutcomeRecord::Sdc { geometry, criticality } => Outcome::Sdc {
                geometry: GeometryClass::from_name(geometry).ok_or_else(|| bad("geometry", geometry))?,
                criticality: match criticality.as_deref() {
                    None => None,
                    Some("tolerable") => Some(Criticality::Tolerable),
                    Some(k) => Some(Criticality::Critical(CriticalKind::from_name(k).ok_or_else(|| bad("criticality", k))?)),
                },
            },
            OutcomeRecord::Due { reason } => Outcome::Due(DueReason::from_name(reason).ok_or_else(|| bad("DUE reason", reason))?),
            OutcomeRecord::Anomaly { .. } => return Ok(None),
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    /// Warp instructions interpreted; deterministic, unlike wall time.
    pub simulated_instructions: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRecord {
    /// Position in the campaign plan.
    pub index: u64,
    /// Absent only when the descriptor itself could not be drawn.
    pub descriptor: Option<DescriptorRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<usize>,
    pub outcome: OutcomeRecord,
    pub timing: Timing,
}

impl LogRecord {
    pub fn is_anomaly(&self) -> bool {
        matches!(self.outcome, OutcomeRecord::Anomaly { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignLog {
    pub header: LogHeader,
    pub records: Vec<LogRecord>,
}

impl CampaignLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses a log. A final line without its newline is an interrupted
    /// write and is dropped; any other damage is an error.
    pub fn parse(text: &str) -> Result<Self> {
        let complete = match text.rfind('\n') {
            Some(i) => &text[..=i],
            None => "",
        };
        let mut lines = complete.lines();
        let header_line = lines.next().ok_or_else(|| Error::Log("empty log".into()))?;
        let header: LogHeader = serde_json::from_str(header_line).map_err(|e| Error::Log(format!("header: {e}")))?;
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let r: LogRecord = serde_json::from_str(line).map_err(|e| Error::Log(format!("line {}: {e}", i + 2)))?;
            records.push(r);
        }
        Ok(CampaignLog { header, records })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn record(&self, index: u64) -> Result<&LogRecord> {
        self.records
            .iter()
            .find(|r| r.index == index)
            .ok_or_else(|| Error::Log(format!("no record {index}")))
    }

    /// Records keyed by index; duplicates are an error.
    pub fn by_index(&self) -> Result<BTreeMap<u64, &LogRecord>> {
        let mut map = BTreeMap::new();
        for r in &self.records {
            if map.insert(r.index, r).is_some() {
                return Err(Error::Log(format!("record {} appears twice", r.index)));
            }
        }
        Ok(map)
    }
}

/// Append-only writer that flushes every record.
pub struct LogWriter {
    file: File,
    path: std::path::PathBuf,
}

impl LogWriter {
    pub fn create(path: &Path, header: &LogHeader) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = LogWriter { file, path: path.to_path_buf() };
        w.line(&serde_json::to_string(header)?)?;
        Ok(w)
    }

    /// Reopens a log for appending, discarding an unterminated last line.
    pub fn append(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let keep = text.rfind('\n').map_or(0, |i| i + 1);
        let file = std::fs::OpenOptions::new().write(true).open(path).map_err(|e| Error::io(path, e))?;
        file.set_len(keep as u64).map_err(|e| Error::io(path, e))?;
        let mut w = LogWriter { file, path: path.to_path_buf() };
        use std::io::Seek;
        w.file.seek(std::io::SeekFrom::End(0)).map_err(|e| Error::io(path, e))?;
        Ok(w)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        let path = &self.path;
        self.file
            .write_all(s.as_bytes())
            .and_then(|_| self.file.write_all(b"\n"))
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn write(&mut self, r: &LogRecord) -> Result<()> {
        self.line(&serde_json::to_string(r)?)
    }
}

/// Reads only the header line of a log.
pub fn read_header(path: &Path) -> Result<LogHeader> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut line = String::new();
    BufReader::new(file).read_line(&mut line).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(line.trim_end()).map_err(|e| Error::Log(format!("header: {e}")))
}
