//! Parallel campaign execution, resume and replay.
//!
//! Injection `i` of model `m` draws everything from
//! `split(master_seed, m.tag(), i)`, so a record depends only on the config
//! and its own position, never on scheduling.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use rayon::prelude::*;
use warpfi_core::analysis::{CampaignStats, Outcome};
use warpfi_core::fault::{generate_payload, FaultModel};

use crate::config::{CampaignConfig, Resolved};
use crate::error::{Error, Result};
use crate::log::{CampaignLog, DescriptorRecord, LogHeader, LogRecord, LogWriter, OutcomeRecord, Timing};
use crate::target::{Prepared, Target};

pub const LOG_FILE: &str = "campaign.jsonl";
pub const STATS_FILE: &str = "stats.json";

/// Global record index → (model, per-model index), models in canonical order.
pub fn plan(cfg: &Resolved) -> Vec<(FaultModel, u64)> {
    cfg.mix.iter().flat_map(|&(m, n)| (0..n).map(move |i| (m, i))).collect()
}

fn run_one(prepared: &Prepared<'_>, index: u64, model: FaultModel, i: u64) -> LogRecord {
    let anomaly = |descriptor, frame, e: Error| LogRecord {
        index,
        descriptor,
        frame,
        outcome: OutcomeRecord::Anomaly { message: e.to_string() },
        timing: Timing { simulated_instructions: 0 },
    };
    let (desc, frame) = match prepared.draw(model, i) {
        Ok(d) => d,
        Err(e) => return anomaly(None, None, e),
    };
    let descriptor = Some(DescriptorRecord::from(&desc));
    match prepared.evaluate(&desc, frame) {
        Ok(eval) => LogRecord {
            index,
            descriptor,
            frame,
            outcome: OutcomeRecord::from(&eval.outcome),
            timing: Timing { simulated_instructions: eval.simulated_instructions },
        },
        Err(e) => anomaly(descriptor, frame, e),
    }
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w);
    }
    b.build().map_err(|e| Error::config(format!("worker pool: {e}")))
}

/// Runs the injections at `indices`, handing each finished record to `sink`
/// on the calling thread.
fn execute(
    prepared: &Prepared<'_>,
    indices: &[u64],
    workers: Option<usize>,
    mut sink: impl FnMut(LogRecord) -> Result<()>,
) -> Result<()> {
    let plan = plan(prepared.config());
    let pool = pool(workers)?;
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|s| {
        s.spawn(|| {
            pool.install(|| {
                indices.par_iter().for_each_with(tx, |tx, &idx| {
                    let (model, i) = plan[idx as usize];
                    // The receiver only disappears after a sink error.
                    let _ = tx.send(run_one(prepared, idx, model, i));
                });
            })
        });
        let mut result = Ok(());
        for record in rx {
            if result.is_ok() {
                result = sink(record);
            }
        }
        result
    })
}

/// Per-model statistics plus the count of anomalous records.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Summary {
    pub per_model: BTreeMap<FaultModel, CampaignStats>,
    pub anomalies: u64,
}

impl Summary {
    pub fn from_log(log: &CampaignLog) -> Result<Self> {
        let cfg = log.header.config.resolve_names()?;
        let plan = plan(&cfg);
        let mut s = Summary::default();
        for &(m, _) in &cfg.mix {
            s.per_model.insert(m, CampaignStats::default());
        }
        for r in &log.records {
            let Some(&(model, _)) = plan.get(r.index as usize) else {
                return Err(Error::Log(format!("record {} is beyond the plan", r.index)));
            };
            match r.outcome.to_outcome()? {
                Some(o) => s.per_model.entry(model).or_default().record(&o),
                None => s.anomalies += 1,
            }
        }
        Ok(s)
    }

    /// All models merged; equal per-model counts make this the equal-share mix.
    pub fn overall(&self) -> CampaignStats {
        let mut all = CampaignStats::default();
        for s in self.per_model.values() {
            all.merge(s);
        }
        all
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
    pub resume: bool,
}

/// Result of [`run_campaign`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: CampaignLog,
    pub summary: Summary,
    /// Records executed by this call (less than the total after a resume).
    pub executed: u64,
}

/// In-memory campaign: every record, sorted by index.
pub fn run_in_memory(config: &CampaignConfig, workers: Option<usize>) -> Result<CampaignLog> {
    let cfg = config.resolve()?;
    let target = Target::load(&cfg)?;
    let prepared = target.prepare(&cfg)?;
    let indices: Vec<u64> = (0..cfg.total_injections()).collect();
    let mut records = Vec::with_capacity(indices.len());
    execute(&prepared, &indices, workers, |r| {
        records.push(r);
        Ok(())
    })?;
    records.sort_by_key(|r| r.index);
    Ok(CampaignLog { header: LogHeader::new(config), records })
}

/// Runs a campaign into `out_dir/campaign.jsonl`, flushing each record as it
/// completes, then rewrites the log in index order and writes `stats.json`.
pub fn run_campaign(config: &CampaignConfig, opts: &RunOptions) -> Result<RunOutput> {
    let cfg = config.resolve()?;
    let header = LogHeader::new(config);
    std::fs::create_dir_all(&opts.out_dir).map_err(|e| Error::io(&opts.out_dir, e))?;
    let log_path = opts.out_dir.join(LOG_FILE);

    let mut done = BTreeSet::new();
    let mut writer = if opts.resume && log_path.exists() {
        let existing = CampaignLog::load(&log_path)?;
        if existing.header.config_hash != header.config_hash {
            return Err(Error::config("cannot resume: the log was written for a different config"));
        }
        existing.header.check()?;
        for r in &existing.records {
            done.insert(r.index);
        }
        LogWriter::append(&log_path)?
    } else {
        LogWriter::create(&log_path, &header)?
    };

    let target = Target::load(&cfg)?;
    let prepared = target.prepare(&cfg)?;
    let pending: Vec<u64> = (0..cfg.total_injections()).filter(|i| !done.contains(i)).collect();
    execute(&prepared, &pending, opts.workers, |r| writer.write(&r))?;
    drop(writer);

    let mut log = CampaignLog::load(&log_path)?;
    log.records.sort_by_key(|r| r.index);
    log.records.dedup_by_key(|r| r.index);
    if log.records.len() as u64 != cfg.total_injections() {
        return Err(Error::Log(format!("{} of {} records present", log.records.len(), cfg.total_injections())));
    }
    std::fs::write(&log_path, log.to_jsonl()).map_err(|e| Error::io(&log_path, e))?;
    let summary = Summary::from_log(&log)?;
    let stats_path = opts.out_dir.join(STATS_FILE);
    let stats = crate::report::render(&log, &summary, crate::report::Format::Json)?;
    std::fs::write(&stats_path, stats).map_err(|e| Error::io(&stats_path, e))?;
    Ok(RunOutput { log, summary, executed: pending.len() as u64 })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayResult {
    pub index: u64,
    pub recorded: OutcomeRecord,
    pub replayed: OutcomeRecord,
    /// The payload equals the one regenerated from the recorded seed.
    pub payload_consistent: bool,
}

impl ReplayResult {
    pub fn matches(&self) -> bool {
        self.payload_consistent && self.recorded == self.replayed
    }
}

/// Reloads the log's target once and replays the given records.
pub struct Replayer<'a> {
    log: &'a CampaignLog,
    target: Target,
    cfg: Resolved,
}

impl<'a> Replayer<'a> {
    pub fn new(log: &'a CampaignLog) -> Result<Self> {
        log.header.check()?;
        let cfg = log.header.config.resolve()?;
        let target = Target::load(&cfg)?;
        Ok(Replayer { log, target, cfg })
    }

    pub fn replay_all(&self, indices: &[u64]) -> Result<Vec<ReplayResult>> {
        let prepared = self.target.prepare(&self.cfg)?;
        indices.par_iter().map(|&i| replay_record(&prepared, self.log.record(i)?)).collect()
    }
}

fn replay_record(prepared: &Prepared<'_>, r: &LogRecord) -> Result<ReplayResult> {
    let Some(d) = &r.descriptor else {
        return Err(Error::Log(format!("record {} has no descriptor to replay", r.index)));
    };
    let desc = d.to_descriptor()?;
    let replayed = match prepared.evaluate(&desc, r.frame) {
        Ok(eval) => OutcomeRecord::from(&eval.outcome),
        Err(e) => OutcomeRecord::Anomaly { message: e.to_string() },
    };
    Ok(ReplayResult {
        index: r.index,
        recorded: r.outcome.clone(),
        replayed,
        payload_consistent: generate_payload(desc.model, desc.seed) == desc.payload,
    })
}

/// Replays one record of a log.
pub fn replay(log: &CampaignLog, index: u64) -> Result<Outcome> {
    let result = Replayer::new(log)?.replay_all(&[index])?.remove(0);
    if !result.matches() {
        return Err(Error::Log(format!(
            "record {index}: recorded {:?}, replayed {:?}{}",
            result.recorded,
            result.replayed,
            if result.payload_consistent { "" } else { ", payload does not derive from its seed" }
        )));
    }
    result.replayed.to_outcome()?.ok_or_else(|| Error::Log(format!("record {index} is an anomaly")))
}

/// Writes a campaign log to `path`.
pub fn save_log(path: &Path, log: &CampaignLog) -> Result<()> {
    std::fs::write(path, log.to_jsonl()).map_err(|e| Error::io(path, e))
}
