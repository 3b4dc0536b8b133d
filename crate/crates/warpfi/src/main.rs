use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use warpfi::campaign::{run_campaign, Replayer, RunOptions};
use warpfi::config::CampaignConfig;
use warpfi::core::analysis::{classify_coords, diff, ComparePolicy, DEFAULT_SQUARE_DENSITY};
use warpfi::core::nn::Network;
use warpfi::core::numerics::Precision;
use warpfi::core::simt::Algorithm;
use warpfi::formats::{detections_json, load_frame, load_matrix, load_network};
use warpfi::report::{report, Format};
use warpfi::{CampaignLog, Error};

#[derive(Parser)]
#[command(name = "warpfi", version, about = "Deterministic GPU fault-injection campaigns on a simulated SIMT core")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the campaign described by a config file.
    Run {
        config: PathBuf,
        /// Override `campaign.master_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (defaults to the config, then to all cores).
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value = "warpfi-out")]
        out: PathBuf,
        /// Continue an interrupted run in the same output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Re-execute logged injections and compare outcomes.
    Replay {
        log: PathBuf,
        /// Replay only this record (default: all).
        #[arg(long)]
        record: Option<u64>,
    },
    /// Summarize a campaign log.
    Report {
        log: PathBuf,
        /// json, csv or markdown.
        #[arg(long, default_value = "markdown")]
        format: String,
    },
    /// Write the reference network and frame set.
    GenAssets {
        #[arg(long, default_value = "assets")]
        out: PathBuf,
    },
    /// Compare two matrix dumps.
    Diff {
        golden: PathBuf,
        observed: PathBuf,
        /// Relative tolerance; exact comparison when absent.
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Run fault-free inference and print detections per frame as JSON.
    Detect {
        network: PathBuf,
        frames: Vec<PathBuf>,
        #[arg(long, default_value = "fp32")]
        precision: String,
        #[arg(long, default_value = "software")]
        algorithm: String,
    },
}

/// Validation failures exit with 1, anything that went wrong while running with 2.
fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_validation() { 1 } else { 2 })
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run { config, seed, workers, out, resume } => {
            let mut cfg = CampaignConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.campaign.master_seed = s;
            }
            let workers = workers.or(cfg.campaign.workers);
            if workers == Some(0) {
                return Err(Error::Config("--workers must be positive".into()));
            }
            let result = run_campaign(&cfg, &RunOptions { out_dir: out.clone(), workers, resume })?;
            print!("{}", warpfi::report::render(&result.log, &result.summary, Format::Markdown)?);
            eprintln!("{} injections executed, log in {}", result.executed, out.display());
            Ok(if result.summary.anomalies > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Command::Replay { log, record } => {
            let log = CampaignLog::load(&log)?;
            let indices: Vec<u64> = match record {
                Some(r) => vec![r],
                None => log.records.iter().map(|r| r.index).collect(),
            };
            let results = Replayer::new(&log)?.replay_all(&indices)?;
            let mut mismatches = 0;
            for r in &results {
                if !r.matches() {
                    mismatches += 1;
                    println!("record {}: recorded {:?}, replayed {:?}", r.index, r.recorded, r.replayed);
                    if !r.payload_consistent {
                        println!("record {}: payload does not derive from its seed", r.index);
                    }
                }
            }
            println!("{}/{} records reproduced", results.len() - mismatches, results.len());
            Ok(if mismatches > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Command::Report { log, format } => {
            let format = Format::from_name(&format).ok_or_else(|| Error::Config(format!("unknown report format {format:?}")))?;
            print!("{}", report(&CampaignLog::load(&log)?, format)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::GenAssets { out } => {
            for p in warpfi::assets::generate(&out)? {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Diff { golden, observed, epsilon } => {
            let policy = epsilon.map_or(ComparePolicy::Exact, ComparePolicy::Epsilon);
            let d = diff(&load_matrix(&golden)?, &load_matrix(&observed)?, policy)?;
            let geometry = if d.is_empty() { None } else { Some(classify_coords(d.coords(), DEFAULT_SQUARE_DENSITY)?.name()) };
            let coords: Vec<(usize, usize)> = d.coords().collect();
            let out = serde_json::json!({ "corrupted": d.len(), "geometry": geometry, "elements": coords });
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Detect { network, frames, precision, algorithm } => {
            let precision = Precision::from_name(&precision).ok_or_else(|| Error::Config(format!("unknown precision {precision:?}")))?;
            let algorithm = Algorithm::from_name(&algorithm).ok_or_else(|| Error::Config(format!("unknown algorithm {algorithm:?}")))?;
            let spec = load_network(&network)?;
            let net = Network::new(&spec, precision, algorithm)?;
            let mut per_frame = Vec::new();
            for f in &frames {
                let input = load_frame(f, spec.input.0)?.convert(precision);
                per_frame.push(net.infer(&input, None)?.detections);
            }
            println!("{}", serde_json::to_string_pretty(&detections_json(&per_frame))?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    run(cli).unwrap_or_else(|e| fail(&e))
}
