//! Summary reports: JSON, flat CSV and a markdown SVF table.

use std::fmt::Write as _;

use serde::Serialize;
use warpfi_core::analysis::{fit, CampaignStats, Fraction, GeometryClass};

use crate::campaign::Summary;
use crate::error::{Error, Result};
use crate::log::CampaignLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Markdown,
}

impl Format {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "json" => Some(Format::Json),
            "csv" => Some(Format::Csv),
            "markdown" | "md" => Some(Format::Markdown),
            _ => None,
        }
    }
}

pub const OVERALL: &str = "overall";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
struct ClassRow {
    class: &'static str,
    count: u64,
    fraction: f64,
    ci_lo: f64,
    ci_hi: f64,
}

impl ClassRow {
    fn new(class: &'static str, f: Fraction) -> Self {
        ClassRow { class, count: f.count, fraction: f.fraction, ci_lo: f.ci_lo, ci_hi: f.ci_hi }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
struct FitRow {
    sdc: f64,
    critical: f64,
    due: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ConfigRow {
    config: String,
    n_injections: u64,
    classes: Vec<ClassRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<FitRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct JsonReport<'a> {
    tool: &'a str,
    version: &'a str,
    config_hash: &'a str,
    anomalies: u64,
    configurations: Vec<ConfigRow>,
}

/// Per-model rows followed by the overall row.
fn rows(summary: &Summary) -> Vec<(String, CampaignStats)> {
    let mut out: Vec<(String, CampaignStats)> = summary.per_model.iter().map(|(m, s)| (m.name().to_string(), *s)).collect();
    out.push((OVERALL.to_string(), summary.overall()));
    out
}

fn config_row(name: String, stats: &CampaignStats, log: &CampaignLog) -> Result<ConfigRow> {
    if stats.n_injections == 0 {
        return Err(Error::config(format!("{name}: statistics need at least one classified injection")));
    }
    let classes = stats.classes()?.into_iter().map(|(c, f)| ClassRow::new(c, f)).collect();
    let fit = match log.header.config.resolve_names()?.fit {
        Some(p) => Some(FitRow { sdc: fit(stats.sdc, &p)?, critical: fit(stats.critical_total(), &p)?, due: fit(stats.due_total(), &p)? }),
        None => None,
    };
    Ok(ConfigRow { config: name, n_injections: stats.n_injections, classes, fit })
}

fn pct(count: u64, n: u64) -> String {
    format!("{count} ({:.2}%)", 100.0 * count as f64 / n as f64)
}

pub fn render(log: &CampaignLog, summary: &Summary, format: Format) -> Result<String> {
    let table = rows(summary)
        .into_iter()
        .map(|(name, s)| config_row(name, &s, log))
        .collect::<Result<Vec<_>>>()?;
    let mut out = String::new();
    match format {
        Format::Json => {
            let report = JsonReport {
                tool: &log.header.tool,
                version: &log.header.version,
                config_hash: &log.header.config_hash,
                anomalies: summary.anomalies,
                configurations: table,
            };
            out = serde_json::to_string_pretty(&report)?;
            out.push('\n');
        }
        Format::Csv => {
            out.push_str("config,class,count,fraction,ci_lo,ci_hi\n");
            for row in &table {
                for c in &row.classes {
                    writeln!(out, "{},{},{},{},{},{}", row.config, c.class, c.count, c.fraction, c.ci_lo, c.ci_hi).unwrap();
                }
            }
        }
        Format::Markdown => {
            let with_fit = table.iter().any(|r| r.fit.is_some());
            out.push_str("| config | n | masked | SDC | single | line | square | random | critical | DUE |");
            if with_fit {
                out.push_str(" FIT SDC | FIT critical |");
            }
            out.push('\n');
            out.push_str("|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|");
            if with_fit {
                out.push_str("---:|---:|");
            }
            out.push('\n');
            for ((name, s), row) in rows(summary).iter().zip(&table) {
                let n = s.n_injections;
                let label = if name == OVERALL { "**overall**".to_string() } else { name.clone() };
                write!(out, "| {label} | {n} | {} | {} |", pct(s.masked, n), pct(s.sdc, n)).unwrap();
                for g in GeometryClass::ALL {
                    write!(out, " {} |", pct(s.geometry_count(g), n)).unwrap();
                }
                write!(out, " {} | {} |", pct(s.critical_total(), n), pct(s.due_total(), n)).unwrap();
                if let Some(f) = row.fit {
                    write!(out, " {:.4} | {:.4} |", f.sdc, f.critical).unwrap();
                }
                out.push('\n');
            }
            if summary.anomalies > 0 {
                writeln!(out, "\n{} injections failed and are listed as anomalies in the log.", summary.anomalies).unwrap();
            }
        }
    }
    Ok(out)
}

/// Report straight from a log.
pub fn report(log: &CampaignLog, format: Format) -> Result<String> {
    render(log, &Summary::from_log(log)?, format)
}
