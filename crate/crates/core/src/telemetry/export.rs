use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::TelemetryError;
use crate::telemetry::{Report, Sample};

pub const CSV_HEADER: &str =
    "t_ms,not_total,main_cpu_id,cpu_percent,rss_bytes,process_count,zombie_count,accel_util";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ExportFormat::Json),
            "csv" => Ok(ExportFormat::Csv),
            other => Err(format!("unknown format: {other}")),
        }
    }
}

/// Run identity carried in the JSON export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub jail_id: String,
    pub backend: String,
    pub cpuset: Option<String>,
    pub limits: LimitsMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct LimitsMeta {
    pub mem_limit_bytes: Option<u64>,
    pub mem_backend: Option<String>,
    pub poll_interval_ms: Option<u64>,
}

/// One exported sample. Floats are pre-rounded to two decimals so identical
/// series produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub t_ms: u64,
    pub not_total: u32,
    pub main_cpu_id: u32,
    pub cpu_percent: f64,
    pub rss_bytes: u64,
    pub process_count: u32,
    pub zombie_count: u32,
    pub accel_util: Option<f64>,
    pub degraded: bool,
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

impl From<&Sample> for SampleRow {
    fn from(s: &Sample) -> SampleRow {
        SampleRow {
            t_ms: s.t_ms,
            not_total: s.not_total,
            main_cpu_id: s.main_cpu_id,
            cpu_percent: round2(s.cpu_percent),
            rss_bytes: s.rss_total_bytes,
            process_count: s.process_count,
            zombie_count: s.zombie_count,
            accel_util: s.accel_util.map(round2),
            degraded: s.degraded,
        }
    }
}

/// Full JSON export document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExportDoc {
    pub meta: RunMeta,
    pub samples: Vec<SampleRow>,
    pub report: Report,
}

fn render_csv(samples: &[SampleRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for s in samples {
        let accel = match s.accel_util {
            Some(v) => format!("{v:.2}"),
            None => String::new(),
        };
        out.push_str(&format!(
            "{},{},{},{:.2},{},{},{},{}\n",
            s.t_ms,
            s.not_total,
            s.main_cpu_id,
            s.cpu_percent,
            s.rss_bytes,
            s.process_count,
            s.zombie_count,
            accel
        ));
    }
    out
}

pub fn render(
    series: &[Sample],
    report: &Report,
    meta: &RunMeta,
    format: ExportFormat,
) -> Result<String, TelemetryError> {
    let samples: Vec<SampleRow> = series.iter().map(SampleRow::from).collect();
    match format {
        ExportFormat::Csv => Ok(render_csv(&samples)),
        ExportFormat::Json => {
            let doc = ExportDoc {
                meta: meta.clone(),
                samples,
                report: report.clone(),
            };
            let mut text = serde_json::to_string_pretty(&doc).map_err(|e| {
                TelemetryError::Parse {
                    format: "json",
                    line: 0,
                    reason: e.to_string(),
                }
            })?;
            text.push('\n');
            Ok(text)
        }
    }
}

/// Writes the series (and, for JSON, the report) to `path`.
pub fn export(
    series: &[Sample],
    report: &Report,
    meta: &RunMeta,
    format: ExportFormat,
    path: &Path,
) -> Result<(), TelemetryError> {
    let text = render(series, report, meta, format)?;
    std::fs::write(path, text).map_err(|e| TelemetryError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn import_json(text: &str) -> Result<ExportDoc, TelemetryError> {
    serde_json::from_str(text).map_err(|e| TelemetryError::Parse {
        format: "json",
        line: e.line(),
        reason: e.to_string(),
    })
}

pub fn import_csv(text: &str) -> Result<Vec<SampleRow>, TelemetryError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == CSV_HEADER => {}
        other => {
            return Err(TelemetryError::Parse {
                format: "csv",
                line: 1,
                reason: format!("bad header: {:?}", other.map(|(_, h)| h)),
            })
        }
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let bad = |reason: String| TelemetryError::Parse {
            format: "csv",
            line: idx + 1,
            reason,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(bad(format!("expected 8 columns, got {}", fields.len())));
        }
        out.push(SampleRow {
            t_ms: fields[0].parse().map_err(|e| bad(format!("t_ms: {e}")))?,
            not_total: fields[1]
                .parse()
                .map_err(|e| bad(format!("not_total: {e}")))?,
            main_cpu_id: fields[2]
                .parse()
                .map_err(|e| bad(format!("main_cpu_id: {e}")))?,
            cpu_percent: fields[3]
                .parse()
                .map_err(|e| bad(format!("cpu_percent: {e}")))?,
            rss_bytes: fields[4]
                .parse()
                .map_err(|e| bad(format!("rss_bytes: {e}")))?,
            process_count: fields[5]
                .parse()
                .map_err(|e| bad(format!("process_count: {e}")))?,
            zombie_count: fields[6]
                .parse()
                .map_err(|e| bad(format!("zombie_count: {e}")))?,
            accel_util: if fields[7].is_empty() {
                None
            } else {
                Some(
                    fields[7]
                        .parse()
                        .map_err(|e| bad(format!("accel_util: {e}")))?,
                )
            },
            degraded: false,
        });
    }
    Ok(out)
}
