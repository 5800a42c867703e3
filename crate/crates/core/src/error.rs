//! Error types shared across the crate.

use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors from validating or assembling a job description.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("command must have at least one element")]
    EmptyCommand,
    #[error("sample interval must be > 0 when telemetry is enabled")]
    ZeroSampleInterval,
    #[error("poll interval must be > 0")]
    ZeroPollInterval,
    #[error("memory limit must be > 0")]
    ZeroMemLimit,
    #[error("cpuset is empty")]
    EmptyCpuset,
    #[error("cpu id {0} outside host range 0..{1}")]
    CpuOutOfRange(usize, usize),
    #[error("{0}")]
    Invalid(String),
}

/// Errors from creating or driving a jail.
#[derive(Debug, Error)]
pub enum JailError {
    #[error("backend {backend} unsupported on this host: {reason}")]
    BackendUnsupported { backend: &'static str, reason: String },
    #[error("jail already has a job spawned")]
    AlreadySpawned,
    #[error("no job spawned in this jail")]
    NotSpawned,
    #[error("spawn failed: {0}")]
    Spawn(io::Error),
    #[error("exec failed: {0}")]
    Exec(io::Error),
    #[error("{op}: {source}")]
    Os {
        op: &'static str,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Inspect(#[from] InspectError),
}

/// Errors from reading process state.
#[derive(Debug, Error)]
pub enum InspectError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    /// Some records were read before the failure; they ride along so a
    /// degraded sample can still be produced.
    #[error("partial process snapshot ({} records read): {reason}", table.len())]
    PartialTable {
        table: Box<crate::proc::ProcessTable>,
        reason: String,
    },
    #[error("scenario playback exhausted")]
    ScenarioExhausted,
    #[error("bad scenario line {line}: {reason}")]
    BadScenario { line: usize, reason: String },
}

/// Errors from applying resource limits.
#[derive(Debug, Error)]
pub enum LimitError {
    #[error("group controller unavailable: {0}")]
    ControllerUnavailable(String),
    #[error("cpu id {0} not on this host (has {1} cpus)")]
    BadCpu(usize, usize),
    #[error("cpuset is empty")]
    EmptyCpuset,
    #[error("{op}: {source}")]
    Os {
        op: &'static str,
        #[source]
        source: io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Errors from telemetry aggregation and export.
#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("cannot summarize an empty series")]
    EmptySeries,
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("bad {format} input at line {line}: {reason}")]
    Parse {
        format: &'static str,
        line: usize,
        reason: String,
    },
}

/// Errors from the interpreter-memory-model simulator.
#[derive(Debug, Error)]
pub enum PymemError {
    #[error("unknown value-class descriptor: {0}")]
    UnknownDescriptor(String),
    #[error("bad trace line {line}: {reason}")]
    BadTrace { line: usize, reason: String },
    #[error("free at event {event} targets {target}: {reason}")]
    BadFree {
        event: usize,
        target: usize,
        reason: String,
    },
    #[error("bad size table line {line}: {reason}")]
    BadSizeTable { line: usize, reason: String },
    #[error("{0}")]
    BadConfig(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}
