//! jobjail: a batch-job supervisor that contains every descendant of a job,
//! enforces memory/CPU limits through selectable backends, and records a
//! resource telemetry series. The binary in this crate wires the core
//! library into a command line; see the library for the mechanisms.

pub mod args;
pub mod exit_codes;
pub mod pymem_cmd;
pub mod run;

pub use args::{parse_args, Command};
pub use run::{run, RunOutcome};
