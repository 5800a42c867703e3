//! Core library of the jobjail batch-job supervisor.
//!
//! The pieces fit together like this: [`jail`] creates a containment domain
//! (process group, subreaper, or PID namespace) and launches a job inside it,
//! [`limits`] applies memory limits and CPU affinity to the whole jail,
//! [`envctl`] builds the thread-limiting environment overlay, [`telemetry`]
//! samples the jail's process state into a time series and renders reports,
//! and [`pymem`] simulates an interpreter memory model (arena allocation plus
//! generational GC counters) to estimate memory behavior from allocation
//! traces. [`proc`] holds the process-table types and inspectors the other
//! modules share.

pub mod envctl;
pub mod error;
pub mod jail;
pub mod limits;
pub mod proc;
pub mod pymem;
pub mod telemetry;

pub use error::{ConfigError, InspectError, JailError, LimitError, PymemError, TelemetryError};
