//! Process-table snapshots and the inspectors that produce them.
//!
//! Everything downstream (jail membership, limit polling, telemetry) works
//! on immutable [`ProcessTable`] snapshots. Two inspectors ship: a procfs
//! reader for real hosts and a scripted playback inspector for tests.

mod procfs;
mod sim;

pub use procfs::ProcfsInspector;
pub use sim::SimulatedInspector;

/// Start-time field of a raw stat line; callers pair it with the pid to
/// recognize a recycled pid.
pub fn stat_start_time(stat: &str) -> Option<u64> {
    procfs::parse_stat_line(stat).map(|r| r.start_time)
}

use std::collections::HashSet;
use std::time::Instant;

use crate::error::InspectError;

pub type Pid = i32;

/// Scheduling state of a process, collapsed to the classes the model cares
/// about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProcState {
    Running,
    Sleeping,
    Zombie,
    Stopped,
}

impl ProcState {
    pub fn from_stat_char(c: char) -> ProcState {
        match c {
            'R' => ProcState::Running,
            'Z' | 'X' | 'x' => ProcState::Zombie,
            'T' | 't' => ProcState::Stopped,
            // S, D, I, W, P and anything new all behave as "asleep" here.
            _ => ProcState::Sleeping,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            ProcState::Running => 'R',
            ProcState::Sleeping => 'S',
            ProcState::Zombie => 'Z',
            ProcState::Stopped => 'T',
        }
    }
}

/// One process as seen in a snapshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessRecord {
    pub pid: Pid,
    pub ppid: Pid,
    pub pgid: Pid,
    pub owner_uid: u32,
    pub state: ProcState,
    /// Threads in the process; zombies report 0 or 1 depending on source.
    pub thread_count: u32,
    /// Logical CPU the process last ran on.
    pub cpu_id: u32,
    /// Cumulative user+system CPU time.
    pub cpu_time_ms: u64,
    pub rss_bytes: u64,
    /// Kernel start time (clock ticks since boot); 0 when the source does
    /// not provide one. Used together with the pid to survive pid reuse.
    pub start_time: u64,
    pub comm: String,
    /// PID-namespace identity (inode), when readable.
    pub pid_ns: Option<u64>,
}

/// An immutable snapshot of (part of) the process hierarchy.
#[derive(Debug, Clone)]
pub struct ProcessTable {
    pub taken_at: Instant,
    records: Vec<ProcessRecord>,
}

impl ProcessTable {
    /// Builds a table, dropping any record whose pid repeats an earlier one.
    pub fn new(taken_at: Instant, records: Vec<ProcessRecord>) -> ProcessTable {
        let mut seen = HashSet::new();
        let records = records
            .into_iter()
            .filter(|r| seen.insert(r.pid))
            .collect();
        ProcessTable { taken_at, records }
    }

    pub fn records(&self) -> &[ProcessRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, pid: Pid) -> Option<&ProcessRecord> {
        self.records.iter().find(|r| r.pid == pid)
    }

    pub fn contains(&self, pid: Pid) -> bool {
        self.get(pid).is_some()
    }

    /// New table holding only records that pass the filter.
    pub fn filtered(&self, mut keep: impl FnMut(&ProcessRecord) -> bool) -> ProcessTable {
        ProcessTable {
            taken_at: self.taken_at,
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }
}

/// Source of process snapshots.
pub trait ProcessInspector: Send + Sync {
    /// Full-system snapshot. A partially unreadable system returns
    /// [`InspectError::PartialTable`] carrying what was read; use
    /// [`read_table_degraded`] when a partial snapshot is acceptable.
    fn read_table(&self) -> Result<ProcessTable, InspectError>;

    fn host_cpu_count(&self) -> usize;
}

/// Unwraps a partial snapshot into `(table, degraded)`.
pub fn read_table_degraded(
    inspector: &dyn ProcessInspector,
) -> Result<(ProcessTable, bool), InspectError> {
    match inspector.read_table() {
        Ok(t) => Ok((t, false)),
        Err(InspectError::PartialTable { table, .. }) => Ok((*table, true)),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
pub(crate) fn test_record(pid: Pid, ppid: Pid, pgid: Pid) -> ProcessRecord {
    ProcessRecord {
        pid,
        ppid,
        pgid,
        owner_uid: 0,
        state: ProcState::Running,
        thread_count: 1,
        cpu_id: 0,
        cpu_time_ms: 0,
        rss_bytes: 0,
        start_time: 0,
        comm: format!("p{pid}"),
        pid_ns: None,
    }
}
