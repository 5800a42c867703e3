//! Memory limits and CPU affinity for a whole jail.
//!
//! Three working memory backends plus one deliberately broken one:
//!
//! * `data-segment`: RLIMIT_DATA installed pre-exec; the kernel refuses
//!   heap growth past the limit, so overuse is blocked at the source. The
//!   limit is per process (inherited), so a multi-process job can exceed it
//!   in aggregate; use polling or the group controller for aggregate caps.
//! * `group-controller`: a kernel control-group node charges every byte
//!   the jail touches and OOM-kills on breach.
//! * `polling`: a watchdog sums hierarchy RSS on an interval and requests
//!   jail termination on breach. Inherently racy: a fast allocator
//!   overshoots before the kill lands. The default interval is 1 s to
//!   shrink that window.
//! * `resident-set-legacy`: RLIMIT_RSS, which modern kernels ignore. It
//!   exists to demonstrate that ineffectiveness and flags itself as such the
//!   moment it is applied.

mod cgroup;
mod cpuset;
mod rlimit;
mod watchdog;

pub use cgroup::{ControllerVersion, GroupController};
pub use cpuset::CpuSet;
pub use watchdog::{run_polling_watchdog, WatchdogMsg};

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::envctl::ThreadLimitSpec;
use crate::error::LimitError;
use crate::jail::{Jail, SpawnHooks};
use crate::proc::{Pid, ProcState, ProcessTable};

/// Memory-limit backend selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MemBackendKind {
    GroupController,
    DataSegment,
    Polling,
    ResidentSetLegacy,
}

impl MemBackendKind {
    pub fn name(self) -> &'static str {
        match self {
            MemBackendKind::GroupController => "group-controller",
            MemBackendKind::DataSegment => "data-segment",
            MemBackendKind::Polling => "polling",
            MemBackendKind::ResidentSetLegacy => "resident-set-legacy",
        }
    }
}

/// Resource policy for one job.
#[derive(Debug, Clone, Default)]
pub struct LimitPolicy {
    pub mem_limit_bytes: Option<u64>,
    pub mem_backend: Option<MemBackendKind>,
    pub poll_interval: Option<Duration>,
    pub cpuset: Option<CpuSet>,
    pub thread_env: ThreadLimitSpec,
}

pub const DEFAULT_POLL_INTERVAL: Duration = Duration::from_secs(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnforcementAction {
    None,
    BlockedAtSource,
    KilledJail,
    FlaggedIneffective,
}

/// One enforcement outcome, timestamped relative to run start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnforcementEvent {
    pub at_ms: u64,
    pub backend: MemBackendKind,
    /// Hierarchy total for the polling backend; charged bytes for the group
    /// controller; 0 where the kernel gives no number.
    pub observed_bytes: u64,
    pub limit_bytes: u64,
    pub action: EnforcementAction,
    pub affected_pids: Vec<Pid>,
}

/// Watchdog decision over one snapshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PollDecision {
    Within { observed: u64 },
    Exceeded { observed: u64, pids: Vec<Pid> },
}

/// Sums RSS over *all* records of a member snapshot; the snapshot is
/// hierarchy-complete by construction, so tree depth cannot hide memory.
/// Zombies hold no pages and are excluded; on breach the whole jail is the
/// target, never individual pids.
pub fn poll_enforce(table: &ProcessTable, limit_bytes: u64) -> PollDecision {
    let observed: u64 = table
        .records()
        .iter()
        .filter(|r| r.state != ProcState::Zombie)
        .map(|r| r.rss_bytes)
        .sum();
    if observed > limit_bytes {
        PollDecision::Exceeded {
            observed,
            pids: table.records().iter().map(|r| r.pid).collect(),
        }
    } else {
        PollDecision::Within { observed }
    }
}

/// Live state of the chosen memory backend after `apply_memory_limit`.
pub enum MemEnforcement {
    None,
    /// Enforced inside each process by the kernel; nothing to drive.
    DataSegment { limit_bytes: u64 },
    /// Installed but known-ineffective.
    ResidentSetLegacy { limit_bytes: u64 },
    /// Controller node to watch and clean up.
    GroupController(GroupController),
    /// Watchdog parameters; the caller runs [`run_polling_watchdog`].
    Polling {
        limit_bytes: u64,
        interval: Duration,
    },
}

/// Everything `apply_memory_limit` + `apply_cpu_affinity` decided: pre-exec
/// hooks for the spawn and the enforcement to drive afterwards.
pub struct PreparedLimits {
    pub hooks: SpawnHooks,
    pub enforcement: MemEnforcement,
    /// Events emitted at apply time (the legacy backend flags itself
    /// immediately).
    pub initial_events: Vec<EnforcementEvent>,
}

/// Resolves a policy into hooks and enforcement state. Must run between
/// jail creation and spawn so the hooks ride along into the child.
pub fn apply_memory_limit(jail: &Jail, policy: &LimitPolicy) -> Result<PreparedLimits, LimitError> {
    let mut prepared = PreparedLimits {
        hooks: SpawnHooks::default(),
        enforcement: MemEnforcement::None,
        initial_events: Vec::new(),
    };
    let Some(limit) = policy.mem_limit_bytes else {
        return Ok(prepared);
    };
    let backend = policy.mem_backend.unwrap_or(MemBackendKind::Polling);
    match backend {
        MemBackendKind::DataSegment => {
            prepared.hooks.rlimit_data = Some(limit);
            prepared.enforcement = MemEnforcement::DataSegment { limit_bytes: limit };
        }
        MemBackendKind::ResidentSetLegacy => {
            prepared.hooks.rlimit_rss = Some(limit);
            prepared.enforcement = MemEnforcement::ResidentSetLegacy { limit_bytes: limit };
            prepared.initial_events.push(EnforcementEvent {
                at_ms: 0,
                backend: MemBackendKind::ResidentSetLegacy,
                observed_bytes: 0,
                limit_bytes: limit,
                action: EnforcementAction::FlaggedIneffective,
                affected_pids: Vec::new(),
            });
        }
        MemBackendKind::GroupController => {
            let controller = GroupController::create(jail.jail_id(), limit)?;
            prepared.hooks.cgroup_procs = Some(controller.procs_fd()?);
            prepared.enforcement = MemEnforcement::GroupController(controller);
        }
        MemBackendKind::Polling => {
            prepared.enforcement = MemEnforcement::Polling {
                limit_bytes: limit,
                interval: policy.poll_interval.unwrap_or(DEFAULT_POLL_INTERVAL),
            };
        }
    }
    Ok(prepared)
}

/// Validates a cpuset against the host and stages it for spawn, so every
/// descendant inherits the mask.
pub fn apply_cpu_affinity(
    prepared: &mut PreparedLimits,
    cpuset: &CpuSet,
    host_cpus: usize,
) -> Result<(), LimitError> {
    cpuset.validate(host_cpus)?;
    prepared.hooks.cpuset = Some(cpuset.ids().to_vec());
    Ok(())
}
