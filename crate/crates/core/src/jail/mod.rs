//! Containment domains for batch jobs.
//!
//! A [`Jail`] owns one job: it prepares an isolation backend, launches the
//! job inside it, tracks every process the job ever creates, and tears the
//! whole thing down with TERM→KILL escalation. Membership is decided by
//! backend-native identity (namespace inode, process-group id, or
//! subreaper-tracked lineage), never by walking ppid chains, because parent
//! links are destroyed exactly when containment matters most: an orphan's
//! ppid collapses to 1.
//!
//! Nested PID namespaces created *by the job* are not enumerated by
//! [`Jail::members`] (their inode differs), but termination still covers
//! them: killing the namespace init kills every descendant namespace too.

mod backend;
mod spawn;
mod tracker;

pub use backend::{
    backend_supported, default_backend, pid_namespace_supported, subreaper_supported,
    IsolationBackend,
};
pub use spawn::SpawnHooks;
pub use tracker::TrackedProc;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime};

use nix::sys::signal::{kill, Signal};
use nix::sys::wait::{waitpid, WaitPidFlag, WaitStatus};

use crate::error::JailError;
use crate::proc::{
    read_table_degraded, Pid, ProcState, ProcessInspector, ProcessRecord, ProcessTable,
};
use backend::SubreaperGuard;
use tracker::Tracker;

/// How long after KILL delivery processes get to disappear before they are
/// declared survivors.
const SETTLE_AFTER_KILL: Duration = Duration::from_millis(500);
const POLL_STEP: Duration = Duration::from_millis(25);

/// Immutable identity of a spawned jail.
#[derive(Debug, Clone)]
pub struct JailHandle {
    pub jail_id: String,
    pub root_pid: Pid,
    pub backend: IsolationBackend,
    pub pgid: Pid,
    /// PID-namespace inode for the pid-namespace backend.
    pub ns_token: Option<u64>,
    pub created_at: SystemTime,
}

/// Exit disposition of the job root.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JobStatus {
    pub exit_code: Option<i32>,
    pub signal: Option<i32>,
}

impl JobStatus {
    pub fn success(&self) -> bool {
        self.exit_code == Some(0)
    }

    /// Shell-style code: the exit code, or 128+signal.
    pub fn shell_code(&self) -> i32 {
        match (self.exit_code, self.signal) {
            (Some(c), _) => c,
            (None, Some(s)) => 128 + s,
            (None, None) => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermSignal {
    Term,
    Kill,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TermStep {
    pub pid: Pid,
    pub signal: TermSignal,
    pub delivered: bool,
}

/// Outcome of a termination pass.
#[derive(Debug, Clone, Default)]
pub struct TerminationReport {
    pub steps: Vec<TermStep>,
    pub escalated: bool,
    pub survivors: Vec<Pid>,
    pub elapsed: Duration,
}

impl TerminationReport {
    pub fn contained(&self) -> bool {
        self.survivors.is_empty()
    }
}

/// Classification of a jail member, following the zombie/orphan definitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProcessClass {
    Normal,
    Zombie,
    Orphan,
    DaemonLike,
}

/// Pure classification: zombies by state; processes sitting at an orphan
/// destination (init, or the supervisor under a subreaper) are orphans when
/// history shows they once had a real parent, daemon-like otherwise;
/// deliberate daemonization and accidental orphaning look identical without
/// history.
pub fn classify(
    record: &ProcessRecord,
    prior: Option<&TrackedProc>,
    orphan_parents: &[Pid],
) -> ProcessClass {
    if record.state == ProcState::Zombie {
        return ProcessClass::Zombie;
    }
    if orphan_parents.contains(&record.ppid) {
        return match prior {
            Some(t) if t.had_real_parent => ProcessClass::Orphan,
            _ => ProcessClass::DaemonLike,
        };
    }
    ProcessClass::Normal
}

/// One scan's worth of jail-relative process state.
#[derive(Debug, Clone)]
pub struct JailObservation {
    pub members: ProcessTable,
    pub escapees: Vec<ProcessRecord>,
}

struct RootChild {
    pid: Pid,
    #[allow(dead_code)]
    start_time: u64,
    ns_token: Option<u64>,
    status: Option<JobStatus>,
}

struct JailState {
    root: Option<RootChild>,
    tracker: Tracker,
    closed: bool,
}

/// A containment domain and the machinery to drive it.
///
/// Shareable across threads; the sampler and watchdog read membership while
/// the control loop owns the lifecycle. `terminate` is serialized
/// internally.
pub struct Jail {
    jail_id: String,
    backend: IsolationBackend,
    supervisor_pid: Pid,
    created_at: SystemTime,
    state: Mutex<JailState>,
    terminate_lock: Mutex<()>,
    _subreaper: Option<SubreaperGuard>,
}

static JAIL_SEQ: AtomicU64 = AtomicU64::new(0);

impl Jail {
    /// Prepares a containment domain. Fails up front when the host cannot
    /// provide the backend, so callers can decide on a fallback before
    /// anything is spawned.
    pub fn create(backend: IsolationBackend) -> Result<Jail, JailError> {
        backend_supported(backend)?;
        let subreaper = match backend {
            IsolationBackend::Subreaper => Some(SubreaperGuard::acquire()?),
            _ => None,
        };
        let seq = JAIL_SEQ.fetch_add(1, Ordering::Relaxed);
        let jail_id = format!("{}-{}", std::process::id(), seq);
        Ok(Jail {
            jail_id,
            backend,
            supervisor_pid: std::process::id() as Pid,
            created_at: SystemTime::now(),
            state: Mutex::new(JailState {
                root: None,
                tracker: Tracker::default(),
                closed: false,
            }),
            terminate_lock: Mutex::new(()),
            _subreaper: subreaper,
        })
    }

    pub fn jail_id(&self) -> &str {
        &self.jail_id
    }

    pub fn backend(&self) -> IsolationBackend {
        self.backend
    }

    /// Launches the job inside the domain. The env overlay is merged over
    /// the inherited environment; hooks run in the child before exec.
    pub fn spawn(
        &self,
        command: &[String],
        env_overlay: &BTreeMap<String, String>,
        workdir: Option<&Path>,
        hooks: SpawnHooks,
    ) -> Result<Pid, JailError> {
        let mut st = self.state.lock().unwrap();
        if st.root.is_some() {
            return Err(JailError::AlreadySpawned);
        }
        let spawned = spawn::spawn(&spawn::SpawnRequest {
            command,
            env_overlay,
            workdir,
            hooks,
            new_pid_namespace: self.backend == IsolationBackend::PidNamespace,
        })?;
        let pid = spawned.pid;
        let proc_dir = std::path::PathBuf::from(format!("/proc/{pid}"));
        let ns_token = match self.backend {
            IsolationBackend::PidNamespace => read_pid_ns(&proc_dir),
            _ => None,
        };
        let start_time = read_start_time(&proc_dir).unwrap_or(0);
        st.tracker.seed(pid, start_time, self.supervisor_pid);
        st.root = Some(RootChild {
            pid,
            start_time,
            ns_token,
            status: None,
        });
        Ok(pid)
    }

    /// The immutable handle; available once a job is spawned.
    pub fn handle(&self) -> Result<JailHandle, JailError> {
        let st = self.state.lock().unwrap();
        let root = st.root.as_ref().ok_or(JailError::NotSpawned)?;
        Ok(JailHandle {
            jail_id: self.jail_id.clone(),
            root_pid: root.pid,
            backend: self.backend,
            pgid: root.pid,
            ns_token: root.ns_token,
            created_at: self.created_at,
        })
    }

    pub fn root_pid(&self) -> Option<Pid> {
        self.state.lock().unwrap().root.as_ref().map(|r| r.pid)
    }

    fn orphan_parents(&self) -> Vec<Pid> {
        match self.backend {
            IsolationBackend::Subreaper => vec![1, self.supervisor_pid],
            _ => vec![1],
        }
    }

    /// Live member pids by backend-native identity only (no history).
    fn native_members(&self, table: &ProcessTable, root: &RootChild) -> HashSet<Pid> {
        let mut out = HashSet::new();
        for rec in table.records() {
            let is_member = match self.backend {
                IsolationBackend::PidNamespace => match (rec.pid_ns, root.ns_token) {
                    (Some(ns), Some(token)) => ns == token,
                    _ => rec.pid == root.pid,
                },
                IsolationBackend::ProcessGroup | IsolationBackend::Subreaper => {
                    rec.pgid == root.pid
                }
            };
            if is_member && rec.pid != self.supervisor_pid {
                out.insert(rec.pid);
            }
        }
        out
    }

    /// Folds a full-system snapshot into the tracker and derives the member
    /// view and current escapees.
    pub fn observe(&self, full: &ProcessTable) -> Result<JailObservation, JailError> {
        let mut st = self.state.lock().unwrap();
        if st.closed {
            return Ok(JailObservation {
                members: full.filtered(|_| false),
                escapees: Vec::new(),
            });
        }
        let root = st.root.as_ref().ok_or(JailError::NotSpawned)?;
        let native = self.native_members(full, root);
        let orphan_parents = self.orphan_parents();
        let alive_tracked = st.tracker.update(full, &native, &orphan_parents);
        let members = match self.backend {
            // Lineage closure is the subreaper's native identity: orphans
            // re-parent to the supervisor instead of init, so they stay
            // addressable even outside the process group.
            IsolationBackend::Subreaper => full
                .filtered(|r| alive_tracked.contains(&r.pid) && r.pid != self.supervisor_pid),
            _ => full.filtered(|r| native.contains(&r.pid)),
        };
        let escapees = match self.backend {
            IsolationBackend::ProcessGroup => full
                .records()
                .iter()
                .filter(|r| {
                    alive_tracked.contains(&r.pid)
                        && !native.contains(&r.pid)
                        && r.state != ProcState::Zombie
                        && r.pid != self.supervisor_pid
                })
                .cloned()
                .collect(),
            // Escape is impossible (namespace) or escape *is* membership
            // (subreaper lineage).
            IsolationBackend::PidNamespace | IsolationBackend::Subreaper => Vec::new(),
        };
        Ok(JailObservation { members, escapees })
    }

    /// All live processes belonging to the jail, by backend identity.
    pub fn members(&self, inspector: &dyn ProcessInspector) -> Result<ProcessTable, JailError> {
        let (full, _) = read_table_degraded(inspector)?;
        Ok(self.observe(&full)?.members)
    }

    /// Tracked-but-departed processes (see [`Jail::observe`]).
    pub fn detect_escapees(
        &self,
        inspector: &dyn ProcessInspector,
    ) -> Result<Vec<ProcessRecord>, JailError> {
        let (full, _) = read_table_degraded(inspector)?;
        Ok(self.observe(&full)?.escapees)
    }

    /// Classification of one member record against tracked history.
    pub fn classify(&self, record: &ProcessRecord) -> ProcessClass {
        let st = self.state.lock().unwrap();
        if let Some(root) = st.root.as_ref() {
            if record.pid == root.pid && record.state != ProcState::Zombie {
                // The root's designated parent is the supervisor.
                return ProcessClass::Normal;
            }
        }
        let prior = st
            .tracker
            .get(record.pid)
            .filter(|t| t.start_time == record.start_time || record.start_time == 0);
        classify(record, prior, &self.orphan_parents())
    }

    /// Non-blocking reap of the job root. The first successful wait caches
    /// the status; later calls return it.
    pub fn try_wait_root(&self) -> Option<JobStatus> {
        let mut st = self.state.lock().unwrap();
        let root = st.root.as_mut()?;
        if root.status.is_some() {
            return root.status;
        }
        match waitpid(
            nix::unistd::Pid::from_raw(root.pid),
            Some(WaitPidFlag::WNOHANG),
        ) {
            Ok(WaitStatus::Exited(_, code)) => {
                root.status = Some(JobStatus {
                    exit_code: Some(code),
                    signal: None,
                });
            }
            Ok(WaitStatus::Signaled(_, sig, _)) => {
                root.status = Some(JobStatus {
                    exit_code: None,
                    signal: Some(sig as i32),
                });
            }
            Err(nix::errno::Errno::ECHILD) => {
                // Someone else reaped it (should not happen); report unknown
                // signal death rather than hanging forever.
                root.status = Some(JobStatus {
                    exit_code: None,
                    signal: None,
                });
            }
            _ => {}
        }
        root.status
    }

    /// Reaps zombie jail processes that have re-parented to the supervisor
    /// (subreaper adoption). Only pids verified as ours and tracked are
    /// waited on, so sibling children of the embedding process are safe.
    pub fn reap_adopted(&self, full: &ProcessTable) {
        let st = self.state.lock().unwrap();
        let root_pid = st.root.as_ref().map(|r| r.pid);
        for rec in full.records() {
            if rec.state != ProcState::Zombie
                || rec.ppid != self.supervisor_pid
                || Some(rec.pid) == root_pid
            {
                continue;
            }
            if st.tracker.is_tracked(rec) {
                let _ = waitpid(
                    nix::unistd::Pid::from_raw(rec.pid),
                    Some(WaitPidFlag::WNOHANG),
                );
            }
        }
    }

    fn signal_members(&self, live: &[ProcessRecord], sig: Signal, steps: &mut Vec<TermStep>) {
        let term_sig = match sig {
            Signal::SIGKILL => TermSignal::Kill,
            _ => TermSignal::Term,
        };
        let (root_pid, pgid) = {
            let st = self.state.lock().unwrap();
            match st.root.as_ref() {
                Some(r) => (r.pid, r.pid),
                None => return,
            }
        };
        if self.backend == IsolationBackend::PidNamespace {
            // Killing the namespace init takes the whole tree with it.
            let ok = kill(nix::unistd::Pid::from_raw(root_pid), sig).is_ok();
            steps.push(TermStep {
                pid: root_pid,
                signal: term_sig,
                delivered: ok,
            });
        }
        let group_ok = kill(nix::unistd::Pid::from_raw(-pgid), sig).is_ok();
        for rec in live {
            if rec.pid == root_pid && self.backend == IsolationBackend::PidNamespace {
                continue;
            }
            if rec.pgid == pgid {
                steps.push(TermStep {
                    pid: rec.pid,
                    signal: term_sig,
                    delivered: group_ok,
                });
            } else {
                // Lineage-tracked member outside the group: address it
                // directly.
                let ok = kill(nix::unistd::Pid::from_raw(rec.pid), sig).is_ok();
                steps.push(TermStep {
                    pid: rec.pid,
                    signal: term_sig,
                    delivered: ok,
                });
            }
        }
    }

    fn live_members(&self, inspector: &dyn ProcessInspector) -> Vec<ProcessRecord> {
        let Ok((full, _)) = read_table_degraded(inspector) else {
            return Vec::new();
        };
        self.reap_adopted(&full);
        self.try_wait_root();
        match self.observe(&full) {
            Ok(view) => view
                .members
                .records()
                .iter()
                .filter(|r| r.state != ProcState::Zombie)
                .cloned()
                .collect(),
            Err(_) => Vec::new(),
        }
    }

    fn wait_until_empty(
        &self,
        inspector: &dyn ProcessInspector,
        budget: Duration,
    ) -> Vec<ProcessRecord> {
        let deadline = Instant::now() + budget;
        loop {
            let live = self.live_members(inspector);
            if live.is_empty() || Instant::now() >= deadline {
                return live;
            }
            std::thread::sleep(POLL_STEP);
        }
    }

    /// TERM everything, wait out the grace period, KILL what remains, then
    /// account for survivors after a settle window. Zombies are never
    /// signaled; they are reaped (namespace teardown or subreaper adoption)
    /// or left to init. Failures are encoded in the report rather than
    /// returned.
    pub fn terminate(
        &self,
        inspector: &dyn ProcessInspector,
        grace: Duration,
    ) -> TerminationReport {
        let _serialized = self.terminate_lock.lock().unwrap();
        let start = Instant::now();
        let mut report = TerminationReport::default();

        let live = self.live_members(inspector);
        if !live.is_empty() {
            self.signal_members(&live, Signal::SIGTERM, &mut report.steps);
            let live = self.wait_until_empty(inspector, grace);
            if !live.is_empty() {
                report.escalated = true;
                self.signal_members(&live, Signal::SIGKILL, &mut report.steps);
                let leftovers = self.wait_until_empty(inspector, SETTLE_AFTER_KILL);
                report.survivors = leftovers.iter().map(|r| r.pid).collect();
            }
        }
        // Final reap pass so no jail zombie outlives the report.
        if let Ok((full, _)) = read_table_degraded(inspector) {
            self.reap_adopted(&full);
        }
        self.try_wait_root();
        if report.survivors.is_empty() {
            self.state.lock().unwrap().closed = true;
        }
        report.elapsed = start.elapsed();
        report
    }
}

fn read_pid_ns(proc_dir: &Path) -> Option<u64> {
    let link = std::fs::read_link(proc_dir.join("ns/pid")).ok()?;
    let s = link.to_str()?;
    s.strip_prefix("pid:[")?.strip_suffix(']')?.parse().ok()
}

fn read_start_time(proc_dir: &Path) -> Option<u64> {
    let stat = std::fs::read_to_string(proc_dir.join("stat")).ok()?;
    crate::proc::stat_start_time(&stat)
}
