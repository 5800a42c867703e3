//! The supervised run lifecycle.
//!
//! One control loop owns the job: it spawns the jail with limit hooks
//! installed, runs the telemetry sampler (and, for the polling backend, the
//! memory watchdog) as periodic tasks that talk back over channels, and on
//! every exit path sweeps the jail with TERM→KILL escalation before the
//! report is written. Containment is settled before any I/O error can
//! surface.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use jobjail_core::error::{ConfigError, JailError, LimitError};
use jobjail_core::jail::{IsolationBackend, Jail, JobStatus, TerminationReport};
use jobjail_core::limits::{
    apply_cpu_affinity, apply_memory_limit, run_polling_watchdog, EnforcementAction,
    EnforcementEvent, MemBackendKind, MemEnforcement, WatchdogMsg, DEFAULT_POLL_INTERVAL,
};
use jobjail_core::proc::{Pid, ProcfsInspector, ProcessInspector};
use jobjail_core::telemetry::{
    export, run_sampler, summarize, LimitsMeta, Report, RunMeta, Sample, SamplerMsg,
};
use thiserror::Error;

use crate::args::{JobSpec, OnEscape};
use crate::exit_codes;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Backend(String),
    #[error(transparent)]
    Jail(#[from] JailError),
    #[error("{0}")]
    Limit(#[from] LimitError),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => exit_codes::USAGE,
            RunError::Backend(_) => exit_codes::BACKEND_UNSUPPORTED,
            RunError::Limit(LimitError::ControllerUnavailable(_)) => {
                exit_codes::BACKEND_UNSUPPORTED
            }
            RunError::Limit(LimitError::BadCpu(..)) | RunError::Limit(LimitError::EmptyCpuset) => {
                exit_codes::USAGE
            }
            RunError::Limit(_) => exit_codes::BACKEND_UNSUPPORTED,
            RunError::Jail(_) => exit_codes::SPAWN_FAILURE,
        }
    }
}

/// Everything one run produced.
#[derive(Debug)]
pub struct RunOutcome {
    pub backend: IsolationBackend,
    pub jail_id: String,
    pub job_exit: JobStatus,
    pub termination: TerminationReport,
    pub enforcement_events: Vec<EnforcementEvent>,
    pub report: Report,
    pub series: Vec<Sample>,
    /// Escapees still alive after the configured escape handling.
    pub escapees_alive: Vec<Pid>,
    pub export_error: Option<String>,
}

impl RunOutcome {
    pub fn contained(&self) -> bool {
        self.termination.survivors.is_empty() && self.escapees_alive.is_empty()
    }

    pub fn exit_code(&self) -> i32 {
        exit_codes::for_outcome(&self.job_exit, self.contained(), self.export_error.is_none())
    }
}

static INTERRUPTED: AtomicBool = AtomicBool::new(false);

extern "C" fn on_signal(_sig: libc::c_int) {
    INTERRUPTED.store(true, Ordering::SeqCst);
}

fn install_signal_handlers() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| unsafe {
        let handler = on_signal as *const () as libc::sighandler_t;
        libc::signal(libc::SIGTERM, handler);
        libc::signal(libc::SIGINT, handler);
    });
}

fn merge_termination(into: &mut Option<TerminationReport>, next: TerminationReport) {
    match into {
        None => *into = Some(next),
        Some(acc) => {
            acc.steps.extend(next.steps);
            acc.escalated |= next.escalated;
            acc.survivors = next.survivors;
            acc.elapsed += next.elapsed;
        }
    }
}

/// Runs one supervised job to completion.
pub fn run(spec: &JobSpec) -> Result<RunOutcome, RunError> {
    spec.validate()?;
    let inspector = ProcfsInspector::default();

    let jail = Jail::create(spec.backend).map_err(|e| match e {
        JailError::BackendUnsupported { .. } => RunError::Backend(e.to_string()),
        other => RunError::Jail(other),
    })?;

    let mut prepared = apply_memory_limit(&jail, &spec.limits)?;
    if let Some(cpuset) = &spec.limits.cpuset {
        apply_cpu_affinity(&mut prepared, cpuset, inspector.host_cpu_count())?;
    }
    let mut events = std::mem::take(&mut prepared.initial_events);
    let enforcement = prepared.enforcement;
    prepared.enforcement = MemEnforcement::None;

    install_signal_handlers();
    INTERRUPTED.store(false, Ordering::SeqCst);
    let started = Instant::now();
    let elapsed_ms = |at: Instant| at.duration_since(started).as_millis() as u64;

    jail.spawn(
        &spec.command,
        &spec.env_overlay,
        spec.workdir.as_deref(),
        prepared.hooks,
    )?;
    let handle = jail.handle().expect("spawned");

    let stop_sampler = AtomicBool::new(false);
    let stop_watchdog = AtomicBool::new(false);
    let (sample_tx, sample_rx) = mpsc::channel::<SamplerMsg>();
    let (watchdog_tx, watchdog_rx) = mpsc::channel::<WatchdogMsg>();

    let mut termination: Option<TerminationReport> = None;
    // pid -> kernel start time, so liveness checks survive pid reuse.
    let mut escapees: BTreeMap<Pid, u64> = BTreeMap::new();
    let mut series: Vec<Sample> = Vec::new();

    let jail_ref = &jail;
    let inspector_ref = &inspector;
    let stop_sampler_ref = &stop_sampler;
    let stop_watchdog_ref = &stop_watchdog;
    let sample_interval = spec.telemetry.sample_interval;

    let job_exit = std::thread::scope(|scope| {
        scope.spawn(move || {
            run_sampler(
                jail_ref,
                inspector_ref,
                None,
                sample_interval,
                started,
                stop_sampler_ref,
                sample_tx,
            );
        });
        if let MemEnforcement::Polling {
            limit_bytes,
            interval,
        } = &enforcement
        {
            let (limit_bytes, interval) = (*limit_bytes, *interval);
            let tx = watchdog_tx.clone();
            scope.spawn(move || {
                run_polling_watchdog(
                    jail_ref,
                    inspector_ref,
                    limit_bytes,
                    interval,
                    stop_watchdog_ref,
                    tx,
                );
            });
        }
        drop(watchdog_tx);

        let mut watchdog_fired = false;
        let job_exit = loop {
            if let Some(status) = jail.try_wait_root() {
                break status;
            }
            for msg in sample_rx.try_iter() {
                series.push(msg.sample);
                for rec in &msg.escapees {
                    escapees.entry(rec.pid).or_insert(rec.start_time);
                }
            }
            if let Ok(WatchdogMsg::Exceeded {
                observed_bytes,
                limit_bytes,
                pids,
                at,
            }) = watchdog_rx.try_recv()
            {
                if !watchdog_fired {
                    watchdog_fired = true;
                    events.push(EnforcementEvent {
                        at_ms: elapsed_ms(at),
                        backend: MemBackendKind::Polling,
                        observed_bytes,
                        limit_bytes,
                        action: EnforcementAction::KilledJail,
                        affected_pids: pids,
                    });
                    merge_termination(&mut termination, jail.terminate(&inspector, spec.grace));
                }
            }
            if INTERRUPTED.swap(false, Ordering::SeqCst) {
                merge_termination(&mut termination, jail.terminate(&inspector, spec.grace));
            }
            std::thread::sleep(Duration::from_millis(15));
        };
        stop_watchdog.store(true, Ordering::Relaxed);

        // Catch last-instant escapes before the sweep closes the jail, then
        // terminate members on every path.
        if let Ok(escaped) = jail.detect_escapees(&inspector) {
            for rec in &escaped {
                escapees.entry(rec.pid).or_insert(rec.start_time);
            }
        }
        merge_termination(&mut termination, jail.terminate(&inspector, spec.grace));
        stop_sampler.store(true, Ordering::Relaxed);
        job_exit
    });
    for msg in sample_rx.try_iter() {
        series.push(msg.sample);
        for rec in &msg.escapees {
            escapees.entry(rec.pid).or_insert(rec.start_time);
        }
    }

    let escapees_alive = settle_escapees(&escapees, spec.on_escape);

    // Post-mortem events from kernel-side backends.
    match &enforcement {
        MemEnforcement::GroupController(controller) => {
            if controller.oom_kills() > 0 {
                events.push(EnforcementEvent {
                    at_ms: elapsed_ms(Instant::now()),
                    backend: MemBackendKind::GroupController,
                    observed_bytes: controller.peak_bytes().unwrap_or(0),
                    limit_bytes: controller.limit_bytes(),
                    action: EnforcementAction::KilledJail,
                    affected_pids: Vec::new(),
                });
            }
            let _ = controller.remove();
        }
        MemEnforcement::DataSegment { limit_bytes } => {
            // The kernel blocks over-limit growth inside the process; the
            // supervisor can only infer it from the job's failure.
            if !job_exit.success() {
                events.push(EnforcementEvent {
                    at_ms: elapsed_ms(Instant::now()),
                    backend: MemBackendKind::DataSegment,
                    observed_bytes: 0,
                    limit_bytes: *limit_bytes,
                    action: EnforcementAction::BlockedAtSource,
                    affected_pids: Vec::new(),
                });
            }
        }
        _ => {}
    }

    if series.is_empty() {
        // Sampler produced nothing (pathological); keep the report machinery
        // alive with one degraded sample.
        series.push(Sample {
            t_ms: elapsed_ms(Instant::now()),
            not_total: 0,
            main_cpu_id: 0,
            cpu_percent: 0.0,
            rss_total_bytes: 0,
            process_count: 0,
            zombie_count: 0,
            accel_util: None,
            degraded: true,
        });
    }
    let report = summarize(&series, &events, escapees.len()).expect("series nonempty");

    let export_error = match &spec.telemetry.output {
        Some(path) => {
            let meta = RunMeta {
                jail_id: handle.jail_id.clone(),
                backend: handle.backend.name().to_string(),
                cpuset: spec.limits.cpuset.as_ref().map(|c| c.to_string()),
                limits: LimitsMeta {
                    mem_limit_bytes: spec.limits.mem_limit_bytes,
                    mem_backend: spec.limits.mem_backend.map(|b| b.name().to_string()),
                    poll_interval_ms: Some(
                        spec.limits
                            .poll_interval
                            .unwrap_or(DEFAULT_POLL_INTERVAL)
                            .as_millis() as u64,
                    ),
                },
            };
            export(&series, &report, &meta, spec.telemetry.format, path)
                .err()
                .map(|e| e.to_string())
        }
        None => None,
    };

    Ok(RunOutcome {
        backend: handle.backend,
        jail_id: handle.jail_id,
        job_exit,
        termination: termination.unwrap_or_default(),
        enforcement_events: events,
        report,
        series,
        escapees_alive,
        export_error,
    })
}

/// True when the pid is alive, not a zombie, and still the same process the
/// tracker saw (matching start time).
fn escapee_alive(pid: Pid, start_time: u64) -> bool {
    let Ok(stat) = std::fs::read_to_string(format!("/proc/{pid}/stat")) else {
        return false;
    };
    if stat.contains(") Z ") {
        return false;
    }
    match jobjail_core::proc::stat_start_time(&stat) {
        Some(st) => st == start_time || start_time == 0,
        None => false,
    }
}

/// Applies the escape policy and reports which escapees are still alive.
/// Works from raw pid+start-time pairs so it stays valid after the jail has
/// been swept and closed.
fn settle_escapees(escapees: &BTreeMap<Pid, u64>, policy: OnEscape) -> Vec<Pid> {
    if escapees.is_empty() {
        return Vec::new();
    }
    if policy == OnEscape::Kill {
        for (&pid, &start) in escapees {
            if escapee_alive(pid, start) {
                unsafe { libc::kill(pid, libc::SIGKILL) };
            }
        }
        std::thread::sleep(Duration::from_millis(200));
    }
    escapees
        .iter()
        .filter(|(&pid, &start)| escapee_alive(pid, start))
        .map(|(&pid, _)| pid)
        .collect()
}
