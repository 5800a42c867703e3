//! Periodic sampling of jail process state and report rendering.
//!
//! Each tick folds one full-system snapshot into the jail's tracker and
//! derives a [`Sample`]: total thread count (NoT), the root's current CPU,
//! aggregate CPU utilization from cpu-time deltas (100% = one core), RSS and
//! process/zombie counts, plus an optional accelerator reading. Samples are
//! immutable once emitted; a vanishing process mid-read degrades the sample
//! instead of dropping it, keeping the series dense.

mod export;

pub use export::{
    export, import_csv, import_json, ExportDoc, ExportFormat, LimitsMeta, RunMeta, SampleRow,
    CSV_HEADER,
};

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::Sender;
use std::time::{Duration, Instant};

use crate::error::TelemetryError;
use crate::jail::Jail;
use crate::limits::EnforcementEvent;
use crate::proc::{
    read_table_degraded, Pid, ProcState, ProcessInspector, ProcessRecord, ProcessTable,
    SimulatedInspector,
};

pub const DEFAULT_SAMPLE_INTERVAL: Duration = Duration::from_millis(500);

/// One telemetry tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t_ms: u64,
    /// Sum of thread counts over members (the job's NoT).
    pub not_total: u32,
    /// CPU the root process last ran on; holds its last value once the root
    /// is gone.
    pub main_cpu_id: u32,
    /// Aggregate utilization over the previous interval; 100 per busy core.
    /// The first sample has no delta basis and reads 0.
    pub cpu_percent: f64,
    pub rss_total_bytes: u64,
    pub process_count: u32,
    pub zombie_count: u32,
    pub accel_util: Option<f64>,
    pub degraded: bool,
}

/// Carry-over between ticks: previous per-pid cpu times and clock anchors.
#[derive(Debug)]
pub struct SamplerState {
    started: Instant,
    prev_wall: Option<Instant>,
    prev_cpu_ms: HashMap<Pid, u64>,
    last_main_cpu: u32,
    ticks: usize,
}

impl SamplerState {
    pub fn new(started: Instant) -> SamplerState {
        SamplerState {
            started,
            prev_wall: None,
            prev_cpu_ms: HashMap::new(),
            last_main_cpu: 0,
            ticks: 0,
        }
    }

    pub fn ticks(&self) -> usize {
        self.ticks
    }
}

/// Derives a sample from a member table. Pure bookkeeping: no clock reads,
/// no process access, so scripted tables reproduce traces exactly.
pub fn build_sample(
    members: &ProcessTable,
    root_pid: Pid,
    state: &mut SamplerState,
    now: Instant,
    accel_util: Option<f64>,
    degraded: bool,
) -> Sample {
    let records = members.records();
    let not_total: u32 = records.iter().map(|r| r.thread_count).sum();
    let zombie_count = records.iter().filter(|r| r.state == ProcState::Zombie).count() as u32;
    let rss_total_bytes: u64 = records
        .iter()
        .filter(|r| r.state != ProcState::Zombie)
        .map(|r| r.rss_bytes)
        .sum();
    if let Some(root) = members.get(root_pid) {
        state.last_main_cpu = root.cpu_id;
    }

    // New pids contribute their whole cpu time: it accrued since the last
    // tick by definition (modulo pid reuse, which the tracker filters).
    let cpu_ms_delta: u64 = records
        .iter()
        .map(|r| {
            let prev = state.prev_cpu_ms.get(&r.pid).copied().unwrap_or(0);
            r.cpu_time_ms.saturating_sub(prev)
        })
        .sum();
    let cpu_percent = match state.prev_wall {
        Some(prev) => {
            let wall_ms = now.duration_since(prev).as_millis() as u64;
            if wall_ms == 0 {
                0.0
            } else {
                100.0 * cpu_ms_delta as f64 / wall_ms as f64
            }
        }
        None => 0.0,
    };
    state.prev_wall = Some(now);
    state.prev_cpu_ms = records.iter().map(|r| (r.pid, r.cpu_time_ms)).collect();
    state.ticks += 1;

    Sample {
        t_ms: now.duration_since(state.started).as_millis() as u64,
        not_total,
        main_cpu_id: state.last_main_cpu,
        cpu_percent,
        rss_total_bytes,
        process_count: records.len() as u32,
        zombie_count,
        accel_util,
        degraded,
    }
}

/// Optional accelerator utilization source. Exactly one implementation
/// ships: a deterministic mock driven by scenario files.
pub trait AccelSampler: Send + Sync {
    fn sample(&self, tick: usize) -> Option<f64>;
}

/// Mock accelerator fed by `tick;accel=NN` scenario lines or explicit pairs.
pub struct MockAccelSampler {
    values: HashMap<usize, f64>,
}

impl MockAccelSampler {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, f64)>) -> MockAccelSampler {
        MockAccelSampler {
            values: pairs.into_iter().collect(),
        }
    }

    pub fn from_scenario(sim: &SimulatedInspector) -> MockAccelSampler {
        let values = (0..sim.tick_count())
            .filter_map(|t| sim.accel_at(t).map(|v| (t, v)))
            .collect();
        MockAccelSampler { values }
    }
}

impl AccelSampler for MockAccelSampler {
    fn sample(&self, tick: usize) -> Option<f64> {
        self.values.get(&tick).copied()
    }
}

/// One sampler tick against a live jail: snapshot, fold into the tracker,
/// derive the sample and current escapees.
pub struct Sampler<'a> {
    jail: &'a Jail,
    inspector: &'a dyn ProcessInspector,
    accel: Option<&'a dyn AccelSampler>,
    state: SamplerState,
}

impl<'a> Sampler<'a> {
    pub fn new(
        jail: &'a Jail,
        inspector: &'a dyn ProcessInspector,
        accel: Option<&'a dyn AccelSampler>,
        started: Instant,
    ) -> Sampler<'a> {
        Sampler {
            jail,
            inspector,
            accel,
            state: SamplerState::new(started),
        }
    }

    pub fn tick(&mut self) -> Result<(Sample, Vec<ProcessRecord>), TelemetryError> {
        let (full, degraded) = read_table_degraded(self.inspector).map_err(|e| {
            TelemetryError::Parse {
                format: "procfs",
                line: 0,
                reason: e.to_string(),
            }
        })?;
        let view = self.jail.observe(&full).map_err(|e| TelemetryError::Parse {
            format: "jail",
            line: 0,
            reason: e.to_string(),
        })?;
        let root = self.jail.root_pid().unwrap_or(0);
        let accel = self.accel.and_then(|a| a.sample(self.state.ticks));
        let sample = build_sample(
            &view.members,
            root,
            &mut self.state,
            Instant::now(),
            accel,
            degraded,
        );
        Ok((sample, view.escapees))
    }
}

/// Message from the sampler task to the control loop.
#[derive(Debug, Clone)]
pub struct SamplerMsg {
    pub sample: Sample,
    pub escapees: Vec<ProcessRecord>,
}

/// Periodic sampling loop; runs until `stop` goes true, then emits one final
/// sample so short jobs still get a data point.
pub fn run_sampler(
    jail: &Jail,
    inspector: &dyn ProcessInspector,
    accel: Option<&dyn AccelSampler>,
    interval: Duration,
    started: Instant,
    stop: &AtomicBool,
    tx: Sender<SamplerMsg>,
) {
    let mut sampler = Sampler::new(jail, inspector, accel, started);
    let step = Duration::from_millis(10).min(interval);
    let mut next_tick = Instant::now();
    loop {
        let stopping = stop.load(Ordering::Relaxed);
        if Instant::now() >= next_tick || stopping {
            if let Ok((sample, escapees)) = sampler.tick() {
                if tx.send(SamplerMsg { sample, escapees }).is_err() {
                    return;
                }
            }
            if stopping {
                return;
            }
            next_tick += interval;
        }
        std::thread::sleep(step);
    }
}

/// Plays a whole scenario through the sampler bookkeeping, one tick per
/// scripted table, with synthetic timestamps `tick * interval`. This is the
/// reference path for scripted reproductions.
pub fn sample_scenario(sim: &SimulatedInspector, root_pid: Pid, interval: Duration) -> Vec<Sample> {
    let started = Instant::now();
    let mut state = SamplerState::new(started);
    let mut out = Vec::new();
    for tick in 0..sim.tick_count() {
        let Ok(table) = sim.read_table() else { break };
        let sample = build_sample(
            &table,
            root_pid,
            &mut state,
            started + interval * tick as u32,
            sim.accel_at(tick),
            false,
        );
        out.push(sample);
    }
    out
}

/// Summary statistics over a finished series.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Report {
    pub runtime_ms: u64,
    pub not_min: u32,
    pub not_max: u32,
    /// Mode of the NoT series; ties break to the value seen first.
    pub not_mode: u32,
    /// Mean/stdev skip the first sample (its cpu_percent is 0 by
    /// definition) unless it is the only one. Stdev is population stdev.
    pub cpu_percent_mean: f64,
    pub cpu_percent_stdev: f64,
    pub peak_rss_bytes: u64,
    pub main_cpu_distinct: usize,
    /// cpu_id → dwell milliseconds, attributed by inter-sample spacing.
    pub main_cpu_dwell_ms: std::collections::BTreeMap<u32, u64>,
    pub enforcement_events: Vec<EnforcementEvent>,
    pub escapee_count: usize,
}

/// Deterministic aggregation of a sample series plus enforcement outcomes.
pub fn summarize(
    series: &[Sample],
    events: &[EnforcementEvent],
    escapee_count: usize,
) -> Result<Report, TelemetryError> {
    if series.is_empty() {
        return Err(TelemetryError::EmptySeries);
    }
    let not_min = series.iter().map(|s| s.not_total).min().unwrap();
    let not_max = series.iter().map(|s| s.not_total).max().unwrap();
    let not_mode = first_encountered_mode(series.iter().map(|s| s.not_total));

    let cpu_values: Vec<f64> = if series.len() > 1 {
        series[1..].iter().map(|s| s.cpu_percent).collect()
    } else {
        series.iter().map(|s| s.cpu_percent).collect()
    };
    let n = cpu_values.len() as f64;
    let mean = cpu_values.iter().sum::<f64>() / n;
    let var = cpu_values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;

    let mut dwell: std::collections::BTreeMap<u32, u64> = std::collections::BTreeMap::new();
    let mut prev_t = 0u64;
    for s in series {
        *dwell.entry(s.main_cpu_id).or_default() += s.t_ms.saturating_sub(prev_t);
        prev_t = s.t_ms;
    }

    Ok(Report {
        runtime_ms: series.last().unwrap().t_ms,
        not_min,
        not_max,
        not_mode,
        cpu_percent_mean: mean,
        cpu_percent_stdev: var.sqrt(),
        peak_rss_bytes: series.iter().map(|s| s.rss_total_bytes).max().unwrap(),
        main_cpu_distinct: {
            let mut ids: Vec<u32> = series.iter().map(|s| s.main_cpu_id).collect();
            ids.sort_unstable();
            ids.dedup();
            ids.len()
        },
        main_cpu_dwell_ms: dwell,
        enforcement_events: events.to_vec(),
        escapee_count,
    })
}

fn first_encountered_mode(values: impl Iterator<Item = u32>) -> u32 {
    let mut counts: Vec<(u32, usize)> = Vec::new();
    for v in values {
        match counts.iter_mut().find(|(val, _)| *val == v) {
            Some((_, c)) => *c += 1,
            None => counts.push((v, 1)),
        }
    }
    // counts is in first-encounter order; replace only on strictly greater
    // so ties keep the earliest value.
    let mut best: Option<(u32, usize)> = None;
    for &(v, c) in &counts {
        if best.map(|(_, bc)| c > bc).unwrap_or(true) {
            best = Some((v, c));
        }
    }
    best.map(|(v, _)| v).unwrap_or(0)
}
