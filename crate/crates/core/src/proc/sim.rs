use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use crate::error::InspectError;
use crate::proc::{ProcState, ProcessInspector, ProcessRecord, ProcessTable};

/// Scripted snapshot playback for tests and the mock accelerator sampler.
///
/// Scenario files are line oriented; each line is one process record for one
/// tick:
///
/// ```text
/// tick;pid,ppid,pgid,state,threads,cpu_id,cpu_time_ms,rss
/// ```
///
/// `state` is one of `R`, `S`, `Z`, `T`. Two extension line forms exist:
/// `tick;accel=<percent>` feeds the mock accelerator sampler, and a
/// `cpus;<n>` header pins the simulated host CPU count (default: one more
/// than the largest cpu_id). Successive `read_table` calls return successive
/// ticks; the final tick repeats once the script runs out.
pub struct SimulatedInspector {
    ticks: Vec<Vec<ProcessRecord>>,
    accel: BTreeMap<usize, f64>,
    cpu_count: usize,
    cursor: Mutex<usize>,
}

impl SimulatedInspector {
    pub fn from_tables(ticks: Vec<Vec<ProcessRecord>>, cpu_count: usize) -> SimulatedInspector {
        SimulatedInspector {
            ticks,
            accel: BTreeMap::new(),
            cpu_count,
            cursor: Mutex::new(0),
        }
    }

    pub fn parse(text: &str) -> Result<SimulatedInspector, InspectError> {
        let mut ticks: BTreeMap<usize, Vec<ProcessRecord>> = BTreeMap::new();
        let mut accel = BTreeMap::new();
        let mut cpus: Option<usize> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: &str| InspectError::BadScenario {
                line: n + 1,
                reason: reason.to_string(),
            };
            let (head, rest) = line.split_once(';').ok_or_else(|| bad("missing ';'"))?;
            if head == "cpus" {
                cpus = Some(rest.trim().parse().map_err(|_| bad("bad cpu count"))?);
                continue;
            }
            let tick: usize = head.trim().parse().map_err(|_| bad("bad tick"))?;
            if let Some(v) = rest.trim().strip_prefix("accel=") {
                let pct: f64 = v.parse().map_err(|_| bad("bad accel value"))?;
                accel.insert(tick, pct);
                continue;
            }
            let fields: Vec<&str> = rest.split(',').map(str::trim).collect();
            if fields.len() != 8 {
                return Err(bad("expected pid,ppid,pgid,state,threads,cpu_id,cpu_time_ms,rss"));
            }
            let state = match fields[3] {
                "R" => ProcState::Running,
                "S" => ProcState::Sleeping,
                "Z" => ProcState::Zombie,
                "T" => ProcState::Stopped,
                _ => return Err(bad("state must be R, S, Z or T")),
            };
            let num = |i: usize| -> Result<u64, InspectError> {
                fields[i].parse().map_err(|_| InspectError::BadScenario {
                    line: n + 1,
                    reason: format!("bad numeric field {}", i + 1),
                })
            };
            ticks.entry(tick).or_default().push(ProcessRecord {
                pid: num(0)? as i32,
                ppid: num(1)? as i32,
                pgid: num(2)? as i32,
                owner_uid: 0,
                state,
                thread_count: num(4)? as u32,
                cpu_id: num(5)? as u32,
                cpu_time_ms: num(6)?,
                rss_bytes: num(7)?,
                start_time: 0,
                comm: format!("sim-{}", fields[0]),
                pid_ns: None,
            });
        }
        let max_cpu = ticks
            .values()
            .flatten()
            .map(|r| r.cpu_id as usize)
            .max()
            .unwrap_or(0);
        Ok(SimulatedInspector {
            ticks: ticks.into_values().collect(),
            accel,
            cpu_count: cpus.unwrap_or(max_cpu + 1),
            cursor: Mutex::new(0),
        })
    }

    pub fn load(path: &Path) -> Result<SimulatedInspector, InspectError> {
        let text = std::fs::read_to_string(path).map_err(|e| InspectError::Unreadable {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text)
    }

    pub fn tick_count(&self) -> usize {
        self.ticks.len()
    }

    /// Scripted accelerator utilization for a tick, if the scenario set one.
    pub fn accel_at(&self, tick: usize) -> Option<f64> {
        self.accel.get(&tick).copied()
    }

    /// The tick the *next* `read_table` call will serve.
    pub fn position(&self) -> usize {
        *self.cursor.lock().unwrap()
    }
}

impl ProcessInspector for SimulatedInspector {
    fn read_table(&self) -> Result<ProcessTable, InspectError> {
        if self.ticks.is_empty() {
            return Err(InspectError::ScenarioExhausted);
        }
        let mut cursor = self.cursor.lock().unwrap();
        let idx = (*cursor).min(self.ticks.len() - 1);
        *cursor += 1;
        Ok(ProcessTable::new(Instant::now(), self.ticks[idx].clone()))
    }

    fn host_cpu_count(&self) -> usize {
        self.cpu_count
    }
}
