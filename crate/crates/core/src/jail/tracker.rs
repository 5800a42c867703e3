use std::collections::{HashMap, HashSet};

use crate::proc::{Pid, ProcessRecord, ProcessTable};

/// What the tracker remembers about a process it has seen.
#[derive(Debug, Clone)]
pub struct TrackedProc {
    pub start_time: u64,
    pub first_ppid: Pid,
    pub last_ppid: Pid,
    /// Ever observed with a parent that was not an orphan destination.
    pub had_real_parent: bool,
}

/// Historical membership, fed by successive full-system snapshots.
///
/// Each update seeds from the backend's native members plus everything
/// already tracked and still alive, then closes over parent links within the
/// snapshot: a child of a tracked process is tracked from the moment it is
/// seen, even if it immediately left the backend's domain. Start times guard
/// against pid reuse.
#[derive(Debug, Default)]
pub struct Tracker {
    history: HashMap<Pid, TrackedProc>,
}

impl Tracker {
    /// Folds a snapshot in. `native` are the pids the backend identifies as
    /// members; `orphan_parents` are pids orphans get re-parented to (init,
    /// plus the supervisor under a subreaper). Returns the set of tracked
    /// pids alive in this snapshot.
    pub fn update(
        &mut self,
        table: &ProcessTable,
        native: &HashSet<Pid>,
        orphan_parents: &[Pid],
    ) -> HashSet<Pid> {
        let mut alive: HashSet<Pid> = HashSet::new();
        for rec in table.records() {
            let known = match self.history.get(&rec.pid) {
                Some(t) => t.start_time == rec.start_time,
                None => false,
            };
            if known || native.contains(&rec.pid) {
                alive.insert(rec.pid);
            }
        }
        // Lineage closure: children (and their children) of tracked
        // processes join the tracked set.
        loop {
            let mut grew = false;
            for rec in table.records() {
                if !alive.contains(&rec.pid) && alive.contains(&rec.ppid) {
                    alive.insert(rec.pid);
                    grew = true;
                }
            }
            if !grew {
                break;
            }
        }
        for rec in table.records() {
            if !alive.contains(&rec.pid) {
                continue;
            }
            let real_parent = !orphan_parents.contains(&rec.ppid);
            self.history
                .entry(rec.pid)
                .and_modify(|t| {
                    t.last_ppid = rec.ppid;
                    t.had_real_parent |= real_parent;
                })
                .or_insert(TrackedProc {
                    start_time: rec.start_time,
                    first_ppid: rec.ppid,
                    last_ppid: rec.ppid,
                    had_real_parent: real_parent,
                });
        }
        alive
    }

    pub fn seed(&mut self, pid: Pid, start_time: u64, ppid: Pid) {
        self.history.entry(pid).or_insert(TrackedProc {
            start_time,
            first_ppid: ppid,
            last_ppid: ppid,
            had_real_parent: true,
        });
    }

    pub fn get(&self, pid: Pid) -> Option<&TrackedProc> {
        self.history.get(&pid)
    }

    pub fn is_tracked(&self, rec: &ProcessRecord) -> bool {
        self.history
            .get(&rec.pid)
            .map(|t| t.start_time == rec.start_time)
            .unwrap_or(false)
    }
}
