use std::io;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use crate::error::InspectError;
use crate::proc::{Pid, ProcState, ProcessInspector, ProcessRecord, ProcessTable};

fn clk_tck() -> u64 {
    static TCK: OnceLock<u64> = OnceLock::new();
    *TCK.get_or_init(|| {
        let v = unsafe { libc::sysconf(libc::_SC_CLK_TCK) };
        if v > 0 {
            v as u64
        } else {
            100
        }
    })
}

fn page_size() -> u64 {
    static PAGE: OnceLock<u64> = OnceLock::new();
    *PAGE.get_or_init(|| {
        let v = unsafe { libc::sysconf(libc::_SC_PAGESIZE) };
        if v > 0 {
            v as u64
        } else {
            4096
        }
    })
}

/// Reads full-system snapshots from a proc filesystem.
///
/// The mount root is configurable so tests can point it at a fabricated
/// tree. Processes that vanish mid-scan are skipped silently; reads that
/// fail for any other reason degrade the snapshot instead of losing it.
pub struct ProcfsInspector {
    root: PathBuf,
}

impl Default for ProcfsInspector {
    fn default() -> Self {
        ProcfsInspector::new("/proc")
    }
}

impl ProcfsInspector {
    pub fn new(root: impl Into<PathBuf>) -> ProcfsInspector {
        ProcfsInspector { root: root.into() }
    }

    fn read_record(&self, pid: Pid) -> io::Result<ProcessRecord> {
        let dir = self.root.join(pid.to_string());
        let stat = std::fs::read_to_string(dir.join("stat"))?;
        let mut rec = parse_stat_line(&stat)
            .ok_or_else(|| io::Error::other(format!("malformed stat for pid {pid}")))?;
        rec.owner_uid = std::fs::metadata(&dir)
            .map(|m| std::os::unix::fs::MetadataExt::uid(&m))
            .unwrap_or(0);
        rec.pid_ns = read_ns_inode(&dir);
        Ok(rec)
    }
}

fn read_ns_inode(proc_dir: &Path) -> Option<u64> {
    let link = std::fs::read_link(proc_dir.join("ns/pid")).ok()?;
    let s = link.to_str()?;
    // "pid:[4026531836]"
    let inner = s.strip_prefix("pid:[")?.strip_suffix(']')?;
    inner.parse().ok()
}

/// Parses one /proc/<pid>/stat line. The comm field may contain spaces and
/// parentheses, so the split anchors on the *last* ')'.
pub(crate) fn parse_stat_line(stat: &str) -> Option<ProcessRecord> {
    let open = stat.find('(')?;
    let close = stat.rfind(')')?;
    let pid: Pid = stat[..open].trim().parse().ok()?;
    let comm = stat[open + 1..close].to_string();
    let rest: Vec<&str> = stat[close + 1..].split_whitespace().collect();
    // rest[0] is overall field 3 (state); stat(5) numbers fields from 1.
    let field = |n: usize| -> Option<&str> { rest.get(n - 3).copied() };
    let state = ProcState::from_stat_char(field(3)?.chars().next()?);
    let ppid: Pid = field(4)?.parse().ok()?;
    let pgid: Pid = field(5)?.parse().ok()?;
    let utime: u64 = field(14)?.parse().ok()?;
    let stime: u64 = field(15)?.parse().ok()?;
    let thread_count: u32 = field(20)?.parse().ok()?;
    let start_time: u64 = field(22)?.parse().ok()?;
    let rss_pages: u64 = field(24)?.parse().ok()?;
    let cpu_id: u32 = field(39).and_then(|f| f.parse().ok()).unwrap_or(0);
    Some(ProcessRecord {
        pid,
        ppid,
        pgid,
        owner_uid: 0,
        state,
        thread_count,
        cpu_id,
        cpu_time_ms: (utime + stime) * 1000 / clk_tck(),
        rss_bytes: rss_pages * page_size(),
        start_time,
        comm,
        pid_ns: None,
    })
}

impl ProcessInspector for ProcfsInspector {
    fn read_table(&self) -> Result<ProcessTable, InspectError> {
        let taken_at = Instant::now();
        let entries = std::fs::read_dir(&self.root).map_err(|e| InspectError::Unreadable {
            path: self.root.clone(),
            source: e,
        })?;
        let mut records = Vec::new();
        let mut failures: Vec<String> = Vec::new();
        for entry in entries.flatten() {
            let name = entry.file_name();
            let Some(pid) = name.to_str().and_then(|s| s.parse::<Pid>().ok()) else {
                continue;
            };
            match self.read_record(pid) {
                Ok(rec) => records.push(rec),
                // Gone between readdir and open: normal churn.
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(e) if e.raw_os_error() == Some(libc::ESRCH) => {}
                Err(e) => failures.push(format!("pid {pid}: {e}")),
            }
        }
        let table = ProcessTable::new(taken_at, records);
        if failures.is_empty() {
            Ok(table)
        } else {
            Err(InspectError::PartialTable {
                table: Box::new(table),
                reason: failures.join("; "),
            })
        }
    }

    fn host_cpu_count(&self) -> usize {
        let n = unsafe { libc::sysconf(libc::_SC_NPROCESSORS_ONLN) };
        if n > 0 {
            n as usize
        } else {
            1
        }
    }
}
