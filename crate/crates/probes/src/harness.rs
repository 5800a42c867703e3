//! Helpers for tests that drive probes: side-channel collection and
//! process-liveness checks against ground truth.

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use crate::SIDECHANNEL_ENV;

/// A temp side-channel file plus the env overlay that points probes at it.
pub struct SideChannel {
    dir: Option<tempfile_dir::TempDir>,
    path: PathBuf,
}

// Minimal self-managed temp dir so the fixtures crate stays dependency-free.
mod tempfile_dir {
    use std::path::{Path, PathBuf};
    use std::sync::atomic::{AtomicU64, Ordering};

    pub struct TempDir(PathBuf);

    static SEQ: AtomicU64 = AtomicU64::new(0);

    impl TempDir {
        pub fn new() -> std::io::Result<TempDir> {
            let n = SEQ.fetch_add(1, Ordering::Relaxed);
            let path = std::env::temp_dir().join(format!(
                "jobjail-harness-{}-{n}",
                std::process::id()
            ));
            std::fs::create_dir_all(&path)?;
            Ok(TempDir(path))
        }

        pub fn path(&self) -> &Path {
            &self.0
        }
    }

    impl Drop for TempDir {
        fn drop(&mut self) {
            let _ = std::fs::remove_dir_all(&self.0);
        }
    }
}

impl SideChannel {
    pub fn new() -> SideChannel {
        let dir = tempfile_dir::TempDir::new().expect("temp dir");
        let path = dir.path().join("pids");
        SideChannel {
            dir: Some(dir),
            path,
        }
    }

    pub fn path(&self) -> &PathBuf {
        &self.path
    }

    pub fn env(&self) -> BTreeMap<String, String> {
        let mut env = BTreeMap::new();
        env.insert(SIDECHANNEL_ENV.to_string(), self.path.display().to_string());
        env
    }

    pub fn lines(&self) -> Vec<String> {
        std::fs::read_to_string(&self.path)
            .unwrap_or_default()
            .lines()
            .map(str::to_string)
            .collect()
    }

    /// All pids ever reported.
    pub fn pids(&self) -> HashSet<i32> {
        self.lines()
            .iter()
            .filter_map(|l| l.split_whitespace().next()?.parse().ok())
            .collect()
    }

    /// Pids whose note contains the marker.
    pub fn pids_matching(&self, marker: &str) -> HashSet<i32> {
        self.lines()
            .iter()
            .filter(|l| l.contains(marker))
            .filter_map(|l| l.split_whitespace().next()?.parse().ok())
            .collect()
    }

    pub fn wait_for(&self, timeout: Duration, pred: impl Fn(&[String]) -> bool) -> bool {
        let deadline = Instant::now() + timeout;
        while Instant::now() < deadline {
            if pred(&self.lines()) {
                return true;
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        false
    }
}

impl Default for SideChannel {
    fn default() -> Self {
        SideChannel::new()
    }
}

impl Drop for SideChannel {
    fn drop(&mut self) {
        self.dir.take();
    }
}

/// Alive and not a zombie.
pub fn pid_alive(pid: i32) -> bool {
    match std::fs::read_to_string(format!("/proc/{pid}/stat")) {
        Ok(text) => !text.contains(") Z "),
        Err(_) => false,
    }
}

pub fn comm_of(pid: i32) -> Option<String> {
    std::fs::read_to_string(format!("/proc/{pid}/comm"))
        .ok()
        .map(|s| s.trim().to_string())
}

/// Pids of live processes whose comm starts with the prefix.
pub fn scan_comm_prefix(prefix: &str) -> Vec<i32> {
    let mut out = Vec::new();
    let Ok(entries) = std::fs::read_dir("/proc") else {
        return out;
    };
    for entry in entries.flatten() {
        let Some(pid) = entry
            .file_name()
            .to_str()
            .and_then(|s| s.parse::<i32>().ok())
        else {
            continue;
        };
        if let Some(comm) = comm_of(pid) {
            if comm.starts_with(prefix) && pid_alive(pid) {
                out.push(pid);
            }
        }
    }
    out
}

/// Kills every pid then waits for them to vanish.
pub fn kill_and_wait(pids: &HashSet<i32>, timeout: Duration) -> Vec<i32> {
    for &pid in pids {
        unsafe { libc::kill(pid, libc::SIGKILL) };
    }
    let deadline = Instant::now() + timeout;
    loop {
        let alive: Vec<i32> = pids.iter().copied().filter(|&p| pid_alive(p)).collect();
        if alive.is_empty() || Instant::now() >= deadline {
            return alive;
        }
        std::thread::sleep(Duration::from_millis(25));
    }
}
