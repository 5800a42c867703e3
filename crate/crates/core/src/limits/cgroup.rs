//! Group-controller memory backend over kernel control groups.
//!
//! Prefers a unified (v2) hierarchy with the memory controller available and
//! falls back to a legacy v1 memory hierarchy, which hybrid hosts still bind
//! memory to. `JOBJAIL_CGROUP_ROOT` overrides detection and may point at
//! either flavor; the node is always named `jobjail-<jail_id>` and removed
//! on cleanup.

use std::fs;
use std::io;
use std::os::fd::OwnedFd;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crate::error::LimitError;
use crate::proc::Pid;

pub const CGROUP_ROOT_ENV: &str = "JOBJAIL_CGROUP_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerVersion {
    V2,
    V1Memory,
}

impl ControllerVersion {
    pub fn name(self) -> &'static str {
        match self {
            ControllerVersion::V2 => "cgroup2",
            ControllerVersion::V1Memory => "cgroup-v1-memory",
        }
    }
}

fn classify_root(root: &Path) -> Option<ControllerVersion> {
    let controllers = root.join("cgroup.controllers");
    if controllers.is_file() {
        let list = fs::read_to_string(&controllers).unwrap_or_default();
        if list.split_whitespace().any(|c| c == "memory") {
            return Some(ControllerVersion::V2);
        }
        return None;
    }
    if root.join("memory.limit_in_bytes").is_file() {
        return Some(ControllerVersion::V1Memory);
    }
    None
}

/// Finds a hierarchy with a memory controller. An explicit
/// `JOBJAIL_CGROUP_ROOT` is authoritative: if it does not work, that is an
/// error, not a cue to scan elsewhere.
pub fn locate_hierarchy() -> Result<(ControllerVersion, PathBuf), LimitError> {
    if let Ok(env_root) = std::env::var(CGROUP_ROOT_ENV) {
        let root = PathBuf::from(env_root);
        return match classify_root(&root) {
            Some(version) => Ok((version, root)),
            None => Err(LimitError::ControllerUnavailable(format!(
                "{CGROUP_ROOT_ENV}={} has no usable memory controller",
                root.display()
            ))),
        };
    }
    let candidates = [
        PathBuf::from("/sys/fs/cgroup"),
        PathBuf::from("/sys/fs/cgroup/unified"),
        PathBuf::from("/sys/fs/cgroup/memory"),
    ];
    let mut seen = Vec::new();
    for root in candidates {
        if let Some(version) = classify_root(&root) {
            return Ok((version, root));
        }
        seen.push(root.display().to_string());
    }
    Err(LimitError::ControllerUnavailable(format!(
        "no hierarchy with a memory controller under {}",
        seen.join(", ")
    )))
}

/// One `jobjail-<id>` node with a memory limit attached.
pub struct GroupController {
    version: ControllerVersion,
    node: PathBuf,
    limit_bytes: u64,
    removed: std::sync::atomic::AtomicBool,
}

impl GroupController {
    pub fn create(jail_id: &str, limit_bytes: u64) -> Result<GroupController, LimitError> {
        let (version, root) = locate_hierarchy()?;
        let node = root.join(format!("jobjail-{jail_id}"));
        fs::create_dir(&node).map_err(|e| LimitError::Write {
            path: node.clone(),
            source: e,
        })?;
        let controller = GroupController {
            version,
            node,
            limit_bytes,
            removed: std::sync::atomic::AtomicBool::new(false),
        };
        let applied = match version {
            ControllerVersion::V2 => {
                // The parent must delegate the memory controller before
                // memory.max appears on the child.
                let _ = fs::write(root.join("cgroup.subtree_control"), "+memory");
                controller.write_file("memory.max", &limit_bytes.to_string())
            }
            ControllerVersion::V1Memory => {
                controller.write_file("memory.limit_in_bytes", &limit_bytes.to_string())
            }
        };
        if let Err(e) = applied {
            let _ = controller.remove();
            return Err(e);
        }
        Ok(controller)
    }

    pub fn version(&self) -> ControllerVersion {
        self.version
    }

    pub fn node_path(&self) -> &Path {
        &self.node
    }

    pub fn limit_bytes(&self) -> u64 {
        self.limit_bytes
    }

    fn write_file(&self, name: &str, value: &str) -> Result<(), LimitError> {
        let path = self.node.join(name);
        fs::write(&path, value).map_err(|e| LimitError::Write { path, source: e })
    }

    fn read_number(&self, name: &str) -> Option<u64> {
        fs::read_to_string(self.node.join(name))
            .ok()?
            .trim()
            .parse()
            .ok()
    }

    /// Open fd on the node's `cgroup.procs`; the spawn hook writes the child
    /// into it before exec so every allocation is charged here.
    pub fn procs_fd(&self) -> Result<OwnedFd, LimitError> {
        let path = self.node.join("cgroup.procs");
        fs::OpenOptions::new()
            .write(true)
            .open(&path)
            .map(OwnedFd::from)
            .map_err(|e| LimitError::Write { path, source: e })
    }

    pub fn current_bytes(&self) -> Option<u64> {
        match self.version {
            ControllerVersion::V2 => self.read_number("memory.current"),
            ControllerVersion::V1Memory => self.read_number("memory.usage_in_bytes"),
        }
    }

    /// High-water mark of charged memory.
    pub fn peak_bytes(&self) -> Option<u64> {
        match self.version {
            ControllerVersion::V2 => self.read_number("memory.peak"),
            ControllerVersion::V1Memory => self.read_number("memory.max_usage_in_bytes"),
        }
    }

    /// Number of OOM kills the kernel performed in this node.
    pub fn oom_kills(&self) -> u64 {
        let (file, key) = match self.version {
            ControllerVersion::V2 => ("memory.events", "oom_kill"),
            ControllerVersion::V1Memory => ("memory.oom_control", "oom_kill"),
        };
        let Ok(text) = fs::read_to_string(self.node.join(file)) else {
            return 0;
        };
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix(key) {
                if let Ok(n) = rest.trim().parse() {
                    return n;
                }
            }
        }
        0
    }

    pub fn member_pids(&self) -> Vec<Pid> {
        let Ok(text) = fs::read_to_string(self.node.join("cgroup.procs")) else {
            return Vec::new();
        };
        text.lines().filter_map(|l| l.trim().parse().ok()).collect()
    }

    /// Kills any stragglers and removes the node. Retries briefly: the
    /// kernel reports EBUSY until exiting members are fully gone.
    pub fn remove(&self) -> Result<(), LimitError> {
        use std::sync::atomic::Ordering;
        if self.removed.swap(true, Ordering::SeqCst) {
            return Ok(());
        }
        if self.version == ControllerVersion::V2 {
            let _ = fs::write(self.node.join("cgroup.kill"), "1");
        }
        for pid in self.member_pids() {
            unsafe { libc::kill(pid, libc::SIGKILL) };
        }
        let deadline = Instant::now() + Duration::from_secs(3);
        loop {
            match fs::remove_dir(&self.node) {
                Ok(()) => return Ok(()),
                Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(()),
                Err(e) => {
                    if Instant::now() >= deadline {
                        return Err(LimitError::Write {
                            path: self.node.clone(),
                            source: e,
                        });
                    }
                    for pid in self.member_pids() {
                        unsafe { libc::kill(pid, libc::SIGKILL) };
                    }
                    std::thread::sleep(Duration::from_millis(50));
                }
            }
        }
    }
}

impl Drop for GroupController {
    fn drop(&mut self) {
        let _ = self.remove();
    }
}
