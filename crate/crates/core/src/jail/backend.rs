use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use crate::error::JailError;

/// How a jail holds on to its processes, strongest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IsolationBackend {
    /// Fresh PID namespace; the job is pid 1 inside, leaving is impossible.
    PidNamespace,
    /// New process group plus the supervisor marked as child subreaper, so
    /// orphans re-parent to the supervisor instead of init.
    Subreaper,
    /// New process group only.
    ProcessGroup,
}

impl IsolationBackend {
    pub fn name(self) -> &'static str {
        match self {
            IsolationBackend::PidNamespace => "pid-namespace",
            IsolationBackend::Subreaper => "subreaper",
            IsolationBackend::ProcessGroup => "process-group",
        }
    }
}

impl fmt::Display for IsolationBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IsolationBackend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pidns" | "pid-namespace" | "pid_namespace" => Ok(IsolationBackend::PidNamespace),
            "subreaper" => Ok(IsolationBackend::Subreaper),
            "pg" | "pgroup" | "process-group" | "process_group" => {
                Ok(IsolationBackend::ProcessGroup)
            }
            other => Err(format!("unknown backend: {other}")),
        }
    }
}

/// Probes whether this host lets us create a PID namespace, by performing a
/// throwaway clone. Cached for the process lifetime.
pub fn pid_namespace_supported() -> Result<(), String> {
    static PROBE: OnceLock<Result<(), String>> = OnceLock::new();
    PROBE
        .get_or_init(|| {
            let flags = libc::SIGCHLD as libc::c_ulong | (libc::CLONE_NEWPID as libc::c_ulong);
            let pid =
                unsafe { libc::syscall(libc::SYS_clone, flags, 0usize, 0usize, 0usize, 0usize) };
            match pid {
                -1 => Err(std::io::Error::last_os_error().to_string()),
                0 => unsafe { libc::_exit(0) },
                pid => {
                    let _ = nix::sys::wait::waitpid(nix::unistd::Pid::from_raw(pid as i32), None);
                    Ok(())
                }
            }
        })
        .clone()
}

/// Probes for the child-subreaper process attribute.
pub fn subreaper_supported() -> Result<(), String> {
    let mut val: libc::c_int = 0;
    let rc = unsafe { libc::prctl(libc::PR_GET_CHILD_SUBREAPER, &mut val as *mut libc::c_int) };
    if rc == 0 {
        Ok(())
    } else {
        Err(std::io::Error::last_os_error().to_string())
    }
}

pub fn backend_supported(backend: IsolationBackend) -> Result<(), JailError> {
    let check = match backend {
        IsolationBackend::PidNamespace => pid_namespace_supported(),
        IsolationBackend::Subreaper => subreaper_supported(),
        IsolationBackend::ProcessGroup => Ok(()),
    };
    check.map_err(|reason| JailError::BackendUnsupported {
        backend: backend.name(),
        reason,
    })
}

/// Strongest backend this host supports.
pub fn default_backend() -> IsolationBackend {
    if pid_namespace_supported().is_ok() {
        IsolationBackend::PidNamespace
    } else if subreaper_supported().is_ok() {
        IsolationBackend::Subreaper
    } else {
        IsolationBackend::ProcessGroup
    }
}

// The child-subreaper attribute is process-wide; jails refcount it so a
// supervisor running several jails (tests, mostly) clears it only when the
// last one is gone.
static SUBREAPER_JAILS: AtomicUsize = AtomicUsize::new(0);

pub(crate) struct SubreaperGuard;

impl SubreaperGuard {
    pub(crate) fn acquire() -> Result<SubreaperGuard, JailError> {
        let rc = unsafe { libc::prctl(libc::PR_SET_CHILD_SUBREAPER, 1, 0, 0, 0) };
        if rc != 0 {
            return Err(JailError::Os {
                op: "prctl(PR_SET_CHILD_SUBREAPER)",
                source: std::io::Error::last_os_error(),
            });
        }
        SUBREAPER_JAILS.fetch_add(1, Ordering::SeqCst);
        Ok(SubreaperGuard)
    }
}

impl Drop for SubreaperGuard {
    fn drop(&mut self) {
        if SUBREAPER_JAILS.fetch_sub(1, Ordering::SeqCst) == 1 {
            unsafe { libc::prctl(libc::PR_SET_CHILD_SUBREAPER, 0, 0, 0, 0) };
        }
    }
}
