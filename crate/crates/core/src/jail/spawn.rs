//! Low-level job launch: fork/clone with async-signal-safe child setup.
//!
//! The child path between fork and exec may only touch raw syscalls; every
//! buffer (argv, envp, cpu mask, error pipe) is prepared in the parent
//! beforehand. Exec failures travel back over a CLOEXEC pipe so the parent
//! can distinguish "job started" from "never ran".

use std::collections::BTreeMap;
use std::ffi::{CString, OsString};
use std::io;
use std::mem;
use std::os::fd::{AsRawFd, OwnedFd};
use std::os::unix::ffi::OsStrExt;
use std::path::{Path, PathBuf};

use nix::fcntl::OFlag;
use nix::unistd;

use crate::error::JailError;
use crate::proc::Pid;

/// Pre-exec hooks installed by the limits module.
#[derive(Default)]
pub struct SpawnHooks {
    /// RLIMIT_DATA, soft and hard.
    pub rlimit_data: Option<u64>,
    /// RLIMIT_RSS, soft and hard. Kept for the legacy backend; modern
    /// kernels ignore it.
    pub rlimit_rss: Option<u64>,
    /// An open `cgroup.procs` fd; the child writes itself into it.
    pub cgroup_procs: Option<OwnedFd>,
    /// Logical CPUs to pin the whole jail to.
    pub cpuset: Option<Vec<usize>>,
}

pub(crate) struct SpawnRequest<'a> {
    pub command: &'a [String],
    pub env_overlay: &'a BTreeMap<String, String>,
    pub workdir: Option<&'a Path>,
    pub hooks: SpawnHooks,
    pub new_pid_namespace: bool,
}

/// Resolves `program` against PATH the way exec would, so the child can call
/// execve directly.
pub(crate) fn resolve_program(program: &str) -> io::Result<PathBuf> {
    let candidate_ok = |p: &Path| {
        std::fs::metadata(p)
            .map(|m| m.is_file() && (std::os::unix::fs::MetadataExt::mode(&m) & 0o111) != 0)
            .unwrap_or(false)
    };
    if program.contains('/') {
        let p = PathBuf::from(program);
        if candidate_ok(&p) {
            return Ok(p);
        }
        return Err(io::Error::new(
            io::ErrorKind::NotFound,
            format!("{program}: no such executable"),
        ));
    }
    let path = std::env::var_os("PATH").unwrap_or_else(|| OsString::from("/usr/bin:/bin"));
    for dir in std::env::split_paths(&path) {
        if dir.as_os_str().is_empty() {
            continue;
        }
        let p = dir.join(program);
        if candidate_ok(&p) {
            return Ok(p);
        }
    }
    Err(io::Error::new(
        io::ErrorKind::NotFound,
        format!("{program}: not found in PATH"),
    ))
}

fn cstring(bytes: &[u8]) -> io::Result<CString> {
    CString::new(bytes).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "embedded NUL"))
}

fn build_envp(overlay: &BTreeMap<String, String>) -> io::Result<Vec<CString>> {
    let mut merged: BTreeMap<OsString, OsString> = std::env::vars_os().collect();
    for (k, v) in overlay {
        merged.insert(k.into(), v.into());
    }
    merged
        .iter()
        .map(|(k, v)| {
            let mut kv = k.as_bytes().to_vec();
            kv.push(b'=');
            kv.extend_from_slice(v.as_bytes());
            cstring(&kv)
        })
        .collect()
}

/// Child-side failure stages, reported over the error pipe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
enum Stage {
    Setpgid = 1,
    Affinity = 2,
    Rlimit = 3,
    Cgroup = 4,
    Chdir = 5,
    Exec = 6,
}

impl Stage {
    fn name(self) -> &'static str {
        match self {
            Stage::Setpgid => "setpgid",
            Stage::Affinity => "sched_setaffinity",
            Stage::Rlimit => "setrlimit",
            Stage::Cgroup => "cgroup join",
            Stage::Chdir => "chdir",
            Stage::Exec => "exec",
        }
    }

    fn from_byte(b: u8) -> Option<Stage> {
        match b {
            1 => Some(Stage::Setpgid),
            2 => Some(Stage::Affinity),
            3 => Some(Stage::Rlimit),
            4 => Some(Stage::Cgroup),
            5 => Some(Stage::Chdir),
            6 => Some(Stage::Exec),
            _ => None,
        }
    }
}

struct ChildPlan {
    exe: CString,
    argv: Vec<*const libc::c_char>,
    envp: Vec<*const libc::c_char>,
    workdir: Option<CString>,
    cpu_set: Option<libc::cpu_set_t>,
    rlimit_data: Option<libc::rlimit>,
    rlimit_rss: Option<libc::rlimit>,
    cgroup_fd: Option<i32>,
    err_fd: i32,
}

/// Runs in the forked child. Only raw syscalls from here to exec.
unsafe fn child_main(plan: &ChildPlan) -> ! {
    let fail = |stage: Stage| -> ! {
        let errno = io::Error::last_os_error().raw_os_error().unwrap_or(0);
        let mut buf = [0u8; 5];
        buf[0] = stage as u8;
        buf[1..5].copy_from_slice(&errno.to_le_bytes());
        libc::write(plan.err_fd, buf.as_ptr().cast(), buf.len());
        libc::_exit(127);
    };

    if libc::setpgid(0, 0) != 0 {
        fail(Stage::Setpgid);
    }
    if let Some(ref set) = plan.cpu_set {
        if libc::sched_setaffinity(0, mem::size_of::<libc::cpu_set_t>(), set) != 0 {
            fail(Stage::Affinity);
        }
    }
    if let Some(ref lim) = plan.rlimit_data {
        if libc::setrlimit(libc::RLIMIT_DATA, lim) != 0 {
            fail(Stage::Rlimit);
        }
    }
    if let Some(ref lim) = plan.rlimit_rss {
        if libc::setrlimit(libc::RLIMIT_RSS, lim) != 0 {
            fail(Stage::Rlimit);
        }
    }
    if let Some(fd) = plan.cgroup_fd {
        if libc::write(fd, b"0".as_ptr().cast(), 1) != 1 {
            fail(Stage::Cgroup);
        }
    }
    if let Some(ref dir) = plan.workdir {
        if libc::chdir(dir.as_ptr()) != 0 {
            fail(Stage::Chdir);
        }
    }
    libc::execve(plan.exe.as_ptr(), plan.argv.as_ptr(), plan.envp.as_ptr());
    fail(Stage::Exec)
}

pub(crate) struct Spawned {
    pub pid: Pid,
}

pub(crate) fn spawn(req: &SpawnRequest<'_>) -> Result<Spawned, JailError> {
    let program = req.command.first().ok_or_else(|| {
        JailError::Spawn(io::Error::new(io::ErrorKind::InvalidInput, "empty command"))
    })?;
    let exe_path = resolve_program(program).map_err(JailError::Exec)?;
    let exe = cstring(exe_path.as_os_str().as_bytes()).map_err(JailError::Spawn)?;
    let argv_owned: Vec<CString> = req
        .command
        .iter()
        .map(|a| cstring(a.as_bytes()))
        .collect::<io::Result<_>>()
        .map_err(JailError::Spawn)?;
    let envp_owned = build_envp(req.env_overlay).map_err(JailError::Spawn)?;
    let workdir = match req.workdir {
        Some(d) => Some(cstring(d.as_os_str().as_bytes()).map_err(JailError::Spawn)?),
        None => None,
    };

    let mut argv: Vec<*const libc::c_char> = argv_owned.iter().map(|c| c.as_ptr()).collect();
    argv.push(std::ptr::null());
    let mut envp: Vec<*const libc::c_char> = envp_owned.iter().map(|c| c.as_ptr()).collect();
    envp.push(std::ptr::null());

    let cpu_set = match &req.hooks.cpuset {
        Some(cpus) => {
            let mut set: libc::cpu_set_t = unsafe { mem::zeroed() };
            unsafe { libc::CPU_ZERO(&mut set) };
            for &cpu in cpus {
                unsafe { libc::CPU_SET(cpu, &mut set) };
            }
            Some(set)
        }
        None => None,
    };
    let as_rlim = |v: u64| libc::rlimit {
        rlim_cur: v,
        rlim_max: v,
    };

    let (err_read, err_write) =
        unistd::pipe2(OFlag::O_CLOEXEC).map_err(|e| JailError::Os {
            op: "pipe2",
            source: e.into(),
        })?;

    let plan = ChildPlan {
        exe,
        argv,
        envp,
        workdir,
        cpu_set,
        rlimit_data: req.hooks.rlimit_data.map(as_rlim),
        rlimit_rss: req.hooks.rlimit_rss.map(as_rlim),
        cgroup_fd: req.hooks.cgroup_procs.as_ref().map(|fd| fd.as_raw_fd()),
        err_fd: err_write.as_raw_fd(),
    };

    let child = if req.new_pid_namespace {
        // clone without CLONE_VM behaves like fork; CLONE_NEWPID makes the
        // child pid 1 of a fresh namespace while we keep its outer pid.
        let flags = libc::SIGCHLD as libc::c_ulong | (libc::CLONE_NEWPID as libc::c_ulong);
        unsafe { libc::syscall(libc::SYS_clone, flags, 0usize, 0usize, 0usize, 0usize) }
    } else {
        unsafe { libc::fork() as i64 }
    };

    match child {
        -1 => Err(JailError::Spawn(io::Error::last_os_error())),
        0 => unsafe { child_main(&plan) },
        pid => {
            let pid = pid as Pid;
            drop(err_write);
            // Mirror the child's setpgid so neither side races group kills.
            unsafe { libc::setpgid(pid, pid) };
            let mut buf = [0u8; 5];
            let n = read_full(&err_read, &mut buf);
            if n == 0 {
                return Ok(Spawned { pid });
            }
            // Child reported a setup failure and has exited; reap it.
            let _ = nix::sys::wait::waitpid(nix::unistd::Pid::from_raw(pid), None);
            let errno = if n >= 5 {
                i32::from_le_bytes([buf[1], buf[2], buf[3], buf[4]])
            } else {
                0
            };
            let stage = Stage::from_byte(buf[0]);
            let err = io::Error::from_raw_os_error(errno);
            match stage {
                Some(Stage::Exec) => Err(JailError::Exec(err)),
                Some(s) => Err(JailError::Os {
                    op: s.name(),
                    source: err,
                }),
                None => Err(JailError::Spawn(io::Error::other("garbled child report"))),
            }
        }
    }
}

fn read_full(fd: &OwnedFd, buf: &mut [u8]) -> usize {
    let mut total = 0;
    while total < buf.len() {
        match unistd::read(fd.as_raw_fd(), &mut buf[total..]) {
            Ok(0) => break,
            Ok(n) => total += n,
            Err(nix::errno::Errno::EINTR) => continue,
            Err(_) => break,
        }
    }
    total
}
