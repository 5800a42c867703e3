//! Shared plumbing for the probe fixtures.
//!
//! Probes are small adversarial programs used by integration and acceptance
//! tests: an orphan factory, a memory hog, a thread spawner, a deep process
//! chain, a TERM-ignoring stubborn loop, and a session escaper. Each probe
//! reports every pid it creates to a side-channel file (path in
//! `JOBJAIL_PROBE_SIDECHANNEL`) before that pid does anything interesting,
//! so tests can verify containment against ground truth.

pub mod harness;

use std::fs::OpenOptions;
use std::io::Write;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

pub const SIDECHANNEL_ENV: &str = "JOBJAIL_PROBE_SIDECHANNEL";

/// Our pid as the host sees it. Inside a fresh PID namespace getpid() is
/// namespace-relative, but the inherited /proc is the host's, so
/// /proc/self resolves to the outer pid, which containment checks need.
pub fn self_pid() -> i32 {
    if let Ok(stat) = std::fs::read_to_string("/proc/self/stat") {
        if let Some(first) = stat.split(' ').next() {
            if let Ok(pid) = first.parse() {
                return pid;
            }
        }
    }
    std::process::id() as i32
}

/// Appends `<outer-pid> <note>` to the side channel, if one is configured.
/// Every process reports itself, never its children, so the recorded pid is
/// always the host-visible one. O_APPEND keeps concurrent writers
/// line-atomic at these sizes.
pub fn report(note: &str) {
    let Ok(path) = std::env::var(SIDECHANNEL_ENV) else {
        return;
    };
    let line = format!("{} {}\n", self_pid(), note);
    if let Ok(mut f) = OpenOptions::new().create(true).append(true).open(path) {
        let _ = f.write_all(line.as_bytes());
    }
}

static TERM_SEEN: AtomicBool = AtomicBool::new(false);

extern "C" fn note_term(_sig: libc::c_int) {
    TERM_SEEN.store(true, Ordering::SeqCst);
}

/// Installs a SIGTERM handler that only raises a flag. The caller decides
/// whether that means "exit politely" or "ignore it".
pub fn catch_term() -> &'static AtomicBool {
    unsafe {
        libc::signal(libc::SIGTERM, note_term as *const () as libc::sighandler_t);
    }
    &TERM_SEEN
}

/// Sleeps in small steps until the deadline passes or `stop` goes true.
pub fn hold(secs: u64, stop: Option<&AtomicBool>) {
    let deadline = Instant::now() + Duration::from_secs(secs);
    while Instant::now() < deadline {
        if let Some(flag) = stop {
            if flag.load(Ordering::SeqCst) {
                return;
            }
        }
        std::thread::sleep(Duration::from_millis(50));
    }
}

/// Tiny flag/value argument parser: `--key value`, `--flag`, in any order.
pub struct Args {
    pairs: Vec<(String, Option<String>)>,
}

impl Args {
    pub fn parse() -> Args {
        let mut pairs = Vec::new();
        let mut argv = std::env::args().skip(1).peekable();
        while let Some(arg) = argv.next() {
            if let Some(key) = arg.strip_prefix("--") {
                let value = match argv.peek() {
                    Some(next) if !next.starts_with("--") => argv.next(),
                    _ => None,
                };
                pairs.push((key.to_string(), value));
            } else {
                pairs.push((String::new(), Some(arg)));
            }
        }
        Args { pairs }
    }

    pub fn flag(&self, key: &str) -> bool {
        self.pairs.iter().any(|(k, _)| k == key)
    }

    pub fn value(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(k, _)| k == key)
            .and_then(|(_, v)| v.as_deref())
    }

    pub fn u64_or(&self, key: &str, default: u64) -> u64 {
        match self.value(key) {
            Some(v) => v.parse().unwrap_or_else(|_| {
                eprintln!("bad value for --{key}: {v}");
                std::process::exit(2);
            }),
            None => default,
        }
    }

    pub fn positional(&self, index: usize) -> Option<&str> {
        self.pairs
            .iter()
            .filter(|(k, _)| k.is_empty())
            .nth(index)
            .and_then(|(_, v)| v.as_deref())
    }
}

/// Renames the current process (comm), so scans can tell probe roles apart.
pub fn set_comm(name: &str) {
    let bytes = std::ffi::CString::new(name).unwrap();
    unsafe {
        libc::prctl(libc::PR_SET_NAME, bytes.as_ptr(), 0, 0, 0);
    }
}

/// Exit code a memhog uses for "allocation refused".
pub const EXIT_ALLOC_FAILED: i32 = 9;

/// Reserves `bytes` and commits one byte per page, so the whole block is
/// resident without writing every byte (fast even unoptimized).
pub fn alloc_touched(bytes: usize) -> Result<Vec<u8>, ()> {
    let mut block: Vec<u8> = Vec::new();
    block.try_reserve_exact(bytes).map_err(|_| ())?;
    // SAFETY: capacity is reserved; u8 needs no init before writing.
    unsafe { block.set_len(bytes) };
    let mut i = 0;
    while i < bytes {
        block[i] = 1;
        i += 4096;
    }
    Ok(block)
}
