//! Parent that spawns two sleeping children and waits for them.
//!
//! Kill the parent and the sleepers live on, re-parented to init (or the
//! nearest subreaper). A batch system walking parent pids cannot stop them.
//!
//! Usage: probe-orphaner <sleep_a_secs> <sleep_b_secs>

use jobjail_probes::{report, set_comm, Args};
use nix::sys::wait::waitpid;
use nix::unistd::{fork, ForkResult};

fn spawn_sleeper(label: &str, secs: u64) -> nix::unistd::Pid {
    match unsafe { fork() } {
        Ok(ForkResult::Child) => {
            set_comm("probe-sleeper");
            report(&format!("sleeper-{label} {secs}s"));
            let deadline = std::time::Instant::now() + std::time::Duration::from_secs(secs);
            while std::time::Instant::now() < deadline {
                std::thread::sleep(std::time::Duration::from_millis(100));
            }
            unsafe { libc::_exit(0) }
        }
        Ok(ForkResult::Parent { child }) => child,
        Err(e) => {
            eprintln!("probe-orphaner: fork failed: {e}");
            std::process::exit(1);
        }
    }
}

fn main() {
    let args = Args::parse();
    let sleep_a: u64 = args
        .positional(0)
        .and_then(|v| v.parse().ok())
        .unwrap_or(100);
    let sleep_b: u64 = args
        .positional(1)
        .and_then(|v| v.parse().ok())
        .unwrap_or(150);

    report("orphaner-parent");
    let a = spawn_sleeper("a", sleep_a);
    let b = spawn_sleeper("b", sleep_b);
    for pid in [a, b] {
        let _ = waitpid(pid, None);
    }
    std::process::exit(0);
}
