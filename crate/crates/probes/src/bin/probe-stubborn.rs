//! Ignores SIGTERM and loops forever. Only SIGKILL ends it.
//!
//! Usage: probe-stubborn [--max-secs S]   (safety timeout, default 600)

use std::sync::atomic::Ordering;

use jobjail_probes::{catch_term, report, Args};

fn main() {
    let args = Args::parse();
    let max_secs = args.u64_or("max-secs", 600);
    report("stubborn");
    let seen = catch_term();
    let deadline = std::time::Instant::now() + std::time::Duration::from_secs(max_secs);
    let mut noted = false;
    while std::time::Instant::now() < deadline {
        if seen.swap(false, Ordering::SeqCst) && !noted {
            report("term-ignored");
            noted = true;
        }
        std::thread::sleep(std::time::Duration::from_millis(50));
    }
    std::process::exit(0);
}
