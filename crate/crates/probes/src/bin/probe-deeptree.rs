//! Chain of processes, each holding its own slice of touched memory: the
//! deep hierarchy that defeats shallow per-job accounting.
//!
//! Every link forks the next one *before* allocating, so copy-on-write
//! never double-counts the payload. Each link reports `spawned` on entry
//! and `ready` once its memory is resident, then holds until TERM or the
//! hold timer runs out.
//!
//! Usage: probe-deeptree --depth D --rss-each BYTES [--hold-secs S]

use jobjail_probes::{alloc_touched, catch_term, hold, report, Args};
use nix::unistd::{fork, ForkResult};

fn main() {
    let args = Args::parse();
    let depth = args.u64_or("depth", 1);
    let rss_each = args.u64_or("rss-each", 0) as usize;
    let hold_secs = args.u64_or("hold-secs", 120);

    let mut remaining = depth;
    report(&format!("deeptree spawned depth={remaining}"));
    while remaining > 1 {
        match unsafe { fork() } {
            Ok(ForkResult::Child) => {
                remaining -= 1;
                report(&format!("deeptree spawned depth={remaining}"));
            }
            Ok(ForkResult::Parent { .. }) => break,
            Err(e) => {
                eprintln!("probe-deeptree: fork failed at depth {remaining}: {e}");
                std::process::exit(1);
            }
        }
    }

    let stop = catch_term();
    let Ok(payload) = alloc_touched(rss_each) else {
        report("deeptree alloc-failed");
        std::process::exit(jobjail_probes::EXIT_ALLOC_FAILED);
    };
    report(&format!("deeptree ready bytes={}", payload.len()));

    hold(hold_secs, Some(stop));
    std::process::exit(0);
}
