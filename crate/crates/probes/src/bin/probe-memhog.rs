//! Allocates memory, optionally touching pages and pacing the rate.
//!
//! Exit 0 once the target is reached (after an optional hold), exit 9 when
//! the allocator refuses. Tests key on the distinct failure code.
//!
//! Usage: probe-memhog --total-bytes N [--rate-bytes-per-sec N]
//!                     [--touch] [--hold-secs S]

use std::time::{Duration, Instant};

use jobjail_probes::{alloc_touched, catch_term, hold, report, Args, EXIT_ALLOC_FAILED};

const CHUNK: usize = 64 * 1024 * 1024;

fn main() {
    let args = Args::parse();
    let total = args.u64_or("total-bytes", 0) as usize;
    let rate = args.u64_or("rate-bytes-per-sec", 0) as usize;
    let touch = args.flag("touch");
    let hold_secs = args.u64_or("hold-secs", 0);
    report(&format!("memhog total={total} rate={rate} touch={touch}"));

    let stop = catch_term();
    let started = Instant::now();
    let mut chunks: Vec<Vec<u8>> = Vec::new();
    let mut allocated = 0usize;

    if rate == 0 && !touch {
        // One shot: a single reservation, no pacing.
        let mut block: Vec<u8> = Vec::new();
        if block.try_reserve_exact(total).is_err() {
            report(&format!("alloc-failed at=0 want={total}"));
            eprintln!("probe-memhog: allocation of {total} bytes refused");
            std::process::exit(EXIT_ALLOC_FAILED);
        }
        chunks.push(block);
        allocated = total;
    } else {
        while allocated < total {
            if stop.load(std::sync::atomic::Ordering::SeqCst) {
                report(&format!("terminated at={allocated}"));
                std::process::exit(0);
            }
            let step = CHUNK.min(total - allocated);
            let block = if touch {
                alloc_touched(step)
            } else {
                let mut b: Vec<u8> = Vec::new();
                b.try_reserve_exact(step).map(|_| b).map_err(|_| ())
            };
            let Ok(block) = block else {
                report(&format!("alloc-failed at={allocated} want={step}"));
                eprintln!("probe-memhog: allocation refused after {allocated} bytes");
                std::process::exit(EXIT_ALLOC_FAILED);
            };
            chunks.push(block);
            allocated += step;
            if rate > 0 {
                let due = Duration::from_secs_f64(allocated as f64 / rate as f64);
                let elapsed = started.elapsed();
                if due > elapsed {
                    std::thread::sleep(due - elapsed);
                }
            }
        }
    }

    report(&format!("alloc-done bytes={allocated}"));
    if hold_secs > 0 {
        hold(hold_secs, Some(stop));
    }
    std::process::exit(0);
}
