//! Holds N extra threads (busy or idle) until signaled or timed out, so a
//! sampler sees NoT = N + 1.
//!
//! Usage: probe-threads --threads N [--busy] [--duration-secs S]
//! With --threads 0 --busy the main thread itself spins: a single-threaded
//! CPU hog.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use jobjail_probes::{catch_term, report, Args};

fn spin(stop: &AtomicBool, deadline: Option<Instant>) {
    let mut n: u64 = 0;
    loop {
        n = n.wrapping_add(1);
        std::hint::black_box(n);
        if n % 65536 == 0 {
            if stop.load(Ordering::Relaxed) {
                return;
            }
            if let Some(d) = deadline {
                if Instant::now() >= d {
                    return;
                }
            }
        }
    }
}

fn main() {
    let args = Args::parse();
    let workers = args.u64_or("threads", 0) as usize;
    let busy = args.flag("busy");
    let duration = args.u64_or("duration-secs", 0);
    report(&format!("threads workers={workers} busy={busy}"));

    let stop = catch_term();
    let deadline = (duration > 0).then(|| Instant::now() + Duration::from_secs(duration));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                if busy {
                    spin(stop, deadline);
                } else {
                    loop {
                        if stop.load(Ordering::Relaxed) {
                            return;
                        }
                        if let Some(d) = deadline {
                            if Instant::now() >= d {
                                return;
                            }
                        }
                        std::thread::sleep(Duration::from_millis(50));
                    }
                }
            });
        }
        if workers == 0 && busy {
            spin(stop, deadline);
        } else {
            loop {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                if let Some(d) = deadline {
                    if Instant::now() >= d {
                        break;
                    }
                }
                std::thread::sleep(Duration::from_millis(50));
            }
        }
    });
    std::process::exit(0);
}
