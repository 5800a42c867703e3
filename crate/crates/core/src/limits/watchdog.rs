use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::Sender;
use std::time::{Duration, Instant};

use crate::jail::Jail;
use crate::limits::{poll_enforce, PollDecision};
use crate::proc::{Pid, ProcessInspector};

/// Message from the polling watchdog to the control loop.
#[derive(Debug, Clone)]
pub enum WatchdogMsg {
    /// The hierarchy RSS sum crossed the limit; the control loop should
    /// terminate the jail.
    Exceeded {
        observed_bytes: u64,
        limit_bytes: u64,
        pids: Vec<Pid>,
        at: Instant,
    },
}

/// Periodic RSS-sum watchdog. Samples the jail's member table every
/// `interval`, and on the first breach sends one message and returns. Also
/// returns when `stop` goes true or the channel closes. Runs on the caller's
/// thread; spawn it scoped next to the sampler.
pub fn run_polling_watchdog(
    jail: &Jail,
    inspector: &dyn ProcessInspector,
    limit_bytes: u64,
    interval: Duration,
    stop: &AtomicBool,
    tx: Sender<WatchdogMsg>,
) {
    let step = Duration::from_millis(20).min(interval);
    let mut next_poll = Instant::now() + interval;
    loop {
        if stop.load(Ordering::Relaxed) {
            return;
        }
        if Instant::now() >= next_poll {
            next_poll += interval;
            let Ok(members) = jail.members(inspector) else {
                continue;
            };
            if let PollDecision::Exceeded { observed, pids } = poll_enforce(&members, limit_bytes)
            {
                let _ = tx.send(WatchdogMsg::Exceeded {
                    observed_bytes: observed,
                    limit_bytes,
                    pids,
                    at: Instant::now(),
                });
                return;
            }
        }
        std::thread::sleep(step);
    }
}
