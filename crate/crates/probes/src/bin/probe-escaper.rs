//! Forks a child that leaves the process group via setsid and forks again:
//! the group-level escape a process-group jail cannot signal, which escape
//! detection must flag.
//!
//! The probe itself stays put (a group leader cannot setsid); the escape
//! happens one fork down, like a real daemonizing workload.
//!
//! Usage: probe-escaper [--hold-secs S] [--child-hold-secs S]

use jobjail_probes::{catch_term, hold, report, set_comm, Args};
use nix::unistd::{fork, setsid, ForkResult};

fn hold_until_term(hold_secs: u64) -> ! {
    let stop = catch_term();
    hold(hold_secs, Some(stop));
    unsafe { libc::_exit(0) }
}

fn main() {
    let args = Args::parse();
    let hold_secs = args.u64_or("hold-secs", 120);
    let child_hold_secs = args.u64_or("child-hold-secs", hold_secs);
    report("escaper-root");

    match unsafe { fork() } {
        Ok(ForkResult::Child) => {
            set_comm("probe-escapee");
            if let Err(e) = setsid() {
                eprintln!("probe-escaper: setsid failed: {e}");
                unsafe { libc::_exit(1) }
            }
            report("escapee after-setsid");
            match unsafe { fork() } {
                Ok(ForkResult::Child) => {
                    set_comm("probe-escapee");
                    report("escapee-fork");
                    hold_until_term(child_hold_secs);
                }
                Ok(ForkResult::Parent { .. }) => {}
                Err(e) => {
                    eprintln!("probe-escaper: inner fork failed: {e}");
                    unsafe { libc::_exit(1) }
                }
            }
            hold_until_term(child_hold_secs);
        }
        Ok(ForkResult::Parent { .. }) => {}
        Err(e) => {
            eprintln!("probe-escaper: fork failed: {e}");
            std::process::exit(1);
        }
    }

    hold_until_term(hold_secs);
}
