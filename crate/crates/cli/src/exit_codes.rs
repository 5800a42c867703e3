//! Process exit codes, sysexits-flavored.
//!
//! Precedence when several things went wrong at once: usage problems and
//! unsupported backends abort before a job runs; a containment failure
//! outranks the job's own status (survivors are the operator's problem);
//! then the job's code; a report-write failure is reported only when
//! everything else succeeded.

use jobjail_core::jail::JobStatus;

pub const OK: i32 = 0;
pub const USAGE: i32 = 64;
pub const BACKEND_UNSUPPORTED: i32 = 69;
pub const CONTAINMENT_FAILURE: i32 = 70;
pub const REPORT_WRITE_FAILURE: i32 = 74;
/// Job could not be started at all (exec failure).
pub const SPAWN_FAILURE: i32 = 127;

/// Total mapping from (job status, containment result, report I/O result).
pub fn for_outcome(job: &JobStatus, contained: bool, report_written: bool) -> i32 {
    if !contained {
        return CONTAINMENT_FAILURE;
    }
    let job_code = job.shell_code();
    if job_code != 0 {
        return job_code;
    }
    if !report_written {
        return REPORT_WRITE_FAILURE;
    }
    OK
}
