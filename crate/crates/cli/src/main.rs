use jobjail::args::{parse_args, Command, USAGE};
use jobjail::exit_codes;
use jobjail::run::run;

fn main() {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let command = match parse_args(&argv) {
        Ok(cmd) => cmd,
        Err(e) => {
            eprintln!("jobjail: {e}");
            eprintln!("{USAGE}");
            std::process::exit(exit_codes::USAGE);
        }
    };

    match command {
        Command::Help => {
            print!("{USAGE}");
        }
        Command::PymemSimulate(args) => {
            if let Err(e) = jobjail::pymem_cmd::execute(&args) {
                eprintln!("jobjail pymem: {e}");
                std::process::exit(65);
            }
        }
        Command::Run(spec) => {
            let outcome = match run(&spec) {
                Ok(outcome) => outcome,
                Err(e) => {
                    eprintln!("jobjail: {e}");
                    std::process::exit(e.exit_code());
                }
            };
            let job = &outcome.job_exit;
            let status = match (job.exit_code, job.signal) {
                (Some(c), _) => format!("exit {c}"),
                (None, Some(s)) => format!("signal {s}"),
                (None, None) => "unknown".to_string(),
            };
            eprintln!(
                "jobjail: job {status}; backend {}; runtime {} ms; peak rss {} bytes; NoT mode {}; {} enforcement event(s); contained: {}",
                outcome.backend,
                outcome.report.runtime_ms,
                outcome.report.peak_rss_bytes,
                outcome.report.not_mode,
                outcome.enforcement_events.len(),
                outcome.contained(),
            );
            if !outcome.termination.survivors.is_empty() {
                eprintln!(
                    "jobjail: WARNING: survivors after KILL: {:?}",
                    outcome.termination.survivors
                );
            }
            if !outcome.escapees_alive.is_empty() {
                eprintln!(
                    "jobjail: WARNING: escapees still alive: {:?}",
                    outcome.escapees_alive
                );
            }
            if let Some(err) = &outcome.export_error {
                eprintln!("jobjail: report write failed: {err}");
            }
            std::process::exit(outcome.exit_code());
        }
    }
}
