//! Command-line grammar and config handling.
//!
//! `jobjail run [flags] -- CMD [ARGS...]` launches one supervised job;
//! `jobjail pymem simulate ...` runs the allocator/GC model. Sizes take
//! K/M/G suffixes (powers of 1024), durations take ms/s/m suffixes (a bare
//! number means seconds), cpusets use list syntax like `0-3,8`. Flags beat
//! config-file entries beat built-in defaults.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use jobjail_core::envctl::{merge_overlay, thread_env, ThreadLimitSpec};
use jobjail_core::error::ConfigError;
use jobjail_core::jail::{default_backend, IsolationBackend};
use jobjail_core::limits::{CpuSet, LimitPolicy, MemBackendKind};
use jobjail_core::telemetry::{ExportFormat, DEFAULT_SAMPLE_INTERVAL};

pub const DEFAULT_GRACE: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

pub const USAGE: &str = "\
usage:
  jobjail run [options] -- CMD [ARGS...]
  jobjail pymem simulate --trace FILE [options] --out FILE
  jobjail help

run options:
  --backend pg|subreaper|pidns   isolation backend (default: strongest available)
  --mem-limit SIZE               memory limit (K/M/G suffixes, powers of 1024)
  --mem-backend cgroup|rlimit-data|poll|rlimit-rss-legacy
                                 how the limit is enforced (default: poll)
  --poll-interval DUR            polling backend interval (default 1s)
  --cpus CPUSET                  pin the jail to these CPUs, e.g. 0-3,8
  --omp-threads N                export OMP_NUM_THREADS=N
  --mkl-threads N                export MKL_NUM_THREADS=N
  --numexpr-threads N            export NUMEXPR_NUM_THREADS=N
  --mkl-sequential               export MKL_THREADING_LAYER=SEQUENTIAL
  --extra-thread-env             also export OPENBLAS/VECLIB aliases
  --env KEY=VAL                  extra environment (repeatable; wins over thread vars)
  --workdir PATH                 working directory for the job
  --grace DUR                    TERM->KILL grace (default 30s)
  --sample-interval DUR          telemetry interval (default 500ms)
  --report PATH                  write the telemetry/report file here
  --format json|csv              report file format (default json)
  --on-escape kill|report        what to do with detected escapees (default kill)
  --config PATH                  key=value file; flags take precedence

pymem simulate options:
  --trace FILE                   lines: alloc,<bytes|@class>,<0|1> / free,<line-index>
  --arena-kb N                   arena size in KiB (default 256)
  --small-threshold N            small-object threshold in bytes (default 512)
  --gc G0,G1,G2                  generation thresholds (default 700,10,10)
  --sizes FILE                   size table: class=bytes lines
  --out FILE                     output JSON path
";

/// Telemetry knobs for one run.
#[derive(Debug, Clone)]
pub struct TelemetryConfig {
    pub sample_interval: Duration,
    pub output: Option<PathBuf>,
    pub format: ExportFormat,
}

impl Default for TelemetryConfig {
    fn default() -> Self {
        TelemetryConfig {
            sample_interval: DEFAULT_SAMPLE_INTERVAL,
            output: None,
            format: ExportFormat::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnEscape {
    Kill,
    Report,
}

/// Full description of a job, defaults applied.
#[derive(Debug, Clone)]
pub struct JobSpec {
    pub command: Vec<String>,
    pub workdir: Option<PathBuf>,
    /// Thread-limit variables merged under explicit `--env` entries.
    pub env_overlay: BTreeMap<String, String>,
    pub backend: IsolationBackend,
    pub limits: LimitPolicy,
    pub grace: Duration,
    pub telemetry: TelemetryConfig,
    pub report_path: Option<PathBuf>,
    pub on_escape: OnEscape,
}

impl JobSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.command.is_empty() {
            return Err(ConfigError::EmptyCommand);
        }
        if self.telemetry.sample_interval.is_zero() {
            return Err(ConfigError::ZeroSampleInterval);
        }
        if self.limits.poll_interval.map(|d| d.is_zero()).unwrap_or(false) {
            return Err(ConfigError::ZeroPollInterval);
        }
        if self.limits.mem_limit_bytes == Some(0) {
            return Err(ConfigError::ZeroMemLimit);
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PymemArgs {
    pub trace: PathBuf,
    pub arena_kb: u64,
    pub small_threshold: u64,
    pub gc: [u64; 3],
    pub sizes: Option<PathBuf>,
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub enum Command {
    Run(Box<JobSpec>),
    PymemSimulate(PymemArgs),
    Help,
}

/// Parses `SIZE`: plain bytes or K/M/G (powers of 1024).
pub fn parse_size(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let (digits, shift) = match s.chars().last() {
        Some('K') | Some('k') => (&s[..s.len() - 1], 10),
        Some('M') | Some('m') => (&s[..s.len() - 1], 20),
        Some('G') | Some('g') => (&s[..s.len() - 1], 30),
        _ => (s, 0),
    };
    let base: u64 = digits
        .trim()
        .parse()
        .map_err(|_| format!("unparsable size: {s}"))?;
    base.checked_shl(shift)
        .ok_or_else(|| format!("size overflows: {s}"))
}

/// Parses `DUR`: `500ms`, `2s`, `1m`, or a bare number of seconds.
pub fn parse_duration(s: &str) -> Result<Duration, String> {
    let s = s.trim();
    let (digits, scale_ms) = if let Some(d) = s.strip_suffix("ms") {
        (d, 1u64)
    } else if let Some(d) = s.strip_suffix('s') {
        (d, 1000)
    } else if let Some(d) = s.strip_suffix('m') {
        (d, 60_000)
    } else {
        (s, 1000)
    };
    let n: u64 = digits
        .trim()
        .parse()
        .map_err(|_| format!("unparsable duration: {s}"))?;
    Ok(Duration::from_millis(n * scale_ms))
}

fn parse_mem_backend(s: &str) -> Result<MemBackendKind, String> {
    match s {
        "cgroup" | "group-controller" => Ok(MemBackendKind::GroupController),
        "rlimit-data" | "data-segment" => Ok(MemBackendKind::DataSegment),
        "poll" | "polling" => Ok(MemBackendKind::Polling),
        "rlimit-rss-legacy" | "resident-set-legacy" => Ok(MemBackendKind::ResidentSetLegacy),
        other => Err(format!("unknown memory backend: {other}")),
    }
}

/// Option accumulator; config file first, flags override.
#[derive(Debug, Default)]
struct Settings {
    entries: BTreeMap<String, String>,
    env: Vec<(String, String)>,
    flags: std::collections::BTreeSet<String>,
}

const VALUE_KEYS: &[&str] = &[
    "backend",
    "mem-limit",
    "mem-backend",
    "poll-interval",
    "cpus",
    "omp-threads",
    "mkl-threads",
    "numexpr-threads",
    "grace",
    "sample-interval",
    "report",
    "format",
    "workdir",
    "on-escape",
];
const BOOL_KEYS: &[&str] = &["mkl-sequential", "extra-thread-env"];

impl Settings {
    fn set(&mut self, key: &str, value: String) -> Result<(), UsageError> {
        if key == "env" {
            let (k, v) = value
                .split_once('=')
                .ok_or_else(|| UsageError(format!("--env wants KEY=VAL, got {value}")))?;
            self.env.push((k.to_string(), v.to_string()));
            return Ok(());
        }
        if !VALUE_KEYS.contains(&key) {
            return Err(UsageError(format!("unknown option --{key}")));
        }
        self.entries.insert(key.to_string(), value);
        Ok(())
    }

    fn set_flag(&mut self, key: &str, on: bool) -> Result<(), UsageError> {
        if !BOOL_KEYS.contains(&key) {
            return Err(UsageError(format!("unknown flag --{key}")));
        }
        if on {
            self.flags.insert(key.to_string());
        } else {
            self.flags.remove(key);
        }
        Ok(())
    }

    fn load_config(&mut self, path: &str) -> Result<(), UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {path}: {e}")))?;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| UsageError(format!("{path}:{}: expected key=value", n + 1)))?;
            let key = key.trim();
            let value = value.trim();
            if BOOL_KEYS.contains(&key) {
                let on = matches!(value, "1" | "true" | "yes");
                self.set_flag(key, on)?;
            } else {
                self.set(key, value.to_string())?;
            }
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn flag(&self, key: &str) -> bool {
        self.flags.contains(key)
    }
}

fn build_jobspec(settings: Settings, command: Vec<String>) -> Result<JobSpec, UsageError> {
    let err = |m: String| UsageError(m);
    let backend = match settings.get("backend") {
        Some(v) => v
            .parse::<IsolationBackend>()
            .map_err(|e| err(format!("--backend: {e}")))?,
        None => default_backend(),
    };
    let parse_threads = |key: &str| -> Result<Option<u32>, UsageError> {
        match settings.get(key) {
            Some(v) => {
                let n: u32 = v
                    .parse()
                    .map_err(|_| err(format!("--{key}: bad count {v}")))?;
                if n == 0 {
                    return Err(err(format!("--{key}: must be >= 1")));
                }
                Ok(Some(n))
            }
            None => Ok(None),
        }
    };
    let thread_spec = ThreadLimitSpec {
        mkl_threads: parse_threads("mkl-threads")?,
        numexpr_threads: parse_threads("numexpr-threads")?,
        omp_threads: parse_threads("omp-threads")?,
        mkl_sequential: settings.flag("mkl-sequential"),
        extra_aliases: settings.flag("extra-thread-env"),
    };

    let limits = LimitPolicy {
        mem_limit_bytes: match settings.get("mem-limit") {
            Some(v) => Some(parse_size(v).map_err(|e| err(format!("--mem-limit: {e}")))?),
            None => None,
        },
        mem_backend: match settings.get("mem-backend") {
            Some(v) => Some(parse_mem_backend(v).map_err(|e| err(format!("--mem-backend: {e}")))?),
            None => None,
        },
        poll_interval: match settings.get("poll-interval") {
            Some(v) => Some(parse_duration(v).map_err(|e| err(format!("--poll-interval: {e}")))?),
            None => None,
        },
        cpuset: match settings.get("cpus") {
            Some(v) => Some(v.parse::<CpuSet>().map_err(|e| err(format!("--cpus: {e}")))?),
            None => None,
        },
        thread_env: thread_spec.clone(),
    };

    let user_env: BTreeMap<String, String> = settings.env.iter().cloned().collect();
    let env_overlay = merge_overlay(&thread_env(&thread_spec), &user_env);

    let telemetry = TelemetryConfig {
        sample_interval: match settings.get("sample-interval") {
            Some(v) => parse_duration(v).map_err(|e| err(format!("--sample-interval: {e}")))?,
            None => DEFAULT_SAMPLE_INTERVAL,
        },
        output: settings.get("report").map(PathBuf::from),
        format: match settings.get("format") {
            Some(v) => v
                .parse::<ExportFormat>()
                .map_err(|e| err(format!("--format: {e}")))?,
            None => ExportFormat::Json,
        },
    };

    let spec = JobSpec {
        command,
        workdir: settings.get("workdir").map(PathBuf::from),
        env_overlay,
        backend,
        limits,
        grace: match settings.get("grace") {
            Some(v) => parse_duration(v).map_err(|e| err(format!("--grace: {e}")))?,
            None => DEFAULT_GRACE,
        },
        report_path: settings.get("report").map(PathBuf::from),
        telemetry,
        on_escape: match settings.get("on-escape") {
            Some("kill") | None => OnEscape::Kill,
            Some("report") => OnEscape::Report,
            Some(other) => return Err(err(format!("--on-escape: unknown mode {other}"))),
        },
    };
    spec.validate().map_err(|e| err(e.to_string()))?;
    Ok(spec)
}

fn parse_run(args: &[String]) -> Result<Command, UsageError> {
    let mut settings = Settings::default();
    // Config first so флаги override; scan for --config ahead of time.
    let mut i = 0;
    while i < args.len() {
        if args[i] == "--config" {
            let path = args
                .get(i + 1)
                .ok_or_else(|| UsageError("--config needs a path".into()))?;
            settings.load_config(path)?;
        }
        if args[i] == "--" {
            break;
        }
        i += 1;
    }

    let mut command = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let arg = &args[i];
        if arg == "--" {
            command = args[i + 1..].to_vec();
            break;
        }
        let Some(key) = arg.strip_prefix("--") else {
            return Err(UsageError(format!(
                "unexpected argument before --: {arg}"
            )));
        };
        if key == "config" {
            i += 2; // handled above
            continue;
        }
        if BOOL_KEYS.contains(&key) {
            settings.set_flag(key, true)?;
            i += 1;
            continue;
        }
        let value = args
            .get(i + 1)
            .ok_or_else(|| UsageError(format!("--{key} needs a value")))?;
        settings.set(key, value.clone())?;
        i += 2;
    }
    if command.is_empty() {
        return Err(UsageError("no command given after --".into()));
    }
    Ok(Command::Run(Box::new(build_jobspec(settings, command)?)))
}

fn parse_pymem(args: &[String]) -> Result<Command, UsageError> {
    match args.first().map(String::as_str) {
        Some("simulate") => {}
        other => {
            return Err(UsageError(format!(
                "pymem subcommand must be 'simulate', got {other:?}"
            )))
        }
    }
    let mut trace = None;
    let mut arena_kb = 256u64;
    let mut small_threshold = 512u64;
    let mut gc = [700u64, 10, 10];
    let mut sizes = None;
    let mut out = None;
    let mut i = 1;
    while i < args.len() {
        let key = args[i]
            .strip_prefix("--")
            .ok_or_else(|| UsageError(format!("unexpected argument: {}", args[i])))?;
        let value = args
            .get(i + 1)
            .ok_or_else(|| UsageError(format!("--{key} needs a value")))?;
        match key {
            "trace" => trace = Some(PathBuf::from(value)),
            "arena-kb" => {
                arena_kb = value
                    .parse()
                    .map_err(|_| UsageError(format!("--arena-kb: bad number {value}")))?;
            }
            "small-threshold" => {
                small_threshold = value
                    .parse()
                    .map_err(|_| UsageError(format!("--small-threshold: bad number {value}")))?;
            }
            "gc" => {
                let parts: Vec<&str> = value.split(',').collect();
                if parts.len() != 3 {
                    return Err(UsageError("--gc wants G0,G1,G2".into()));
                }
                for (slot, part) in gc.iter_mut().zip(parts) {
                    *slot = part
                        .trim()
                        .parse()
                        .map_err(|_| UsageError(format!("--gc: bad threshold {part}")))?;
                }
            }
            "sizes" => sizes = Some(PathBuf::from(value)),
            "out" => out = Some(PathBuf::from(value)),
            other => return Err(UsageError(format!("unknown option --{other}"))),
        }
        i += 2;
    }
    Ok(Command::PymemSimulate(PymemArgs {
        trace: trace.ok_or_else(|| UsageError("--trace is required".into()))?,
        arena_kb,
        small_threshold,
        gc,
        sizes,
        out: out.ok_or_else(|| UsageError("--out is required".into()))?,
    }))
}

/// Parses a full argv (program name excluded).
pub fn parse_args(argv: &[String]) -> Result<Command, UsageError> {
    match argv.first().map(String::as_str) {
        Some("run") => parse_run(&argv[1..]),
        Some("pymem") => parse_pymem(&argv[1..]),
        Some("help") | Some("--help") | Some("-h") => Ok(Command::Help),
        Some(other) => Err(UsageError(format!("unknown subcommand: {other}"))),
        None => Err(UsageError("missing subcommand".into())),
    }
}
