//! Shared plumbing for acceptance criteria.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Once;

use jobjail_core::telemetry::{import_json, ExportDoc};

pub fn gib(n: u64) -> u64 {
    n << 30
}

pub fn mib(n: u64) -> u64 {
    n << 20
}

pub fn bin_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_jobjail"))
        .parent()
        .expect("bin dir")
        .to_path_buf()
}

fn ensure_probes_built() {
    static BUILD: Once = Once::new();
    BUILD.call_once(|| {
        let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
        let status = Command::new(cargo)
            .args(["build", "-p", "jobjail-probes", "--bins"])
            .status()
            .expect("cargo build for probe fixtures");
        assert!(status.success(), "probe build failed");
    });
}

/// Absolute path of a probe fixture, building the fixtures on demand when
/// this test target runs in isolation.
pub fn probe(name: &str) -> PathBuf {
    let path = bin_dir().join(name);
    if !path.exists() {
        ensure_probes_built();
    }
    assert!(path.exists(), "probe binary missing: {}", path.display());
    path
}

pub fn jobjail() -> Command {
    Command::new(env!("CARGO_BIN_EXE_jobjail"))
}

pub fn run_jobjail<S: AsRef<str>>(args: &[S]) -> Output {
    let mut cmd = jobjail();
    for a in args {
        cmd.arg(a.as_ref());
    }
    cmd.output().expect("jobjail ran")
}

pub fn read_report(path: &Path) -> ExportDoc {
    let text = std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("report missing at {}: {e}", path.display()));
    import_json(&text).expect("report parses")
}

/// `jobjail-*` nodes left in any controller hierarchy.
pub fn leftover_controller_nodes() -> Vec<PathBuf> {
    let mut found = Vec::new();
    for root in [
        "/sys/fs/cgroup",
        "/sys/fs/cgroup/unified",
        "/sys/fs/cgroup/memory",
    ] {
        if let Ok(entries) = std::fs::read_dir(root) {
            for entry in entries.flatten() {
                if entry.file_name().to_string_lossy().starts_with("jobjail-") {
                    found.push(entry.path());
                }
            }
        }
    }
    found
}

pub fn pass(criterion: &str, detail: &str) {
    println!("acceptance: criterion {criterion}: PASS ({detail})");
}

pub fn skip(criterion: &str, reason: &str) {
    println!("acceptance: criterion {criterion}: SKIP ({reason})");
}
