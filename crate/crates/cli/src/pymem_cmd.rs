//! `jobjail pymem simulate`: run the allocator/GC model over a trace file.

use serde::Serialize;

use jobjail_core::pymem::{gc_rounds, simulate, AllocTrace, ArenaConfig, GcConfig, MemoryEstimate, SizeTable};

use crate::args::PymemArgs;

#[derive(Serialize)]
struct SimOutput {
    config: SimConfig,
    estimate: MemoryEstimate,
    gc_schedule: Vec<ScheduleEntry>,
}

#[derive(Serialize)]
struct SimConfig {
    trace: String,
    arena_bytes: u64,
    small_threshold_bytes: u64,
    gc_thresholds: [u64; 3],
    events: usize,
}

#[derive(Serialize)]
struct ScheduleEntry {
    event: usize,
    generation: usize,
}

/// Returns the rendered JSON on success so tests can check it without
/// re-reading the file.
pub fn execute(args: &PymemArgs) -> Result<String, String> {
    let sizes = match &args.sizes {
        Some(path) => SizeTable::load(path).map_err(|e| e.to_string())?,
        None => SizeTable::default(),
    };
    let trace = AllocTrace::load(&args.trace, &sizes).map_err(|e| e.to_string())?;
    let arena = ArenaConfig {
        arena_bytes: args.arena_kb * 1024,
        small_threshold_bytes: args.small_threshold,
    };
    let gc = GcConfig {
        thresholds: args.gc,
    };
    let estimate = simulate(&trace, &arena, &gc).map_err(|e| e.to_string())?;
    let schedule = gc_rounds(&trace, &gc).map_err(|e| e.to_string())?;

    let output = SimOutput {
        config: SimConfig {
            trace: args.trace.display().to_string(),
            arena_bytes: arena.arena_bytes,
            small_threshold_bytes: arena.small_threshold_bytes,
            gc_thresholds: gc.thresholds,
            events: trace.len(),
        },
        estimate,
        gc_schedule: schedule
            .events
            .iter()
            .map(|&(event, generation)| ScheduleEntry { event, generation })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&output).map_err(|e| e.to_string())?;
    text.push('\n');
    std::fs::write(&args.out, &text)
        .map_err(|e| format!("cannot write {}: {e}", args.out.display()))?;
    Ok(text)
}
