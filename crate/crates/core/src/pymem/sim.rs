use std::collections::HashMap;

use serde::Serialize;

use crate::error::PymemError;
use crate::pymem::gc::GcEngine;
use crate::pymem::{AllocEvent, AllocTrace, GcConfig, GENERATIONS};

/// Arena sizing for the small-object pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArenaConfig {
    pub arena_bytes: u64,
    pub small_threshold_bytes: u64,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        ArenaConfig {
            arena_bytes: 256 * 1024,
            small_threshold_bytes: 512,
        }
    }
}

impl ArenaConfig {
    pub fn validate(&self) -> Result<(), PymemError> {
        if !(self.arena_bytes > self.small_threshold_bytes && self.small_threshold_bytes > 0) {
            return Err(PymemError::BadConfig(
                "need arena_bytes > small_threshold_bytes > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Simulated memory outcome for a trace.
///
/// `peak_bytes` is the maximum of reserved arena bytes plus direct heap over
/// the whole trace; `direct_heap_bytes` and `arena_count_peak` track their
/// own maxima. An arena counts at its full reserved size from the moment the
/// first object needs it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MemoryEstimate {
    pub peak_bytes: u64,
    pub direct_heap_bytes: u64,
    pub arena_count_peak: usize,
    pub gc_rounds: [u64; GENERATIONS],
    pub surviving_objects: [usize; GENERATIONS],
}

#[derive(Debug)]
enum Placement {
    Heap,
    Arena(u64),
}

struct LiveObject {
    size: u64,
    placement: Placement,
}

struct ArenaSlot {
    id: u64,
    free: u64,
}

struct SimState {
    arena_bytes: u64,
    arenas: Vec<ArenaSlot>,
    next_arena_id: u64,
    heap: u64,
    live: HashMap<usize, LiveObject>,
    peak_total: u64,
    peak_heap: u64,
    peak_arenas: usize,
}

impl SimState {
    fn place(&mut self, id: usize, size: u64, small: bool) {
        let placement = if small {
            // First fit over open arenas in creation order.
            let slot = match self.arenas.iter_mut().find(|a| a.free >= size) {
                Some(slot) => slot,
                None => {
                    self.arenas.push(ArenaSlot {
                        id: self.next_arena_id,
                        free: self.arena_bytes,
                    });
                    self.next_arena_id += 1;
                    self.arenas.last_mut().unwrap()
                }
            };
            slot.free -= size;
            Placement::Arena(slot.id)
        } else {
            self.heap += size;
            Placement::Heap
        };
        self.live.insert(id, LiveObject { size, placement });
    }

    fn release(&mut self, id: usize) {
        let obj = self.live.remove(&id).expect("release of unknown object");
        match obj.placement {
            Placement::Heap => self.heap -= obj.size,
            Placement::Arena(arena_id) => {
                let idx = self
                    .arenas
                    .iter()
                    .position(|a| a.id == arena_id)
                    .expect("arena vanished while occupied");
                self.arenas[idx].free += obj.size;
                if self.arenas[idx].free == self.arena_bytes {
                    self.arenas.remove(idx);
                }
            }
        }
    }

    fn note_peaks(&mut self) {
        let total = self.arenas.len() as u64 * self.arena_bytes + self.heap;
        self.peak_total = self.peak_total.max(total);
        self.peak_heap = self.peak_heap.max(self.heap);
        self.peak_arenas = self.peak_arenas.max(self.arenas.len());
    }
}

/// Replays a trace through the arena/heap/GC model.
///
/// Untracked objects are released at their `free` event; tracked objects are
/// only marked then and hold their memory until a collection of their
/// generation releases them. Peaks are sampled after an event's allocation
/// lands and before any same-event collection shrinks the state, matching
/// what a resident-size monitor would have seen.
pub fn simulate(
    trace: &AllocTrace,
    arena: &ArenaConfig,
    gc: &GcConfig,
) -> Result<MemoryEstimate, PymemError> {
    arena.validate()?;
    gc.validate()?;
    let mut state = SimState {
        arena_bytes: arena.arena_bytes,
        arenas: Vec::new(),
        next_arena_id: 0,
        heap: 0,
        live: HashMap::new(),
        peak_total: 0,
        peak_heap: 0,
        peak_arenas: 0,
    };
    let mut engine = GcEngine::new(gc);
    let events = trace.events();
    for (idx, ev) in events.iter().enumerate() {
        let tracked_event = match *ev {
            AllocEvent::Alloc { size, gc_tracked } => {
                state.place(idx, size, size <= arena.small_threshold_bytes);
                if gc_tracked {
                    engine.on_alloc(idx);
                }
                gc_tracked
            }
            AllocEvent::Free { target } => match events[target] {
                AllocEvent::Alloc { gc_tracked: true, .. } => {
                    engine.on_free_mark(target);
                    true
                }
                _ => {
                    state.release(target);
                    false
                }
            },
        };
        state.note_peaks();
        if tracked_event {
            for dead in engine.check(idx + 1) {
                state.release(dead);
            }
        }
    }
    Ok(MemoryEstimate {
        peak_bytes: state.peak_total,
        direct_heap_bytes: state.peak_heap,
        arena_count_peak: state.peak_arenas,
        gc_rounds: engine.schedule.rounds,
        surviving_objects: engine.surviving_per_generation(),
    })
}
