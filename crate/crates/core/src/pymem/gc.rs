use std::collections::{HashMap, HashSet};

use crate::error::PymemError;
use crate::pymem::{AllocEvent, AllocTrace};

/// Number of object generations in the model.
pub const GENERATIONS: usize = 3;

/// Per-generation collection thresholds, youngest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GcConfig {
    pub thresholds: [u64; GENERATIONS],
}

impl Default for GcConfig {
    fn default() -> Self {
        GcConfig {
            thresholds: [700, 10, 10],
        }
    }
}

impl GcConfig {
    pub fn validate(&self) -> Result<(), PymemError> {
        if self.thresholds.iter().any(|&t| t == 0) {
            return Err(PymemError::BadConfig("gc thresholds must be > 0".into()));
        }
        Ok(())
    }
}

/// When and on which generation each GC round fired.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GcSchedule {
    pub rounds: [u64; GENERATIONS],
    /// `(event ordinal, generation)` per round. Ordinals are 1-based: a round
    /// recorded at ordinal `n` fired while processing the n-th trace event.
    pub events: Vec<(usize, usize)>,
}

/// Counter-driven generational model.
///
/// Every generation keeps a net-allocation counter: +1 for each object
/// allocated into it (new objects enter generation 0, survivors of a round
/// enter the next-older generation), -1 when one of its objects is marked
/// unreachable by a `free` event. After each tracked event, the oldest
/// generation whose counter strictly exceeds its threshold is collected, at
/// most one round per event, so a cascade spreads over consecutive tracked
/// events. A round releases the generation's unreachable objects and promotes
/// the rest, capped at the oldest generation (objects already oldest stay
/// put without recounting).
///
/// Note this counter model differs from real interpreters, where an older
/// generation counts collections of the younger one instead of object
/// moves.
pub(crate) struct GcEngine {
    thresholds: [u64; GENERATIONS],
    counters: [i64; GENERATIONS],
    gens: [Vec<usize>; GENERATIONS],
    gen_of: HashMap<usize, usize>,
    unreachable: HashSet<usize>,
    pub(crate) schedule: GcSchedule,
}

impl GcEngine {
    pub(crate) fn new(config: &GcConfig) -> Self {
        GcEngine {
            thresholds: config.thresholds,
            counters: [0; GENERATIONS],
            gens: Default::default(),
            gen_of: HashMap::new(),
            unreachable: HashSet::new(),
            schedule: GcSchedule::default(),
        }
    }

    pub(crate) fn on_alloc(&mut self, id: usize) {
        self.gens[0].push(id);
        self.gen_of.insert(id, 0);
        self.counters[0] += 1;
    }

    pub(crate) fn on_free_mark(&mut self, id: usize) {
        let gen = self.gen_of[&id];
        self.counters[gen] -= 1;
        self.unreachable.insert(id);
    }

    /// Runs the post-event threshold check. Returns the ids collected by the
    /// round, if one fired.
    pub(crate) fn check(&mut self, event_ordinal: usize) -> Vec<usize> {
        for gen in (0..GENERATIONS).rev() {
            if self.counters[gen] > self.thresholds[gen] as i64 {
                return self.collect(gen, event_ordinal);
            }
        }
        Vec::new()
    }

    fn collect(&mut self, gen: usize, event_ordinal: usize) -> Vec<usize> {
        self.schedule.rounds[gen] += 1;
        self.schedule.events.push((event_ordinal, gen));
        let members = std::mem::take(&mut self.gens[gen]);
        let mut dead = Vec::new();
        let mut live = Vec::new();
        for id in members {
            if self.unreachable.remove(&id) {
                self.gen_of.remove(&id);
                dead.push(id);
            } else {
                live.push(id);
            }
        }
        self.counters[gen] = 0;
        if gen + 1 < GENERATIONS {
            self.counters[gen + 1] += live.len() as i64;
            for &id in &live {
                self.gen_of.insert(id, gen + 1);
            }
            self.gens[gen + 1].extend(live);
        } else {
            self.gens[gen] = live;
        }
        dead
    }

    pub(crate) fn surviving_per_generation(&self) -> [usize; GENERATIONS] {
        let mut out = [0; GENERATIONS];
        for (gen, members) in self.gens.iter().enumerate() {
            out[gen] = members.len();
        }
        out
    }
}

/// Replays only the GC-relevant part of a trace and reports the rounds it
/// would trigger. A free counts as tracked iff the alloc it targets was.
pub fn gc_rounds(trace: &AllocTrace, gc: &GcConfig) -> Result<GcSchedule, PymemError> {
    gc.validate()?;
    let mut engine = GcEngine::new(gc);
    let events = trace.events();
    for (idx, ev) in events.iter().enumerate() {
        let tracked = match *ev {
            AllocEvent::Alloc { gc_tracked, .. } => {
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
                _ => false,
            },
        };
        if tracked {
            engine.check(idx + 1);
        }
    }
    Ok(engine.schedule)
}
