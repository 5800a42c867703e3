//! Independent brute-force references the acceptance criteria check
//! against. Deliberately plain: one event at a time, linear scans, no state
//! shared with the implementations under test.

/// Trace event for the reference simulator (mirrors the public trace
/// format, defined locally so the oracle stands alone).
#[derive(Debug, Clone, Copy)]
pub enum Ev {
    Alloc { size: u64, tracked: bool },
    Free { target: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefOutcome {
    pub peak_bytes: u64,
    pub direct_heap_peak: u64,
    pub arena_count_peak: usize,
    pub rounds: [u64; 3],
    pub schedule: Vec<(usize, usize)>,
    pub surviving: [usize; 3],
}

/// One-event-at-a-time re-implementation of the allocator/GC model:
/// small objects first-fit into fixed arenas (an arena closes only when
/// empty), large ones on the heap; untracked frees release immediately;
/// tracked frees only mark, and a collection of the holding generation
/// releases them. After each tracked event the oldest generation whose
/// net-alloc counter strictly exceeds its threshold collects (at most one
/// round per event); survivors move one generation up, capped at the
/// oldest. Peaks are read after the event's allocation, before any
/// same-event collection.
pub fn reference_simulate(
    events: &[Ev],
    arena_bytes: u64,
    small_max: u64,
    thresholds: [u64; 3],
) -> RefOutcome {
    #[derive(Clone)]
    struct Obj {
        size: u64,
        arena_id: Option<u64>,
        tracked: bool,
        marked: bool,
        resident: bool,
        gen: usize,
    }
    let mut objs: Vec<Option<Obj>> = vec![None; events.len()];
    let mut open_ids: Vec<u64> = Vec::new();
    let mut open_free: Vec<u64> = Vec::new();
    let mut next_arena: u64 = 0;
    let mut heap: u64 = 0;
    let mut peak = 0u64;
    let mut heap_peak = 0u64;
    let mut arena_peak = 0usize;
    let mut counters = [0i64; 3];
    let mut gens: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut rounds = [0u64; 3];
    let mut schedule = Vec::new();

    fn release(
        id: usize,
        objs: &mut [Option<Obj>],
        open_ids: &mut Vec<u64>,
        open_free: &mut Vec<u64>,
        heap: &mut u64,
        arena_bytes: u64,
    ) {
        let obj = objs[id].as_mut().expect("release of missing object");
        assert!(obj.resident, "double release");
        obj.resident = false;
        match obj.arena_id {
            None => *heap -= obj.size,
            Some(aid) => {
                let slot = open_ids.iter().position(|&x| x == aid).expect("arena gone");
                open_free[slot] += obj.size;
                if open_free[slot] == arena_bytes {
                    open_ids.remove(slot);
                    open_free.remove(slot);
                }
            }
        }
    }

    for (i, ev) in events.iter().enumerate() {
        let mut tracked_event = false;
        match *ev {
            Ev::Alloc { size, tracked } => {
                let arena_id = if size <= small_max {
                    let mut slot = None;
                    for (k, free) in open_free.iter().enumerate() {
                        if *free >= size {
                            slot = Some(k);
                            break;
                        }
                    }
                    let k = match slot {
                        Some(k) => k,
                        None => {
                            open_ids.push(next_arena);
                            open_free.push(arena_bytes);
                            next_arena += 1;
                            open_ids.len() - 1
                        }
                    };
                    open_free[k] -= size;
                    Some(open_ids[k])
                } else {
                    heap += size;
                    None
                };
                objs[i] = Some(Obj {
                    size,
                    arena_id,
                    tracked,
                    marked: false,
                    resident: true,
                    gen: 0,
                });
                if tracked {
                    counters[0] += 1;
                    gens[0].push(i);
                    tracked_event = true;
                }
            }
            Ev::Free { target } => {
                let tracked = objs[target].as_ref().expect("free of missing").tracked;
                if tracked {
                    let gen = objs[target].as_ref().unwrap().gen;
                    counters[gen] -= 1;
                    objs[target].as_mut().unwrap().marked = true;
                    tracked_event = true;
                } else {
                    release(
                        target,
                        &mut objs,
                        &mut open_ids,
                        &mut open_free,
                        &mut heap,
                        arena_bytes,
                    );
                }
            }
        }

        let total = open_ids.len() as u64 * arena_bytes + heap;
        peak = peak.max(total);
        heap_peak = heap_peak.max(heap);
        arena_peak = arena_peak.max(open_ids.len());

        if tracked_event {
            let mut fired = None;
            for gen in (0..3).rev() {
                if counters[gen] > thresholds[gen] as i64 {
                    fired = Some(gen);
                    break;
                }
            }
            if let Some(gen) = fired {
                rounds[gen] += 1;
                schedule.push((i + 1, gen));
                let members = std::mem::take(&mut gens[gen]);
                let mut survivors = Vec::new();
                for id in members {
                    if objs[id].as_ref().unwrap().marked {
                        release(
                            id,
                            &mut objs,
                            &mut open_ids,
                            &mut open_free,
                            &mut heap,
                            arena_bytes,
                        );
                    } else {
                        survivors.push(id);
                    }
                }
                counters[gen] = 0;
                if gen + 1 < 3 {
                    counters[gen + 1] += survivors.len() as i64;
                    for &id in &survivors {
                        objs[id].as_mut().unwrap().gen = gen + 1;
                    }
                    gens[gen + 1].extend(survivors);
                } else {
                    gens[2] = survivors;
                }
            }
        }
    }

    RefOutcome {
        peak_bytes: peak,
        direct_heap_peak: heap_peak,
        arena_count_peak: arena_peak,
        rounds,
        schedule,
        surviving: [gens[0].len(), gens[1].len(), gens[2].len()],
    }
}

/// Deterministic xorshift generator for reproducible random traces.
pub struct Rng(u64);

impl Rng {
    pub fn new(seed: u64) -> Rng {
        Rng(seed.max(1))
    }

    pub fn next(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }
}

/// Random well-formed traces: ~35% frees (of random live allocs), sizes
/// spanning both sides of the small-object threshold, mixed trackedness.
pub fn random_trace(rng: &mut Rng, max_events: usize) -> Vec<Ev> {
    let len = 1 + rng.below(max_events as u64) as usize;
    let mut events = Vec::with_capacity(len);
    let mut live: Vec<usize> = Vec::new();
    for _ in 0..len {
        if !live.is_empty() && rng.below(100) < 35 {
            let pick = rng.below(live.len() as u64) as usize;
            let target = live.swap_remove(pick);
            events.push(Ev::Free { target });
        } else {
            let size = 1 + rng.below(1600);
            let tracked = rng.below(100) < 50;
            live.push(events.len());
            events.push(Ev::Alloc { size, tracked });
        }
    }
    events
}

/// Recursive RSS sum over an explicit process tree: children grouped by
/// parent, roots are processes whose parent is outside the table, zombies
/// contribute nothing. The recursion is the point: depth must not matter
/// to the flat accounting it checks.
pub fn tree_rss_sum(procs: &[(i32, i32, u64, bool)]) -> u64 {
    use std::collections::HashMap;
    let mut children: HashMap<i32, Vec<usize>> = HashMap::new();
    let pids: std::collections::HashSet<i32> = procs.iter().map(|p| p.0).collect();
    for (idx, &(_, ppid, _, _)) in procs.iter().enumerate() {
        children.entry(ppid).or_default().push(idx);
    }

    fn visit(
        idx: usize,
        procs: &[(i32, i32, u64, bool)],
        children: &std::collections::HashMap<i32, Vec<usize>>,
    ) -> u64 {
        let (pid, _, rss, zombie) = procs[idx];
        let own = if zombie { 0 } else { rss };
        let below: u64 = children
            .get(&pid)
            .map(|kids| kids.iter().map(|&k| visit(k, procs, children)).sum())
            .unwrap_or(0);
        own + below
    }

    procs
        .iter()
        .enumerate()
        .filter(|(_, &(_, ppid, _, _))| !pids.contains(&ppid))
        .map(|(idx, _)| visit(idx, procs, &children))
        .sum()
}
