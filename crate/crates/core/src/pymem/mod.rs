//! Interpreter memory-model advisor.
//!
//! Estimates the memory behavior of an interpreted workload from an
//! allocation trace, modeling three mechanisms: fixed per-object sizes looked
//! up in a [`SizeTable`], small-object pooling in fixed-size arenas, and
//! generational GC driven by per-generation net-allocation counters.
//!
//! The model is deliberately simple and deterministic. Objects at most
//! [`ArenaConfig::small_threshold_bytes`] bytes go into 256 KB arenas
//! (first-fit over open arenas, a new arena is reserved when none has room,
//! an arena is released only when completely empty); larger objects count
//! against the direct heap. GC-tracked objects are not released when their
//! `free` event arrives: the event only marks them unreachable, and the next
//! collection of their generation converts them into actual frees. That is
//! how the trace encodes reference cycles, which refcounting alone would
//! never release.

mod gc;
mod sim;
mod size_table;
mod trace;

pub use gc::{gc_rounds, GcConfig, GcSchedule, GENERATIONS};
pub use sim::{simulate, ArenaConfig, MemoryEstimate};
pub use size_table::{object_size, SizeTable};
pub use trace::{AllocEvent, AllocTrace};
