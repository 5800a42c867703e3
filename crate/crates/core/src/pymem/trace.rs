use std::path::Path;

use crate::error::PymemError;
use crate::pymem::SizeTable;

/// One allocation or free in a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocEvent {
    Alloc { size: u64, gc_tracked: bool },
    /// `target` is the 0-based event index of the alloc being freed.
    Free { target: usize },
}

/// A validated, ordered allocation/free event stream.
///
/// Validation guarantees every free targets an earlier alloc event that no
/// other free has already targeted, so simulators can index blindly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocTrace {
    events: Vec<AllocEvent>,
}

impl AllocTrace {
    pub fn new(events: Vec<AllocEvent>) -> Result<Self, PymemError> {
        let mut freed = vec![false; events.len()];
        for (idx, ev) in events.iter().enumerate() {
            match *ev {
                AllocEvent::Alloc { size, .. } => {
                    if size == 0 {
                        return Err(PymemError::BadTrace {
                            line: idx + 1,
                            reason: "alloc size must be > 0".into(),
                        });
                    }
                }
                AllocEvent::Free { target } => {
                    if target >= idx {
                        return Err(PymemError::BadFree {
                            event: idx,
                            target,
                            reason: "free must target an earlier event".into(),
                        });
                    }
                    match events[target] {
                        AllocEvent::Alloc { .. } => {}
                        AllocEvent::Free { .. } => {
                            return Err(PymemError::BadFree {
                                event: idx,
                                target,
                                reason: "free targets a free event".into(),
                            });
                        }
                    }
                    if freed[target] {
                        return Err(PymemError::BadFree {
                            event: idx,
                            target,
                            reason: "already freed".into(),
                        });
                    }
                    freed[target] = true;
                }
            }
        }
        Ok(AllocTrace { events })
    }

    pub fn events(&self) -> &[AllocEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Parses the line-oriented trace format.
    ///
    /// Every line is one event; the index a `free` refers to is the 0-based
    /// line index of its alloc. Lines are either
    /// `alloc,<bytes>,<tracked:0|1>` or `free,<alloc-line-index>`; `<bytes>`
    /// may also be `@<class>` to pull the size from the table.
    pub fn parse(text: &str, sizes: &SizeTable) -> Result<Self, PymemError> {
        let mut events = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let bad = |reason: String| PymemError::BadTrace {
                line: idx + 1,
                reason,
            };
            let mut fields = line.split(',').map(str::trim);
            match fields.next() {
                Some("alloc") => {
                    let size_field = fields
                        .next()
                        .ok_or_else(|| bad("alloc needs a size".into()))?;
                    let size = if let Some(class) = size_field.strip_prefix('@') {
                        super::object_size(class, sizes)?
                    } else {
                        size_field
                            .parse()
                            .map_err(|e| bad(format!("bad size: {e}")))?
                    };
                    let tracked = match fields.next() {
                        Some("0") => false,
                        Some("1") => true,
                        other => return Err(bad(format!("bad tracked flag: {other:?}"))),
                    };
                    if fields.next().is_some() {
                        return Err(bad("trailing fields".into()));
                    }
                    events.push(AllocEvent::Alloc {
                        size,
                        gc_tracked: tracked,
                    });
                }
                Some("free") => {
                    let target = fields
                        .next()
                        .ok_or_else(|| bad("free needs a line index".into()))?
                        .parse()
                        .map_err(|e| bad(format!("bad line index: {e}")))?;
                    if fields.next().is_some() {
                        return Err(bad("trailing fields".into()));
                    }
                    events.push(AllocEvent::Free { target });
                }
                other => return Err(bad(format!("unknown op {other:?}"))),
            }
        }
        AllocTrace::new(events)
    }

    pub fn load(path: &Path, sizes: &SizeTable) -> Result<Self, PymemError> {
        let text = std::fs::read_to_string(path).map_err(|e| PymemError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text, sizes)
    }
}
