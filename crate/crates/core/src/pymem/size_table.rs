use std::collections::BTreeMap;
use std::path::Path;

use crate::error::PymemError;

/// Object sizes per value-class descriptor, e.g. `integer:small`.
///
/// Sizes are interpreter-version dependent, so they are always looked up in a
/// table and never computed from first principles. Only the two classes with
/// known defaults ship built in; everything else comes from a user-provided
/// table file of `class=bytes` lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SizeTable {
    entries: BTreeMap<String, u64>,
}

impl Default for SizeTable {
    fn default() -> Self {
        let mut entries = BTreeMap::new();
        entries.insert("integer:small".to_string(), 28);
        entries.insert("integer:large".to_string(), 32);
        SizeTable { entries }
    }
}

impl SizeTable {
    /// Parses `class=bytes` lines on top of the built-in defaults.
    pub fn parse(text: &str) -> Result<Self, PymemError> {
        let mut table = SizeTable::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let (class, bytes) = line.split_once('=').ok_or(PymemError::BadSizeTable {
                line: idx + 1,
                reason: "expected class=bytes".into(),
            })?;
            let class = class.trim();
            let bytes: u64 = bytes.trim().parse().map_err(|e| PymemError::BadSizeTable {
                line: idx + 1,
                reason: format!("bad byte count: {e}"),
            })?;
            if class.is_empty() || bytes == 0 {
                return Err(PymemError::BadSizeTable {
                    line: idx + 1,
                    reason: "class must be nonempty and size > 0".into(),
                });
            }
            table.entries.insert(class.to_string(), bytes);
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, PymemError> {
        let text = std::fs::read_to_string(path).map_err(|e| PymemError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, class: &str) -> Option<u64> {
        self.entries.get(class).copied()
    }
}

/// Looks up the size of a value class in the table.
pub fn object_size(value_class: &str, table: &SizeTable) -> Result<u64, PymemError> {
    table
        .get(value_class)
        .ok_or_else(|| PymemError::UnknownDescriptor(value_class.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_integer_sizes() {
        let t = SizeTable::default();
        assert_eq!(object_size("integer:large", &t).unwrap(), 32);
        assert_eq!(object_size("integer:small", &t).unwrap(), 28);
    }

    #[test]
    fn unknown_descriptor_is_an_error() {
        let t = SizeTable::default();
        assert!(matches!(
            object_size("foo", &t),
            Err(PymemError::UnknownDescriptor(_))
        ));
    }

    #[test]
    fn parse_overrides_and_extends_defaults() {
        let t = SizeTable::parse("tuple:empty=40\ninteger:small=30\n\n").unwrap();
        assert_eq!(object_size("tuple:empty", &t).unwrap(), 40);
        assert_eq!(object_size("integer:small", &t).unwrap(), 30);
        assert_eq!(object_size("integer:large", &t).unwrap(), 32);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(SizeTable::parse("tuple 40").is_err());
        assert!(SizeTable::parse("tuple=zero").is_err());
        assert!(SizeTable::parse("=12").is_err());
        assert!(SizeTable::parse("x=0").is_err());
    }
}
