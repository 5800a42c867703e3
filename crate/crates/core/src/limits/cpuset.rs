use std::fmt;
use std::str::FromStr;

use crate::error::LimitError;

/// A set of logical CPU ids, parsed from list syntax like `0-3,8`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CpuSet {
    ids: Vec<usize>,
}

impl CpuSet {
    pub fn new(mut ids: Vec<usize>) -> Result<CpuSet, LimitError> {
        if ids.is_empty() {
            return Err(LimitError::EmptyCpuset);
        }
        ids.sort_unstable();
        ids.dedup();
        Ok(CpuSet { ids })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, cpu: usize) -> bool {
        self.ids.binary_search(&cpu).is_ok()
    }

    pub fn validate(&self, host_cpus: usize) -> Result<(), LimitError> {
        match self.ids.iter().find(|&&c| c >= host_cpus) {
            Some(&bad) => Err(LimitError::BadCpu(bad, host_cpus)),
            None => Ok(()),
        }
    }
}

impl FromStr for CpuSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut ids = Vec::new();
        for part in s.split(',') {
            let part = part.trim();
            if part.is_empty() {
                return Err("empty cpuset element".into());
            }
            match part.split_once('-') {
                Some((a, b)) => {
                    let a: usize = a.trim().parse().map_err(|_| format!("bad cpu id: {a}"))?;
                    let b: usize = b.trim().parse().map_err(|_| format!("bad cpu id: {b}"))?;
                    if a > b {
                        return Err(format!("backwards range {part}"));
                    }
                    ids.extend(a..=b);
                }
                None => {
                    ids.push(part.parse().map_err(|_| format!("bad cpu id: {part}"))?);
                }
            }
        }
        CpuSet::new(ids).map_err(|e| e.to_string())
    }
}

impl fmt::Display for CpuSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        let mut i = 0;
        while i < self.ids.len() {
            let start = self.ids[i];
            let mut end = start;
            while i + 1 < self.ids.len() && self.ids[i + 1] == end + 1 {
                end = self.ids[i + 1];
                i += 1;
            }
            if !first {
                write!(f, ",")?;
            }
            if start == end {
                write!(f, "{start}")?;
            } else {
                write!(f, "{start}-{end}")?;
            }
            first = false;
            i += 1;
        }
        Ok(())
    }
}
