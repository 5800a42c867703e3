//! Thread-limiting environment overlay.
//!
//! Builds the small set of environment variables that numerical libraries
//! consult for their thread counts. The artifact only guarantees *delivery*
//! of these variables to the child environment; whether the workload obeys
//! them is up to the workload.

use std::collections::BTreeMap;

pub const MKL_NUM_THREADS: &str = "MKL_NUM_THREADS";
pub const NUMEXPR_NUM_THREADS: &str = "NUMEXPR_NUM_THREADS";
pub const OMP_NUM_THREADS: &str = "OMP_NUM_THREADS";
pub const MKL_THREADING_LAYER: &str = "MKL_THREADING_LAYER";

/// Aliases some BLAS builds consult; exported only when
/// [`ThreadLimitSpec::extra_aliases`] is set.
pub const OPENBLAS_NUM_THREADS: &str = "OPENBLAS_NUM_THREADS";
pub const VECLIB_MAXIMUM_THREADS: &str = "VECLIB_MAXIMUM_THREADS";

/// Requested per-library thread limits.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ThreadLimitSpec {
    pub mkl_threads: Option<u32>,
    pub numexpr_threads: Option<u32>,
    pub omp_threads: Option<u32>,
    pub mkl_sequential: bool,
    /// Also export OPENBLAS/VECLIB aliases of the OMP value. Off by default.
    pub extra_aliases: bool,
}

impl ThreadLimitSpec {
    pub fn is_empty(&self) -> bool {
        self.mkl_threads.is_none()
            && self.numexpr_threads.is_none()
            && self.omp_threads.is_none()
            && !self.mkl_sequential
    }
}

/// Renders the overlay map for a [`ThreadLimitSpec`].
///
/// Only variables with a present field appear; an empty spec yields an empty
/// map. The map is ordered so overlay construction is deterministic.
pub fn thread_env(spec: &ThreadLimitSpec) -> BTreeMap<String, String> {
    let mut env = BTreeMap::new();
    if spec.mkl_sequential {
        env.insert(MKL_THREADING_LAYER.into(), "SEQUENTIAL".into());
    }
    if let Some(n) = spec.mkl_threads {
        env.insert(MKL_NUM_THREADS.into(), n.to_string());
    }
    if let Some(n) = spec.numexpr_threads {
        env.insert(NUMEXPR_NUM_THREADS.into(), n.to_string());
    }
    if let Some(n) = spec.omp_threads {
        env.insert(OMP_NUM_THREADS.into(), n.to_string());
    }
    if spec.extra_aliases {
        if let Some(n) = spec.omp_threads {
            env.insert(OPENBLAS_NUM_THREADS.into(), n.to_string());
            env.insert(VECLIB_MAXIMUM_THREADS.into(), n.to_string());
        }
    }
    env
}

/// Merges the thread overlay under the user overlay, last writer wins, with
/// the explicit user overlay winning on key collisions.
pub fn merge_overlay(
    thread: &BTreeMap<String, String>,
    user: &BTreeMap<String, String>,
) -> BTreeMap<String, String> {
    let mut merged = thread.clone();
    for (k, v) in user {
        merged.insert(k.clone(), v.clone());
    }
    merged
}
