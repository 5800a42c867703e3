//! Nothing to see here beyond tests: the rlimit-backed backends are plain
//! pre-exec hooks (see [`crate::jail::SpawnHooks`]) and the kernel does the
//! rest. These tests pin down the two behaviors the backends rely on.
