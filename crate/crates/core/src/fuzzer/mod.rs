//! Coverage-guided greybox fuzzing.
//!
//! Each campaign runs seeds, then walks the queue in FIFO order: every
//! entry gets the deterministic stages once, then havoc and splice rounds.
//! Inputs producing an unseen `(edge, bucket)` pair are queued; crashes and
//! hangs are kept apart and never mutated further.

mod campaign;
pub mod coverage;
pub mod mutate;
pub mod store;

pub use campaign::{
    default_clock, fuzz_program, Campaign, Clock, FuzzConfig, FuzzError, FuzzReport, FuzzStats, QueueEntry, Snapshot,
    SystemClock, Termination, VirtualClock, DEFAULT_BUDGET_MINUTES, DEFAULT_EXHAUST_AFTER, DEFAULT_MAX_INPUT_LEN,
    DEFAULT_SEED, MAX_SAVED_FAULTS,
};
pub use coverage::{bucket, is_interesting, Accumulator, Bucket, CoverageMap, Signature, MAP_SIZE};
pub use mutate::Stage;
