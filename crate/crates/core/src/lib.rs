//! Fuzz-driven test-case augmentation for code representation datasets.
//!
//! Programs from a problem-labelled corpus are repaired until they compile,
//! built with edge-coverage instrumentation, fuzzed with a coverage-guided
//! loop, and replayed to collect input/output pairs. The pairs are rendered
//! through cloze prompt templates and appended to the program source to form
//! model-ready records. Retrieval (MAP@R) and classification (error rate)
//! metrics close the loop on the model side.

pub mod corpus;
pub mod fuzzer;
pub mod repair;
pub mod target;
pub mod toolchain;
pub mod eval;
pub mod harvest;
pub mod prompt;
pub mod orchestrator;
