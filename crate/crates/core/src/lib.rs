//! Core of the table question answering toolkit.
//!
//! Tables and QA examples live in [`table`]; [`ingest`] converts dataset
//! records into the unified JSONL format; [`linearize`] renders tables for
//! prompts; [`retrieval`] ranks table fragments; [`programs`] parses and runs
//! the three derivation formats; [`evaluation`] scores predictions;
//! [`reasoner`] drives an LLM; [`benchmark`] assembles long-context
//! evaluation sets.

pub mod api;
pub mod benchmark;
pub mod evaluation;
pub mod ingest;
pub mod linearize;
pub mod numeric;
pub mod programs;
pub mod reasoner;
pub mod retrieval;
pub mod table;

pub use table::{Answer, AnswerFormat, Category, Cell, ImageRef, MergedRegion, Passage, QAExample, UnifiedTable};
