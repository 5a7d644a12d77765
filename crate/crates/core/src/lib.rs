//! Gradient-free cross-lingual knowledge-editing evaluation.
//!
//! The crate covers the whole pipeline: unifying source datasets into a
//! four-query entry format, expanding them into target languages, picking
//! in-context demonstrations (random or by embedding similarity), assembling
//! cross-lingual prompts, scoring a black-box model with F1/EM and the
//! probability-based S/M metrics, and correlating per-language transfer with
//! typological similarity to English.

pub mod analysis;
pub mod dataset;
pub mod http;
pub mod lang;
pub mod lm;
pub mod metrics;
pub mod model;
pub mod prompting;
pub mod retrieval;
pub mod runner;
pub mod text;

pub use lang::LanguageCode;
pub use model::{Demonstration, KnowledgeFact, QueryKind, ScoredCompletion, TaskId, TestQuery, UnifiedEntry};
