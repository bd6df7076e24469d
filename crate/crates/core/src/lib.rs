//! Traffic-scene tagging with vision-language model endpoints.
//!
//! The pipeline renders one multiple-choice prompt per (image, category),
//! sends it to an OpenAI-compatible chat endpoint, maps the free-text answer
//! onto the category's tag vocabulary and scores the result against a
//! ground-truth manifest with accuracy and macro-F1.

pub mod backend;
pub mod cli;
pub mod dataset;
pub mod metrics;
pub mod parsing;
pub mod prompting;
pub mod record;
pub mod report;
pub mod schema;
pub mod text;

pub use record::PredictionRecord;
pub use schema::{builtin_schema, Category, CategorySchema, TaskKind};
