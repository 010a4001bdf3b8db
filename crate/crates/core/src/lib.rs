//! Auditing pipeline for code sharing in prediction-model research:
//! article screening, repository link resolution and retrieval, repository
//! flattening, reproducibility assessment, evaluation and cohort reporting.

pub mod assess;
pub mod backend;
pub mod compile;
pub mod evalmet;
pub mod fetch;
pub mod http;
pub mod ingest;
pub mod linkres;
pub mod pipeline;
pub mod prompts;
pub mod report;
pub mod screen;
pub mod store;
