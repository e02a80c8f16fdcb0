pub mod eval;
pub mod extraction;
pub mod fixtures;
pub mod ingest;
pub mod pipeline;
pub mod rules;
pub mod sql;
pub mod store;
pub mod text_to_sql;
pub mod validation;
