//! HTTP service and command-line front end over the `finkpi` library.

pub mod api;
pub mod cli;

pub use api::{router, AppState, ErrorBody, QueryRequest};
