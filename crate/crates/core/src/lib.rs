//! Context-centric runtime for semantic operator pipelines and agentic
//! `compute` / `search` operators over unstructured data.

pub mod agent;
pub mod cache;
pub mod config;
pub mod error;
pub mod exec;
pub mod llm;
pub mod model;
pub mod optimizer;
pub mod pipeline;
mod rank;
pub mod runtime;

pub use error::{Error, ParseError, Result, Span};
