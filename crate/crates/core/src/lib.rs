//! Persona-driven intersectional bias auditing.
//!
//! The pipeline: load identity classes and a corpus ([`corpus`]), embed text
//! ([`embeddings`]), score responses with WEAT-kernel association tests
//! ([`association`], [`scoring`]), collect generations from a chat endpoint
//! or replay fixtures ([`llmclient`]), aggregate persona-vs-neutral
//! differentials ([`audit`]), attribute scores to tokens ([`explain`]) and
//! render tables and density curves ([`report`]).

pub mod association;
pub mod audit;
pub mod config;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod explain;
pub mod hash;
pub mod http;
pub mod llmclient;
pub mod report;
pub mod scoring;
pub mod text;

pub use error::{Error, ErrorClass, Result};
