//! Multi-agent annotation of clinical diary transcripts: guideline-driven
//! prompts, model gateway, response parsing, disagreement adjudication,
//! and multi-label evaluation.

pub mod adjudication;
pub mod corpus;
pub mod gateway;
pub mod labels;
pub mod metrics;
pub mod parser;
pub mod pipeline;
pub mod prompt;
pub mod taxonomy;
