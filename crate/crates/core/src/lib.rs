//! Agent pipeline that turns structured natural-language optimization
//! problems into solver programs, runs them in per-attempt workspaces,
//! tests and repairs them, and benchmarks the workflow over a corpus.

pub mod agent;
pub mod bench;
pub mod corpus;
pub mod craft;
pub mod llm;
pub mod prompts;
pub mod sandbox;
pub mod snop;
