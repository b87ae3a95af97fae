//! Diagnosis harness for tool-augmented LLM agents.
//!
//! The crate runs function-calling agents and plain chain-of-thought
//! reasoning over semantically noised benchmarks, decomposes the accuracy
//! gap between them into formatting, protocol and computation components,
//! classifies agent failures, and trains a small continue/commit gate that
//! is consulted whenever the agent tries to submit an answer.
//!
//! Module map:
//!
//! * [`corpus`]: samples, chunk labels, JSONL storage and splitting.
//! * [`distractor`]: type-guided distractor generation and rule validation.
//! * [`backend`]: chat interface (HTTP endpoint, scripted replay, playbooks).
//! * [`toolbox`]: calculator, sentence search/read, value comparison.
//! * [`harness`]: the seven intervention conditions and suite runner.
//! * [`diagnostics`]: accuracy, gap decomposition, attribution, taxonomy.
//! * [`gate`]: feature extraction, MLP training, gated inference.

pub mod backend;
pub mod corpus;
pub mod diagnostics;
pub mod distractor;
pub mod gate;
pub mod harness;
pub mod text;
pub mod toolbox;

pub use backend::{Backend, BackendError, ChatMessage, ChatRequest, Role, ToolCall, ToolChoice};
pub use corpus::{Chunk, ChunkRole, Corpus, CorpusError, Sample, Task, Variant};
pub use harness::{Condition, Prediction, RunConfig, Trajectory};
