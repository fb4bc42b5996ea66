//! Core library for MQM-style machine translation evaluation with
//! LLM judges: domain model, prompt registry, chat gateway, the
//! three-stage debate pipeline, single-call baselines, and the
//! meta-evaluation statistics suite.

pub mod baselines;
pub mod codec;
pub mod dataio;
pub mod debate;
pub mod gateway;
pub mod judge;
pub mod meta;
pub mod mqm;
pub mod pipeline;
pub mod prompts;
pub mod proto;
pub mod stage1;
pub mod transcript;
