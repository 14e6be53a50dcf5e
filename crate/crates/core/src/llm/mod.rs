//! Language-model labeling: the chat client with its record/replay cache,
//! the prompt templates, response parsing, and the three-stage chain that
//! turns a narration into per-action state verdicts.

pub mod chain;
pub mod client;
pub mod parse;
pub mod prompts;
