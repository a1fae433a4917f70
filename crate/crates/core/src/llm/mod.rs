//! Chat-model adapters: prompt rendering, output parsing and the HTTP client.

mod adapters;
pub mod client;
pub mod parse;
pub mod prompts;
pub mod render;

pub use adapters::{Exchange, LlmFactory, LlmPolicies, Transcript};
pub use client::{AdapterConfig, ChatClient, ChatMessage, ClientError, Completion, TokenUsage, UsageMeter};
pub use prompts::{template, PromptTemplate};
pub use render::{render, Bindings, RenderError, RenderedPrompt};
