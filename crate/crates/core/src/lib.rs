pub mod gate;
pub mod harness;
pub mod llm;
pub mod policy;
pub mod search;
pub mod tree;
pub mod world;
