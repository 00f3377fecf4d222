//! Argument-graph construction and trust inference for short-form health videos.

pub mod builder;
pub mod eval;
pub mod evidence;
pub mod inference;
pub mod llm;
pub mod model;
pub mod pipeline;
