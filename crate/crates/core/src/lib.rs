//! Curriculum-grounded retrieval and evidence-pointing dialogue engine.

pub mod cli;
pub mod corpus;
pub mod text;
pub mod index;
pub mod study;
pub mod dialogue;
pub mod service;
