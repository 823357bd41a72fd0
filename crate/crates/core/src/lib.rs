//! Finitely presented locally finite trees, their self-embeddings, and
//! sibling constructions.

pub mod finite_tree;
pub mod matching;
pub mod presentation;
pub mod embedding;
pub mod fixtures;
pub mod siblings;
