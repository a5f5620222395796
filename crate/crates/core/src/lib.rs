//! Macro-action discovery from demonstration corpora via lossless
//! compression, and reinforcement learning over the extended action set.

pub mod agent;
pub mod bounds;
pub mod dtw;
pub mod envs;
pub mod harness;
pub mod error;
pub mod huffman;
pub mod lzw;
pub mod trie;
pub mod types;

pub use error::{Error, Result};
