//! Data-to-text generation over dialogue-act meaning representations.
//!
//! The crate covers the full loop: corpus loading and linearization, a small
//! tape-based autodiff core, GRU encoder-decoder sequence models with
//! feed-forward attention, decoding (greedy, beam, ancestral, and
//! noise-injection sampling), rule- and classifier-based parsing of generated
//! text back into meaning representations, parser-filtered self-training, and
//! evaluation (slot errors, BLEU, surface statistics).

pub mod corpus;
pub mod error;
pub mod eval;
pub mod mrparse;
pub mod nn;
pub mod selftrain;
pub mod seq2seq;

pub use error::{Error, Result};
