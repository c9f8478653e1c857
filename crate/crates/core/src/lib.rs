//! Joint coreference resolution and character linking over scene-level
//! dialogue transcripts.
//!
//! Mention representations are built from a contextual token encoder plus a
//! speaker embedding, refined by self-attention over the mentions of a scene,
//! and shared by an antecedent-ranking coreference head and a character
//! classification head trained with a single averaged loss.

pub mod autograd;
pub mod corpus;
pub mod decode;
pub mod encoder;
pub mod error;
pub mod harness;
pub mod heads;
pub mod metrics;
pub mod mlsa;
pub mod model;
pub mod nn;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
