//! Word acquisition from parallel speech and gaze streams.
//!
//! Content words from an utterance are paired with the entities a user
//! fixated while speaking, and EM-trained translation models learn which
//! words refer to which entities. Temporal and semantic constraints sharpen
//! the alignment, a logistic classifier filters out utterances whose gaze is
//! unrelated to the speech, and simulation harnesses replay online
//! vocabulary growth.

pub mod align;
pub mod cli;
pub mod corpus;
pub mod coupling;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod semantics;
pub mod simulate;

pub use error::{Error, Result};

use sha2::{Digest, Sha256};

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
