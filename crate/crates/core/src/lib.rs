//! Coordination parsing for spoken-language utterances.
//!
//! Conjunct boundaries are predicted as a per-token tagging problem over the
//! inventory `O`, `B-C`, `I-C`, `CC`. The crate covers synthesis of labeled
//! data ([`datagen`]), a BiLSTM tagger with softmax or linear-chain CRF
//! decoding ([`model`], [`crf`]), an optional slot-adversarial branch
//! ([`adversarial`]), training with early stopping ([`training`]),
//! conjunct-level evaluation ([`eval`]) and a tree-pattern baseline over
//! constituency parses ([`treepattern`]).

pub mod adversarial;
pub mod bio;
pub mod checkpoint;
pub mod corpus;
pub mod crf;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod model;
pub mod neural;
pub mod rng;
pub mod training;
pub mod treepattern;
pub mod types;

pub use bio::{decode_bio, encode_bio};
pub use error::{Error, Result};
pub use eval::{evaluate, EvalReport, Tagger};
pub use model::{Decoder, ModelConfig, TaggerModel};
pub use types::{tokenize, ConjunctSpan, DatasetSplit, LabeledUtterance, Tag};
