//! Domain types shared across the crate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bio;
use crate::error::{Error, Result};

/// Per-token coordination label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    O,
    /// First token of a conjunct.
    B,
    /// Continuation of a conjunct.
    I,
    /// The coordinating conjunction.
    Cc,
}

impl Tag {
    /// Size of the tag inventory.
    pub const COUNT: usize = 4;
    pub const ALL: [Tag; Tag::COUNT] = [Tag::O, Tag::B, Tag::I, Tag::Cc];

    pub fn index(self) -> usize {
        match self {
            Tag::O => 0,
            Tag::B => 1,
            Tag::I => 2,
            Tag::Cc => 3,
        }
    }

    pub fn from_index(index: usize) -> Option<Tag> {
        Tag::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::O => "O",
            Tag::B => "B-C",
            Tag::I => "I-C",
            Tag::Cc => "CC",
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "O" => Ok(Tag::O),
            "B-C" => Ok(Tag::B),
            "I-C" => Ok(Tag::I),
            "CC" => Ok(Tag::Cc),
            other => Err(Error::Data(format!("unknown tag {other:?}"))),
        }
    }
}

impl Serialize for Tag {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Half-open token interval `[start, end)` covering one conjunct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConjunctSpan {
    pub start: usize,
    pub end: usize,
}

impl ConjunctSpan {
    pub fn new(start: usize, end: usize) -> Self {
        ConjunctSpan { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

impl From<(usize, usize)> for ConjunctSpan {
    fn from((start, end): (usize, usize)) -> Self {
        ConjunctSpan { start, end }
    }
}

/// Lowercased whitespace tokenization.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// A tokenized utterance with gold coordination tags.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledUtterance {
    pub tokens: Vec<String>,
    pub tags: Vec<Tag>,
    #[serde(default)]
    pub slot_type: String,
}

impl LabeledUtterance {
    pub fn new(tokens: Vec<String>, tags: Vec<Tag>, slot_type: impl Into<String>) -> Result<Self> {
        let utt = LabeledUtterance {
            tokens,
            tags,
            slot_type: slot_type.into(),
        };
        utt.validate()?;
        Ok(utt)
    }

    /// Checks the length invariants. Ill-formed BIO is accepted here; the
    /// generator is responsible for well-formed output.
    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::Validation("utterance has no tokens".into()));
        }
        if self.tokens.len() != self.tags.len() {
            return Err(Error::Validation(format!(
                "{} tokens but {} tags",
                self.tokens.len(),
                self.tags.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of `B-C` tags.
    pub fn conjunct_count(&self) -> usize {
        self.tags.iter().filter(|&&t| t == Tag::B).count()
    }

    pub fn spans(&self) -> Vec<ConjunctSpan> {
        bio::decode_bio(&self.tags)
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<LabeledUtterance>,
    pub validation: Vec<LabeledUtterance>,
    pub test: Vec<LabeledUtterance>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_indices_are_stable() {
        for (i, tag) in Tag::ALL.iter().enumerate() {
            assert_eq!(tag.index(), i);
            assert_eq!(Tag::from_index(i), Some(*tag));
            assert_eq!(tag.as_str().parse::<Tag>().unwrap(), *tag);
        }
        assert_eq!(Tag::from_index(4), None);
        assert!("B".parse::<Tag>().is_err());
    }

    #[test]
    fn utterance_length_mismatch_is_rejected() {
        let err = LabeledUtterance::new(vec!["a".into()], vec![], "X").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(LabeledUtterance::new(vec![], vec![], "X").is_err());
    }

    #[test]
    fn tokenize_lowercases_and_splits() {
        assert_eq!(tokenize("  Add Peanut\tbutter "), ["add", "peanut", "butter"]);
    }
}
