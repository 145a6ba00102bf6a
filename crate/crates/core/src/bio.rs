//! Conversion between conjunct spans and per-token tag sequences.

use crate::error::{Error, Result};
use crate::types::{ConjunctSpan, Tag};

/// Labels span starts `B-C`, span interiors `I-C`, `cc_positions` `CC` and
/// every other position `O`.
pub fn encode_bio(spans: &[ConjunctSpan], cc_positions: &[usize], length: usize) -> Result<Vec<Tag>> {
    let mut tags = vec![None; length];
    for span in spans {
        if span.start >= span.end || span.end > length {
            return Err(Error::Validation(format!(
                "span [{}, {}) out of range for length {length}",
                span.start, span.end
            )));
        }
        for (i, slot) in tags.iter_mut().enumerate().take(span.end).skip(span.start) {
            if slot.is_some() {
                return Err(Error::Validation(format!("index {i} is covered by two spans")));
            }
            *slot = Some(if i == span.start { Tag::B } else { Tag::I });
        }
    }
    for &i in cc_positions {
        if i >= length {
            return Err(Error::Validation(format!(
                "conjunction index {i} out of range for length {length}"
            )));
        }
        if tags[i].is_some() {
            return Err(Error::Validation(format!(
                "conjunction index {i} lies inside a conjunct span or is repeated"
            )));
        }
        tags[i] = Some(Tag::Cc);
    }
    Ok(tags.into_iter().map(|t| t.unwrap_or(Tag::O)).collect())
}

/// Recovers spans from any tag sequence.
///
/// A maximal `B-C (I-C)*` run is one span. An `I-C` with no open span starts
/// a new one, so ill-formed decoder output is still scorable. `O` and `CC`
/// close the open span.
pub fn decode_bio(tags: &[Tag]) -> Vec<ConjunctSpan> {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            Tag::B => {
                if let Some(start) = open.replace(i) {
                    spans.push(ConjunctSpan::new(start, i));
                }
            }
            Tag::I => {
                open.get_or_insert(i);
            }
            Tag::O | Tag::Cc => {
                if let Some(start) = open.take() {
                    spans.push(ConjunctSpan::new(start, i));
                }
            }
        }
    }
    if let Some(start) = open {
        spans.push(ConjunctSpan::new(start, tags.len()));
    }
    spans
}
