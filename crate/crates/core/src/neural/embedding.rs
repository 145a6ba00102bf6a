//! Vocabularies and embedding initialization.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::Array2;
use rand::Rng;

use super::Float;
use crate::error::{Error, Result};

/// Token vocabulary with reserved padding and unknown entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;
    pub const PAD_TOKEN: &'static str = "<pad>";
    pub const UNK_TOKEN: &'static str = "<unk>";

    /// Vocabulary of every distinct item, in first-seen order after the
    /// reserved entries.
    pub fn build<I, S>(items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = Vocab::from_tokens(Vec::new()).expect("empty vocabulary is valid");
        for item in items {
            let item = item.as_ref();
            if !vocab.index.contains_key(item) {
                vocab.index.insert(item.to_string(), vocab.tokens.len());
                vocab.tokens.push(item.to_string());
            }
        }
        vocab
    }

    /// Rebuilds a vocabulary from its non-reserved entries in index order.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut all = vec![Self::PAD_TOKEN.to_string(), Self::UNK_TOKEN.to_string()];
        all.extend(tokens);
        let mut index = HashMap::with_capacity(all.len());
        for (i, t) in all.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        Ok(Vocab { tokens: all, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// True when only the reserved entries exist.
    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn get(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    /// Entries after the reserved ones.
    pub fn entries(&self) -> &[String] {
        &self.tokens[2..]
    }
}

/// `rows × dim` table drawn from `U[-0.1, 0.1]`; the padding row is zero.
pub fn init_table<F: Float, R: Rng>(rows: usize, dim: usize, rng: &mut R) -> Array2<F> {
    let mut table = Array2::from_shape_simple_fn((rows, dim), || F::of(rng.random_range(-0.1..=0.1)));
    if rows > Vocab::PAD {
        table.row_mut(Vocab::PAD).fill(F::zero());
    }
    table
}

/// Overwrites rows of `table` for tokens found in a pretrained vector file
/// (`token v1 ... vd` per line, optional `count dim` header). Returns the
/// number of rows replaced.
pub fn load_pretrained<F: Float>(path: impl AsRef<Path>, vocab: &Vocab, table: &mut Array2<F>) -> Result<usize> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let dim = table.ncols();
    let mut replaced = 0;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values: Vec<&str> = fields.collect();
        if n == 0 && values.len() == 1 {
            continue;
        }
        if values.len() != dim {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: format!("expected {dim} values, found {}", values.len()),
            });
        }
        if !vocab.contains(token) {
            continue;
        }
        let row = vocab.get(token);
        for (k, v) in values.iter().enumerate() {
            let v: f64 = v.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: format!("bad number {v:?}"),
            })?;
            table[[row, k]] = F::of(v);
        }
        replaced += 1;
    }
    Ok(replaced)
}
