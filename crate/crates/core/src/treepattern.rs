//! Constituency-tree baseline: patterns around a `CC` node are mined from
//! parsed training utterances and matched against new parses to read off
//! conjunct spans.
//!
//! A pattern is the path from the root to the parent of `CC`. Subtrees off
//! the path are reduced to their label, the `CC` keeps its word and the
//! conjunct siblings are marked with `*`:
//!
//! ```text
//! (S (VP (VB) (NP (NNS*) (CC and) (NNS*)) (PP)))
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bio::encode_bio;
use crate::error::{Error, Result};
use crate::types::{ConjunctSpan, Tag};

const CC: &str = "CC";

/// A constituency tree. Preterminals carry the token and its position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tree {
    Leaf { label: String, word: String, index: usize },
    Node { label: String, children: Vec<Tree> },
}

impl Tree {
    pub fn label(&self) -> &str {
        match self {
            Tree::Leaf { label, .. } | Tree::Node { label, .. } => label,
        }
    }

    /// Tokens in leaf order.
    pub fn words(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_words(&mut out);
        out
    }

    fn collect_words(&self, out: &mut Vec<String>) {
        match self {
            Tree::Leaf { word, .. } => out.push(word.clone()),
            Tree::Node { children, .. } => children.iter().for_each(|c| c.collect_words(out)),
        }
    }

    /// Half-open token interval covered by this subtree.
    pub fn span(&self) -> ConjunctSpan {
        match self {
            Tree::Leaf { index, .. } => ConjunctSpan::new(*index, index + 1),
            Tree::Node { children, .. } => {
                let first = children.first().expect("nodes have children").span();
                let last = children.last().expect("nodes have children").span();
                ConjunctSpan::new(first.start, last.end)
            }
        }
    }

    fn is_cc(&self) -> bool {
        matches!(self, Tree::Leaf { label, .. } if label == CC)
    }

    /// Nodes in pre-order.
    fn preorder<'a>(&'a self, out: &mut Vec<&'a Tree>) {
        out.push(self);
        if let Tree::Node { children, .. } = self {
            children.iter().for_each(|c| c.preorder(out));
        }
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tree::Leaf { label, word, .. } => write!(f, "({label} {word})"),
            Tree::Node { label, children } => {
                write!(f, "({label}")?;
                for c in children {
                    write!(f, " {c}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn tokens(line: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        if c == '(' || c == ')' || c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(&line[s..i]);
            }
            if !c.is_whitespace() {
                out.push(&line[i..i + 1]);
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(&line[s..]);
    }
    out
}

fn parse_sexp(line: &str) -> std::result::Result<Sexp, String> {
    let toks = tokens(line);
    let mut stack: Vec<Vec<Sexp>> = Vec::new();
    let mut done = None;
    for tok in toks {
        if done.is_some() {
            return Err("text after the closing bracket".into());
        }
        match tok {
            "(" => stack.push(Vec::new()),
            ")" => {
                let list = stack.pop().ok_or("unbalanced ')'")?;
                match stack.last_mut() {
                    Some(parent) => parent.push(Sexp::List(list)),
                    None => done = Some(Sexp::List(list)),
                }
            }
            atom => stack
                .last_mut()
                .ok_or("expected '('")?
                .push(Sexp::Atom(atom.to_string())),
        }
    }
    if !stack.is_empty() {
        return Err("unbalanced '('".into());
    }
    done.ok_or_else(|| "empty tree".into())
}

fn build_tree(sexp: &Sexp, next: &mut usize) -> std::result::Result<Tree, String> {
    let Sexp::List(items) = sexp else {
        return Err("expected a bracketed constituent".into());
    };
    let label = match items.first() {
        Some(Sexp::Atom(l)) => l.clone(),
        _ => return Err("constituent without a label".into()),
    };
    match &items[1..] {
        [] => Err(format!("constituent {label} has no children")),
        [Sexp::Atom(word)] => {
            let index = *next;
            *next += 1;
            Ok(Tree::Leaf {
                label,
                word: word.to_lowercase(),
                index,
            })
        }
        rest => {
            let children = rest
                .iter()
                .map(|c| build_tree(c, next))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Ok(Tree::Node { label, children })
        }
    }
}

/// Parses one bracketed tree such as `(S (NP (NN tea)))`.
pub fn parse_tree(line: &str) -> std::result::Result<Tree, String> {
    build_tree(&parse_sexp(line)?, &mut 0)
}

/// One result per non-blank line, so a bad line does not affect the others.
pub fn parse_trees(text: &str, origin: &Path) -> Vec<Result<Tree>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            parse_tree(line).map_err(|message| Error::Parse {
                path: origin.to_path_buf(),
                line: n + 1,
                message,
            })
        })
        .collect()
}

/// Reads a tree file, failing on the first bad line.
pub fn read_trees(path: impl AsRef<Path>) -> Result<Vec<Tree>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trees(&text, path).into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PatternNode {
    /// Any subtree with this label.
    Elided(String),
    /// Any subtree with this label, whose leaves form a conjunct.
    Conjunct(String),
    /// A `CC` preterminal with this word.
    Cc(String),
    Node {
        label: String,
        children: Vec<PatternNode>,
    },
}

impl PatternNode {
    fn write(&self, f: &mut fmt::Formatter<'_>, marks: bool) -> fmt::Result {
        match self {
            PatternNode::Elided(l) => write!(f, "({l})"),
            PatternNode::Conjunct(l) if marks => write!(f, "({l}*)"),
            PatternNode::Conjunct(l) => write!(f, "({l})"),
            PatternNode::Cc(w) => write!(f, "({CC} {w})"),
            PatternNode::Node { label, children } => {
                write!(f, "({label}")?;
                for c in children {
                    write!(f, " ")?;
                    c.write(f, marks)?;
                }
                write!(f, ")")
            }
        }
    }

    fn from_sexp(sexp: &Sexp) -> std::result::Result<Self, String> {
        let Sexp::List(items) = sexp else {
            return Err("expected a bracketed pattern node".into());
        };
        let label = match items.first() {
            Some(Sexp::Atom(l)) => l.as_str(),
            _ => return Err("pattern node without a label".into()),
        };
        match &items[1..] {
            [] => Ok(match label.strip_suffix('*') {
                Some(l) => PatternNode::Conjunct(l.to_string()),
                None => PatternNode::Elided(label.to_string()),
            }),
            [Sexp::Atom(w)] if label == CC => Ok(PatternNode::Cc(w.clone())),
            [Sexp::Atom(_)] => Err(format!("only CC may carry a word, found {label}")),
            rest => Ok(PatternNode::Node {
                label: label.to_string(),
                children: rest
                    .iter()
                    .map(Self::from_sexp)
                    .collect::<std::result::Result<_, _>>()?,
            }),
        }
    }

    /// Matches `tree`, pushing conjunct spans and `CC` positions.
    fn matches(&self, tree: &Tree, spans: &mut Vec<ConjunctSpan>, ccs: &mut Vec<usize>) -> bool {
        match (self, tree) {
            (PatternNode::Elided(l), t) => l == t.label(),
            (PatternNode::Conjunct(l), t) => {
                spans.push(t.span());
                l == t.label()
            }
            (PatternNode::Cc(w), Tree::Leaf { label, word, index }) => {
                ccs.push(*index);
                label == CC && w == word
            }
            (PatternNode::Node { label, children }, Tree::Node { label: l, children: c }) => {
                label == l && children.len() == c.len() && children.iter().zip(c).all(|(p, t)| p.matches(t, spans, ccs))
            }
            _ => false,
        }
    }
}

/// A mined skeleton with its number of occurrences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreePattern {
    pub root: PatternNode,
    pub support: usize,
}

impl TreePattern {
    /// The skeleton with conjunct slots marked by `*`. Patterns are
    /// identified by this string.
    pub fn key(&self) -> String {
        self.root.to_string()
    }

    /// The skeleton without marks.
    pub fn skeleton(&self) -> String {
        struct Plain<'a>(&'a PatternNode);
        impl fmt::Display for Plain<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.write(f, false)
            }
        }
        Plain(&self.root).to_string()
    }

    pub fn parse(text: &str, support: usize) -> Result<Self> {
        let root = parse_sexp(text)
            .and_then(|s| PatternNode::from_sexp(&s))
            .map_err(|m| Error::Validation(format!("pattern {text:?}: {m}")))?;
        Ok(TreePattern { root, support })
    }
}

impl fmt::Display for PatternNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, true)
    }
}

fn elide(tree: &Tree) -> PatternNode {
    PatternNode::Elided(tree.label().to_string())
}

fn parent_pattern(children: &[Tree], cc: usize, gold: &[ConjunctSpan]) -> Option<Vec<PatternNode>> {
    let mut matched = 0;
    let nodes = children
        .iter()
        .enumerate()
        .map(|(i, c)| match c {
            Tree::Leaf { word, .. } if i == cc => PatternNode::Cc(word.clone()),
            c if gold.contains(&c.span()) => {
                matched += 1;
                PatternNode::Conjunct(c.label().to_string())
            }
            c => elide(c),
        })
        .collect();
    (matched == gold.len()).then_some(nodes)
}

fn extract(tree: &Tree, gold: &[ConjunctSpan]) -> Option<PatternNode> {
    let Tree::Node { label, children } = tree else {
        return None;
    };
    for (i, child) in children.iter().enumerate() {
        if child.is_cc() {
            if let Some(nodes) = parent_pattern(children, i, gold) {
                return Some(PatternNode::Node {
                    label: label.clone(),
                    children: nodes,
                });
            }
        }
    }
    for (i, child) in children.iter().enumerate() {
        let span = child.span();
        if !gold.iter().all(|g| span.start <= g.start && g.end <= span.end) {
            continue;
        }
        if let Some(inner) = extract(child, gold) {
            let nodes = children
                .iter()
                .enumerate()
                .map(|(j, c)| if j == i { inner.clone() } else { elide(c) })
                .collect();
            return Some(PatternNode::Node {
                label: label.clone(),
                children: nodes,
            });
        }
    }
    None
}

/// The skeleton linking the root to the `CC` whose siblings are exactly
/// the gold conjuncts.
pub fn extract_pattern(tree: &Tree, gold: &[ConjunctSpan]) -> Result<TreePattern> {
    if gold.len() < 2 {
        return Err(Error::Validation(format!(
            "need at least two conjuncts, got {}",
            gold.len()
        )));
    }
    let mut nodes = Vec::new();
    tree.preorder(&mut nodes);
    if !nodes.iter().any(|n| n.is_cc()) {
        return Err(Error::Validation("tree has no CC leaf".into()));
    }
    extract(tree, gold)
        .map(|root| TreePattern { root, support: 1 })
        .ok_or_else(|| Error::Validation("no CC whose siblings match the gold conjuncts".into()))
}

/// Mined patterns and the number of utterances that yielded none.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinedPatterns {
    pub patterns: Vec<TreePattern>,
    pub failures: usize,
}

/// Counts patterns over `examples`, drops those seen fewer than
/// `min_support` times and orders the rest by support, then key.
pub fn mine_patterns_with_support(examples: &[(Tree, Vec<ConjunctSpan>)], min_support: usize) -> MinedPatterns {
    let mut counts: BTreeMap<String, TreePattern> = BTreeMap::new();
    let mut failures = 0;
    for (tree, gold) in examples {
        match extract_pattern(tree, gold) {
            Ok(p) => counts.entry(p.key()).or_insert(TreePattern { support: 0, ..p }).support += 1,
            Err(_) => failures += 1,
        }
    }
    let mut patterns: Vec<TreePattern> = counts.into_values().filter(|p| p.support >= min_support).collect();
    sort_patterns(&mut patterns);
    MinedPatterns { patterns, failures }
}

pub fn mine_patterns(examples: &[(Tree, Vec<ConjunctSpan>)]) -> MinedPatterns {
    mine_patterns_with_support(examples, 2)
}

/// Matching priority: higher support first, then key.
pub fn sort_patterns(patterns: &mut [TreePattern]) {
    patterns.sort_by(|a, b| b.support.cmp(&a.support).then_with(|| a.key().cmp(&b.key())));
}

/// Result of matching one tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeMatch {
    pub pattern: usize,
    pub spans: Vec<ConjunctSpan>,
    pub cc_positions: Vec<usize>,
}

/// First pattern (in slice order) matching at any node, nodes visited in
/// pre-order.
pub fn match_tree(tree: &Tree, patterns: &[TreePattern]) -> Option<TreeMatch> {
    let mut nodes = Vec::new();
    tree.preorder(&mut nodes);
    for (k, pattern) in patterns.iter().enumerate() {
        for node in &nodes {
            let (mut spans, mut ccs) = (Vec::new(), Vec::new());
            if pattern.root.matches(node, &mut spans, &mut ccs) {
                spans.sort();
                return Some(TreeMatch {
                    pattern: k,
                    spans,
                    cc_positions: ccs,
                });
            }
        }
    }
    None
}

/// Conjunct spans from the first matching pattern; empty without a match.
pub fn match_and_extract(tree: &Tree, patterns: &[TreePattern]) -> Vec<ConjunctSpan> {
    match_tree(tree, patterns).map(|m| m.spans).unwrap_or_default()
}

/// Tags implied by the matching pattern; all `O` without a match.
pub fn tag_tree(tree: &Tree, patterns: &[TreePattern]) -> Result<Vec<Tag>> {
    let len = tree.words().len();
    match match_tree(tree, patterns) {
        Some(m) => encode_bio(&m.spans, &m.cc_positions, len),
        None => Ok(vec![Tag::O; len]),
    }
}

#[derive(Serialize, Deserialize)]
struct PatternRecord {
    pattern: String,
    support: usize,
}

/// One JSON object per line: `{"pattern": ..., "support": ...}`.
pub fn write_patterns(path: impl AsRef<Path>, patterns: &[TreePattern]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for p in patterns {
        let record = PatternRecord {
            pattern: p.key(),
            support: p.support,
        };
        text.push_str(&serde_json::to_string(&record)?);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads patterns and sorts them into matching priority.
pub fn read_patterns(path: impl AsRef<Path>) -> Result<Vec<TreePattern>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let record: PatternRecord = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        out.push(TreePattern::parse(&record.pattern, record.support).map_err(|e| parse_err(e.to_string()))?);
    }
    sort_patterns(&mut out);
    Ok(out)
}
