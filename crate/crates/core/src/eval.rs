//! Conjunct-level precision/recall/F1 and utterance exact-match accuracy.
//!
//! A predicted conjunct counts only if both of its boundaries match a gold
//! conjunct. Exact match requires every token's tag, `CC` and `O`
//! included, to be correct.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bio::decode_bio;
use crate::error::{Error, Result};
use crate::model::TaggerModel;
use crate::neural::Float;
use crate::types::{ConjunctSpan, LabeledUtterance, Tag};

/// Anything that assigns one tag per token.
pub trait Tagger: Sync {
    fn tag(&self, tokens: &[String]) -> Result<Vec<Tag>>;
}

impl<F: Float> Tagger for TaggerModel<F> {
    fn tag(&self, tokens: &[String]) -> Result<Vec<Tag>> {
        self.predict(tokens)
    }
}

impl<T: Tagger + ?Sized> Tagger for &T {
    fn tag(&self, tokens: &[String]) -> Result<Vec<Tag>> {
        (**self).tag(tokens)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SpanCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Exact-boundary matching of predicted against gold conjuncts.
pub fn conjunct_prf(pred: &[ConjunctSpan], gold: &[ConjunctSpan]) -> SpanCounts {
    let gold_set: BTreeSet<_> = gold.iter().collect();
    let pred_set: BTreeSet<_> = pred.iter().collect();
    let tp = pred_set.intersection(&gold_set).count();
    SpanCounts {
        tp,
        fp: pred_set.len() - tp,
        fn_: gold_set.len() - tp,
    }
}

/// 1 if every tag matches, else 0.
pub fn exact_match(pred: &[Tag], gold: &[Tag]) -> Result<u8> {
    if pred.len() != gold.len() {
        return Err(Error::Validation(format!(
            "{} predicted tags for {} gold tags",
            pred.len(),
            gold.len()
        )));
    }
    Ok(u8::from(pred == gold))
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Aggregated counts and the ratios derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub utterances: usize,
    pub exact_matches: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

impl Metrics {
    fn add(&mut self, counts: SpanCounts, exact: u8) {
        self.utterances += 1;
        self.exact_matches += exact as usize;
        self.tp += counts.tp;
        self.fp += counts.fp;
        self.fn_ += counts.fn_;
    }

    fn merge(&mut self, other: &Metrics) {
        self.utterances += other.utterances;
        self.exact_matches += other.exact_matches;
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    fn finish(mut self) -> Self {
        self.precision = ratio(self.tp, self.tp + self.fp);
        self.recall = ratio(self.tp, self.tp + self.fn_);
        self.f1 = if self.precision + self.recall > 0.0 {
            2.0 * self.precision * self.recall / (self.precision + self.recall)
        } else {
            0.0
        };
        self.accuracy = ratio(self.exact_matches, self.utterances);
        self
    }
}

/// Bucket label for a gold conjunct count.
pub fn bucket_of(conjuncts: usize) -> &'static str {
    match conjuncts {
        0 | 1 => "<2",
        2 => "2",
        3 => "3",
        _ => "4+",
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: Metrics,
    /// Keyed by gold conjunct count: `2`, `3`, `4+` (and `<2` if present).
    pub buckets: BTreeMap<String, Metrics>,
    pub by_slot: BTreeMap<String, Metrics>,
}

impl EvalReport {
    /// Scores `predicted[i]` against `gold[i]`.
    pub fn from_predictions(gold: &[LabeledUtterance], predicted: &[Vec<Tag>]) -> Result<Self> {
        if gold.len() != predicted.len() {
            return Err(Error::Validation(format!(
                "{} predictions for {} utterances",
                predicted.len(),
                gold.len()
            )));
        }
        let mut overall = Metrics::default();
        let mut buckets: BTreeMap<String, Metrics> = BTreeMap::new();
        let mut by_slot: BTreeMap<String, Metrics> = BTreeMap::new();
        for (utt, pred) in gold.iter().zip(predicted) {
            let exact = exact_match(pred, &utt.tags)?;
            let counts = conjunct_prf(&decode_bio(pred), &decode_bio(&utt.tags));
            let mut one = Metrics::default();
            one.add(counts, exact);
            overall.merge(&one);
            buckets
                .entry(bucket_of(utt.conjunct_count()).into())
                .or_default()
                .merge(&one);
            by_slot.entry(utt.slot_type.clone()).or_default().merge(&one);
        }
        Ok(EvalReport {
            overall: overall.finish(),
            buckets: buckets.into_iter().map(|(k, m)| (k, m.finish())).collect(),
            by_slot: by_slot.into_iter().map(|(k, m)| (k, m.finish())).collect(),
        })
    }

    pub fn bucket(&self, key: &str) -> Metrics {
        self.buckets.get(key).copied().unwrap_or_default()
    }

    /// Plain-text table with F1 / accuracy per conjunct-count bucket,
    /// followed by overall precision, recall, F1 and accuracy.
    pub fn to_table(&self, by_slot: bool) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} | {:>6} {:>6} | {:>6} {:>6} | {:>6} {:>6} | {:>6} {:>6} {:>6} {:>6} | {:>6}",
            "", "2 F1", "2 Acc", "3 F1", "3 Acc", "4+ F1", "4+ Acc", "P", "R", "F1", "Acc", "N"
        );
        let row = |out: &mut String, name: &str, r: &EvalReport| {
            let _ = write!(out, "{name:<16} |");
            for key in ["2", "3", "4+"] {
                match r.buckets.get(key) {
                    Some(m) => write!(out, " {:>6.4} {:>6.4} |", m.f1, m.accuracy),
                    None => write!(out, " {:>6} {:>6} |", "-", "-"),
                }
                .ok();
            }
            let m = &r.overall;
            let _ = writeln!(
                out,
                " {:>6.4} {:>6.4} {:>6.4} {:>6.4} | {:>6}",
                m.precision, m.recall, m.f1, m.accuracy, m.utterances
            );
        };
        row(&mut out, "all", self);
        if by_slot {
            for (slot, m) in &self.by_slot {
                let _ = writeln!(
                    out,
                    "{:<16} | {:>48} | {:>6.4} {:>6.4} {:>6.4} {:>6.4} | {:>6}",
                    slot, "", m.precision, m.recall, m.f1, m.accuracy, m.utterances
                );
            }
        }
        out
    }
}

/// Tags every utterance of `testset` with `tagger` and scores the result.
pub fn evaluate<T: Tagger + ?Sized>(tagger: &T, testset: &[LabeledUtterance]) -> Result<EvalReport> {
    let predicted = testset
        .par_iter()
        .map(|u| tagger.tag(&u.tokens))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_predictions(testset, &predicted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bio::encode_bio;
    use Tag::*;

    fn spans(raw: &[(usize, usize)]) -> Vec<ConjunctSpan> {
        raw.iter().map(|&s| s.into()).collect()
    }

    /// Greedy one-to-one matcher used as an independent check.
    fn brute_counts(pred: &[ConjunctSpan], gold: &[ConjunctSpan]) -> (usize, usize, usize) {
        let mut used = vec![false; gold.len()];
        let mut tp = 0;
        for p in pred {
            if let Some(i) = (0..gold.len()).find(|&i| !used[i] && gold[i] == *p) {
                used[i] = true;
                tp += 1;
            }
        }
        (tp, pred.len() - tp, gold.len() - tp)
    }

    #[test]
    fn span_matching() {
        let gold = spans(&[(1, 3), (4, 5)]);
        assert_eq!(conjunct_prf(&gold, &gold), SpanCounts { tp: 2, fp: 0, fn_: 0 });
        assert_eq!(
            conjunct_prf(&spans(&[(1, 2)]), &spans(&[(1, 3)])),
            SpanCounts { tp: 0, fp: 1, fn_: 1 }
        );
        let pred = spans(&[(1, 3), (4, 5), (6, 7)]);
        let c = conjunct_prf(&pred, &gold);
        assert_eq!((c.tp, c.fp, c.fn_), (2, 1, 0));
        assert_eq!((c.tp, c.fp, c.fn_), brute_counts(&pred, &gold));
    }

    #[test]
    fn exact_match_rule() {
        let gold = [O, B, I, Cc, B, O, O, O];
        assert_eq!(exact_match(&gold, &gold).unwrap(), 1);
        let no_cc = [O, B, I, O, B, O, O, O];
        assert_eq!(decode_bio(&no_cc), decode_bio(&gold));
        assert_eq!(exact_match(&no_cc, &gold).unwrap(), 0);
        assert_eq!(exact_match(&[O; 8], &gold).unwrap(), 0);
        assert!(exact_match(&[O; 7], &gold).is_err());
    }

    fn utt(tags: &[Tag], slot: &str) -> LabeledUtterance {
        LabeledUtterance::new((0..tags.len()).map(|i| format!("w{i}")).collect(), tags.to_vec(), slot).unwrap()
    }

    struct Fixed(Vec<Tag>);
    impl Tagger for Fixed {
        fn tag(&self, tokens: &[String]) -> Result<Vec<Tag>> {
            Ok(vec![self.0[0]; tokens.len()])
        }
    }

    struct Oracle<'a>(&'a [LabeledUtterance]);
    impl Tagger for Oracle<'_> {
        fn tag(&self, tokens: &[String]) -> Result<Vec<Tag>> {
            Ok(self.0.iter().find(|u| u.tokens == tokens).unwrap().tags.clone())
        }
    }

    #[test]
    fn oracle_and_all_outside() {
        let set = vec![
            utt(&[O, B, Cc, B], "A"),
            utt(&[B, I, B, Cc, B, O, O], "B"),
            utt(&[O, B, B, B, Cc, B], "A"),
        ];
        let perfect = evaluate(&Oracle(&set), &set).unwrap();
        assert_eq!(perfect.overall.f1, 1.0);
        assert_eq!(perfect.overall.accuracy, 1.0);
        assert_eq!(perfect.buckets.keys().collect::<Vec<_>>(), ["2", "3", "4+"]);

        let two = vec![utt(&[O, B, Cc, B], "A"), utt(&[B, Cc, B, O], "A")];
        let blank = evaluate(&Fixed(vec![O]), &two).unwrap();
        assert_eq!(blank.overall.precision, 0.0);
        assert_eq!(blank.overall.recall, 0.0);
        assert_eq!(blank.overall.f1, 0.0);
        assert_eq!(blank.overall.accuracy, 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn tags_strategy(len: usize) -> impl Strategy<Value = Vec<Tag>> {
            prop::collection::vec((0usize..4).prop_map(|i| Tag::from_index(i).unwrap()), len)
        }

        fn gold_strategy() -> impl Strategy<Value = LabeledUtterance> {
            (2usize..6, 0usize..3, prop::sample::select(vec!["A", "B", "C"])).prop_map(|(k, pad, slot)| {
                let mut spans = Vec::new();
                let mut pos = pad;
                for i in 0..k {
                    if i == k - 1 {
                        pos += 1;
                    }
                    spans.push(ConjunctSpan::new(pos, pos + 1 + i % 2));
                    pos += 1 + i % 2;
                }
                let cc = spans[k - 1].start - 1;
                let len = pos + 2;
                let tags = encode_bio(&spans, &[cc], len).unwrap();
                utt(&tags, slot)
            })
        }

        fn case() -> impl Strategy<Value = Vec<(LabeledUtterance, Vec<Tag>)>> {
            prop::collection::vec(
                gold_strategy().prop_flat_map(|g| {
                    let n = g.len();
                    let gold_tags = g.tags.clone();
                    (Just(g), prop_oneof![Just(gold_tags), tags_strategy(n)])
                }),
                1..30,
            )
        }

        proptest! {
            #[test]
            fn report_invariants(cases in case(), seed in any::<u64>()) {
                let (gold, pred): (Vec<_>, Vec<_>) = cases.into_iter().unzip();
                let report = EvalReport::from_predictions(&gold, &pred).unwrap();
                let m = report.overall;
                prop_assert_eq!(report.buckets.values().map(|b| b.utterances).sum::<usize>(), gold.len());
                if m.precision + m.recall > 0.0 {
                    prop_assert!((m.f1 - 2.0 * m.precision * m.recall / (m.precision + m.recall)).abs() < 1e-12);
                }
                let f1s: Vec<f64> = report.buckets.values().filter(|b| b.tp + b.fp + b.fn_ > 0).map(|b| b.f1).collect();
                let lo = f1s.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = f1s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(m.f1 >= lo - 1e-12 && m.f1 <= hi + 1e-12);

                for (g, p) in gold.iter().zip(&pred) {
                    if exact_match(p, &g.tags).unwrap() == 1 {
                        let c = conjunct_prf(&decode_bio(p), &g.spans());
                        prop_assert_eq!((c.tp, c.fp, c.fn_), (g.conjunct_count(), 0, 0));
                    }
                }

                let mut order: Vec<usize> = (0..gold.len()).collect();
                let mut s = seed;
                for i in (1..order.len()).rev() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    order.swap(i, (s >> 33) as usize % (i + 1));
                }
                let g2: Vec<_> = order.iter().map(|&i| gold[i].clone()).collect();
                let p2: Vec<_> = order.iter().map(|&i| pred[i].clone()).collect();
                prop_assert_eq!(EvalReport::from_predictions(&g2, &p2).unwrap(), report);
            }
        }
    }
}
