//! Synthesis of coordinated-slot utterances from slot catalogs and carrier
//! phrases.
//!
//! A carrier phrase such as `add ⟨SLOT⟩ to my list` has its placeholder
//! replaced by two or more distinct entities of the carrier's slot type,
//! with the conjunction placed only between the last two entities:
//! `add peanut butter and jelly to my list`. Entities are tagged
//! `B-C (I-C)*`, the conjunction `CC`, carrier tokens `O`.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::types::{tokenize, DatasetSplit, LabeledUtterance, Tag};

/// Placeholder token in carrier phrases.
pub const PLACEHOLDER: &str = "⟨SLOT⟩";

/// Slot types of the bundled in-domain grammar.
pub const IN_DOMAIN_SLOTS: [&str; 7] = ["Time", "Date", "FoodItem", "ListItem", "ToDoList", "Drink", "Appliance"];

/// Slot types reserved for the unseen-slot test set.
pub const UNSEEN_SLOTS: [&str; 4] = ["ArtistName", "EventName", "MealType", "CityName"];

/// Largest conjunct count the generator emits (the "4+" bucket is uniform over 4 and 5).
pub const MAX_CONJUNCTS: usize = 5;

macro_rules! bundled {
    ($($slot:literal),* $(,)?) => {
        &[$(($slot,
            include_str!(concat!("../data/grammar/catalogs/", $slot, ".txt")),
            include_str!(concat!("../data/grammar/carriers/", $slot, ".txt")))),*]
    };
}

static BUNDLED: &[(&str, &str, &str)] = bundled!(
    "Time",
    "Date",
    "FoodItem",
    "ListItem",
    "ToDoList",
    "Drink",
    "Appliance",
    "ArtistName",
    "EventName",
    "MealType",
    "CityName",
);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotCatalog {
    pub slot_type: String,
    /// Tokenized entity phrases.
    pub entities: Vec<Vec<String>>,
}

impl SlotCatalog {
    pub fn new<S: AsRef<str>>(slot_type: impl Into<String>, phrases: &[S]) -> Result<Self> {
        let slot_type = slot_type.into();
        let mut seen = HashSet::new();
        let mut entities = Vec::new();
        for phrase in phrases {
            let tokens = tokenize(phrase.as_ref());
            if !tokens.is_empty() && seen.insert(tokens.clone()) {
                entities.push(tokens);
            }
        }
        if entities.len() < 2 {
            return Err(Error::Data(format!(
                "catalog {slot_type} needs at least two distinct entities, has {}",
                entities.len()
            )));
        }
        Ok(SlotCatalog { slot_type, entities })
    }

    fn parse(slot_type: &str, text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        SlotCatalog::new(slot_type, &lines)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CarrierPhrase {
    pub slot_type: String,
    pub tokens: Vec<String>,
    /// Index of the placeholder in `tokens`.
    pub placeholder: usize,
}

impl CarrierPhrase {
    pub fn parse(slot_type: impl Into<String>, line: &str) -> Result<Self> {
        let slot_type = slot_type.into();
        let tokens: Vec<String> = line
            .split_whitespace()
            .map(|t| {
                if t == PLACEHOLDER {
                    t.to_string()
                } else {
                    t.to_lowercase()
                }
            })
            .collect();
        let positions: Vec<usize> = tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.as_str() == PLACEHOLDER)
            .map(|(i, _)| i)
            .collect();
        match positions.as_slice() {
            [placeholder] => Ok(CarrierPhrase {
                slot_type,
                placeholder: *placeholder,
                tokens,
            }),
            _ => Err(Error::Data(format!(
                "carrier {line:?} must contain exactly one {PLACEHOLDER}, found {}",
                positions.len()
            ))),
        }
    }
}

/// Catalogs plus carriers, keyed by slot type.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Grammar {
    pub catalogs: BTreeMap<String, SlotCatalog>,
    pub carriers: BTreeMap<String, Vec<CarrierPhrase>>,
}

impl Grammar {
    /// The grammar shipped with the crate, covering both in-domain and
    /// unseen slot types.
    pub fn bundled() -> Self {
        let mut grammar = Grammar::default();
        for (slot, catalog, carriers) in BUNDLED {
            grammar
                .insert_text(slot, catalog, carriers)
                .expect("bundled grammar is well-formed");
        }
        grammar
    }

    /// Loads `catalogs/<Slot>.txt` and `carriers/<Slot>.txt` from `dir`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let catalog_dir = dir.join("catalogs");
        let mut grammar = Grammar::default();
        let entries = fs::read_dir(&catalog_dir).map_err(|e| Error::io(&catalog_dir, e))?;
        let mut slots = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&catalog_dir, e))?.path();
            if path.extension().is_some_and(|e| e == "txt") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    slots.push(stem.to_string());
                }
            }
        }
        slots.sort();
        for slot in slots {
            let cat_path = catalog_dir.join(format!("{slot}.txt"));
            let car_path = dir.join("carriers").join(format!("{slot}.txt"));
            let catalog = fs::read_to_string(&cat_path).map_err(|e| Error::io(&cat_path, e))?;
            let carriers = match fs::read_to_string(&car_path) {
                Ok(text) => text,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
                Err(e) => return Err(Error::io(&car_path, e)),
            };
            grammar.insert_text(&slot, &catalog, &carriers)?;
        }
        Ok(grammar)
    }

    fn insert_text(&mut self, slot: &str, catalog: &str, carriers: &str) -> Result<()> {
        self.catalogs
            .insert(slot.to_string(), SlotCatalog::parse(slot, catalog)?);
        let carriers = carriers
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| CarrierPhrase::parse(slot, l))
            .collect::<Result<Vec<_>>>()?;
        if !carriers.is_empty() {
            self.carriers.insert(slot.to_string(), carriers);
        }
        Ok(())
    }

    /// Sub-grammar with only the named slot types.
    pub fn restrict<S: AsRef<str>>(&self, slots: &[S]) -> Result<Grammar> {
        let mut out = Grammar::default();
        for slot in slots {
            let slot = slot.as_ref();
            let catalog = self
                .catalogs
                .get(slot)
                .ok_or_else(|| Error::Data(format!("no catalog for slot type {slot}")))?;
            out.catalogs.insert(slot.to_string(), catalog.clone());
            if let Some(carriers) = self.carriers.get(slot) {
                out.carriers.insert(slot.to_string(), carriers.clone());
            }
        }
        Ok(out)
    }

    /// Slot types that have carriers, in sorted order.
    pub fn carrier_slots(&self) -> Vec<String> {
        self.carriers.keys().cloned().collect()
    }

    fn check_slot(&self, slot: &str) -> Result<(&SlotCatalog, &[CarrierPhrase])> {
        let catalog = self
            .catalogs
            .get(slot)
            .ok_or_else(|| Error::Data(format!("carrier slot type {slot} has no catalog")))?;
        let carriers = self
            .carriers
            .get(slot)
            .filter(|c| !c.is_empty())
            .ok_or_else(|| Error::Data(format!("slot type {slot} has no carriers")))?;
        Ok((catalog, carriers))
    }
}

/// Probabilities of 2, 3 and "4 or more" conjuncts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConjunctCountDistribution {
    pub two: f64,
    pub three: f64,
    pub four_plus: f64,
}

impl Default for ConjunctCountDistribution {
    fn default() -> Self {
        ConjunctCountDistribution {
            two: 0.60,
            three: 0.28,
            four_plus: 0.12,
        }
    }
}

impl ConjunctCountDistribution {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.two, self.three, self.four_plus];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Argument(format!(
                "conjunct count distribution {parts:?} must be probabilities summing to 1"
            )));
        }
        Ok(())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        if u < self.two {
            2
        } else if u < self.two + self.three {
            3
        } else {
            rng.random_range(4..=MAX_CONJUNCTS)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub conjunction: String,
    pub distribution: ConjunctCountDistribution,
    pub corpus_size: usize,
    /// Train / validation / test fractions.
    pub split_ratios: [f64; 3],
    pub seed: u64,
    /// Insert a literal `,` token between non-final entities.
    pub comma_separator: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            conjunction: "and".into(),
            distribution: ConjunctCountDistribution::default(),
            corpus_size: 1000,
            split_ratios: [0.8, 0.1, 0.1],
            seed: 0,
            comma_separator: false,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        self.distribution.validate()?;
        let r = self.split_ratios;
        if r.iter().any(|x| *x < 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Argument(format!(
                "split ratios {r:?} must be non-negative and sum to 1"
            )));
        }
        if tokenize(&self.conjunction).len() != 1 {
            return Err(Error::Argument(format!(
                "conjunction {:?} must be a single token",
                self.conjunction
            )));
        }
        Ok(())
    }
}

/// Fills the carrier's placeholder with `entities`, joined as
/// `e1 e2 ... conjunction ek`.
pub fn generate_utterance<S: AsRef<str>>(
    carrier: &CarrierPhrase,
    entities: &[&[S]],
    conjunction: &str,
) -> Result<LabeledUtterance> {
    generate_with_separator(carrier, entities, conjunction, false)
}

fn generate_with_separator<S: AsRef<str>>(
    carrier: &CarrierPhrase,
    entities: &[&[S]],
    conjunction: &str,
    comma: bool,
) -> Result<LabeledUtterance> {
    if entities.len() < 2 {
        return Err(Error::Argument(format!(
            "coordination needs at least two entities, got {}",
            entities.len()
        )));
    }
    for (i, a) in entities.iter().enumerate() {
        if a.is_empty() {
            return Err(Error::Argument("empty entity".into()));
        }
        for b in &entities[i + 1..] {
            if a.iter().map(AsRef::as_ref).eq(b.iter().map(AsRef::as_ref)) {
                return Err(Error::Argument("entities must be pairwise distinct".into()));
            }
        }
    }
    let mut tokens = Vec::with_capacity(carrier.tokens.len() + 3 * entities.len());
    let mut tags = Vec::with_capacity(tokens.capacity());
    for (i, token) in carrier.tokens.iter().enumerate() {
        if i != carrier.placeholder {
            tokens.push(token.clone());
            tags.push(Tag::O);
            continue;
        }
        let last = entities.len() - 1;
        for (k, entity) in entities.iter().enumerate() {
            if k == last {
                tokens.push(conjunction.to_lowercase());
                tags.push(Tag::Cc);
            } else if k > 0 && comma {
                tokens.push(",".into());
                tags.push(Tag::O);
            }
            for (j, word) in entity.iter().enumerate() {
                tokens.push(word.as_ref().to_lowercase());
                tags.push(if j == 0 { Tag::B } else { Tag::I });
            }
        }
    }
    LabeledUtterance::new(tokens, tags, carrier.slot_type.clone())
}

/// Draws one utterance of `slot` with `count` conjuncts.
fn sample_utterance<R: Rng>(
    grammar: &Grammar,
    slot: &str,
    count: usize,
    conjunction: &str,
    comma: bool,
    rng: &mut R,
) -> Result<LabeledUtterance> {
    let (catalog, carriers) = grammar.check_slot(slot)?;
    if catalog.entities.len() < count {
        return Err(Error::Data(format!(
            "catalog {slot} has {} entities, {count} conjuncts requested",
            catalog.entities.len()
        )));
    }
    let carrier = &carriers[rng.random_range(0..carriers.len())];
    let picked: Vec<&[String]> = index::sample(rng, catalog.entities.len(), count)
        .into_iter()
        .map(|i| catalog.entities[i].as_slice())
        .collect();
    generate_with_separator(carrier, &picked, conjunction, comma)
}

/// Generates `count` distinct utterances. Item `i` draws from a stream
/// derived from `(seed, i)`; a duplicate of an earlier utterance redraws
/// carrier and entities, keeping slot type and conjunct count.
fn generate_distinct(
    grammar: &Grammar,
    slots: &[String],
    count: usize,
    config: &GenConfig,
    stream_tag: u64,
    fixed_slot: bool,
) -> Result<Vec<LabeledUtterance>> {
    const MAX_ATTEMPTS: u64 = 1000;
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = rng::stream(config.seed, &[stream_tag, i as u64]);
        let slot = if fixed_slot {
            &slots[i * slots.len() / count]
        } else {
            &slots[rng.random_range(0..slots.len())]
        };
        let k = config.distribution.sample(&mut rng);
        let mut attempt = 0;
        loop {
            let utt = sample_utterance(grammar, slot, k, &config.conjunction, config.comma_separator, &mut rng)?;
            if seen.insert(utt.tokens.clone()) {
                out.push(utt);
                break;
            }
            attempt += 1;
            if attempt == MAX_ATTEMPTS {
                return Err(Error::Data(format!(
                    "grammar too small: no new utterance after {MAX_ATTEMPTS} draws"
                )));
            }
        }
    }
    Ok(out)
}

/// Generates `config.corpus_size` distinct utterances over every slot type
/// that has carriers and splits them by `config.split_ratios`.
pub fn generate_corpus(grammar: &Grammar, config: &GenConfig) -> Result<DatasetSplit> {
    config.validate()?;
    let slots = grammar.carrier_slots();
    if slots.is_empty() {
        return Err(Error::Data("grammar has no carrier phrases".into()));
    }
    for slot in &slots {
        let (catalog, _) = grammar.check_slot(slot)?;
        if config.distribution.four_plus > 0.0 && catalog.entities.len() < MAX_CONJUNCTS {
            return Err(Error::Data(format!(
                "catalog {slot} has {} entities, {MAX_CONJUNCTS} needed",
                catalog.entities.len()
            )));
        }
    }
    let mut all = generate_distinct(grammar, &slots, config.corpus_size, config, 0, false)?;
    let n = all.len();
    let n_train = (config.split_ratios[0] * n as f64).round() as usize;
    let n_valid = ((config.split_ratios[1] * n as f64).round() as usize).min(n - n_train);
    let test = all.split_off(n_train + n_valid);
    let validation = all.split_off(n_train);
    Ok(DatasetSplit {
        train: all,
        validation,
        test,
    })
}

/// Generates `per_slot` utterances for each slot type of `unseen`, using
/// the same procedure as [`generate_corpus`]. Fails if any unseen slot
/// type is also a training slot type.
pub fn generate_unseen_testset<S: AsRef<str>>(
    unseen: &Grammar,
    training_slots: &[S],
    per_slot: usize,
    config: &GenConfig,
) -> Result<Vec<LabeledUtterance>> {
    config.validate()?;
    let slots = unseen.carrier_slots();
    for slot in training_slots {
        if slots.iter().any(|s| s == slot.as_ref()) {
            return Err(Error::Validation(format!(
                "slot type {} is both a training and an unseen slot type",
                slot.as_ref()
            )));
        }
    }
    if per_slot == 0 || slots.is_empty() {
        return Ok(Vec::new());
    }
    generate_distinct(unseen, &slots, per_slot * slots.len(), config, 1, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bio::decode_bio;
    use crate::types::ConjunctSpan;
    use Tag::*;

    fn carrier(slot: &str, text: &str) -> CarrierPhrase {
        CarrierPhrase::parse(slot, text).unwrap()
    }

    fn words(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn timer_example() {
        let c = carrier("Time", "set a timer for ⟨SLOT⟩ minutes");
        let (five, ten) = (words("five"), words("ten"));
        let utt = generate_utterance(&c, &[&five, &ten], "and").unwrap();
        assert_eq!(utt.text(), "set a timer for five and ten minutes");
        assert_eq!(utt.tags, [O, O, O, O, B, Cc, B, O]);
    }

    #[test]
    fn peanut_butter_and_jelly() {
        let c = carrier("ListItem", "add ⟨SLOT⟩ to my list");
        let (pb, jelly) = (words("peanut butter"), words("jelly"));
        let utt = generate_utterance(&c, &[&pb, &jelly], "and").unwrap();
        assert_eq!(utt.text(), "add peanut butter and jelly to my list");
        assert_eq!(utt.tags, [O, B, I, Cc, B, O, O, O]);
        assert_eq!(utt.slot_type, "ListItem");
    }

    #[test]
    fn three_single_token_entities() {
        let c = carrier("X", "add ⟨SLOT⟩ now");
        let (a, b, cc) = (words("a"), words("b"), words("c"));
        let utt = generate_utterance(&c, &[&a, &b, &cc], "and").unwrap();
        assert_eq!(utt.text(), "add a b and c now");
        assert_eq!(utt.tags, [O, B, B, Cc, B, O]);
        assert_eq!(
            decode_bio(&utt.tags),
            [
                ConjunctSpan::new(1, 2),
                ConjunctSpan::new(2, 3),
                ConjunctSpan::new(4, 5)
            ]
        );
    }

    #[test]
    fn comma_separator_is_outside() {
        let c = carrier("X", "add ⟨SLOT⟩ now");
        let (a, b, cc) = (words("a"), words("b"), words("c"));
        let utt = generate_with_separator(&c, &[&a, &b, &cc], "and", true).unwrap();
        assert_eq!(utt.text(), "add a , b and c now");
        assert_eq!(utt.conjunct_count(), 3);
    }

    #[test]
    fn rejects_bad_entities_and_carriers() {
        let c = carrier("X", "add ⟨SLOT⟩");
        let a = words("a");
        assert!(matches!(
            generate_utterance(&c, &[&a], "and").unwrap_err(),
            Error::Argument(_)
        ));
        assert!(generate_utterance(&c, &[&a, &a], "and").is_err());
        assert!(CarrierPhrase::parse("X", "no placeholder").is_err());
        assert!(CarrierPhrase::parse("X", "⟨SLOT⟩ and ⟨SLOT⟩").is_err());
        assert!(SlotCatalog::new("X", &["one", "One"]).is_err());
    }

    #[test]
    fn bundled_grammar_has_all_slots() {
        let g = Grammar::bundled();
        for slot in IN_DOMAIN_SLOTS.iter().chain(UNSEEN_SLOTS.iter()) {
            let (catalog, carriers) = g.check_slot(slot).unwrap();
            assert!(catalog.entities.len() >= MAX_CONJUNCTS, "{slot}");
            assert!(!carriers.is_empty());
            for e in &catalog.entities {
                assert!(!e.iter().any(|w| w == "and"), "{slot}: {e:?}");
            }
        }
    }

    #[test]
    fn corpus_is_deterministic_and_split() {
        let g = Grammar::bundled().restrict(&IN_DOMAIN_SLOTS).unwrap();
        let config = GenConfig {
            corpus_size: 10,
            seed: 7,
            ..GenConfig::default()
        };
        let a = generate_corpus(&g, &config).unwrap();
        let b = generate_corpus(&g, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.train.len(), a.validation.len(), a.test.len()), (8, 1, 1));
        let other = generate_corpus(&g, &GenConfig { seed: 8, ..config }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn missing_catalog_is_a_data_error() {
        let mut g = Grammar::bundled().restrict(&["Drink"]).unwrap();
        g.catalogs.clear();
        let err = generate_corpus(&g, &GenConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{err}");
    }

    #[test]
    fn generated_utterances_are_well_formed() {
        let g = Grammar::bundled().restrict(&IN_DOMAIN_SLOTS).unwrap();
        let split = generate_corpus(
            &g,
            &GenConfig {
                corpus_size: 2000,
                seed: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let mut seen = HashSet::new();
        for utt in split.train.iter().chain(&split.validation).chain(&split.test) {
            assert_eq!(utt.tags.iter().filter(|&&t| t == Cc).count(), 1);
            assert!(utt.conjunct_count() >= 2 && utt.conjunct_count() <= MAX_CONJUNCTS);
            for (i, t) in utt.tags.iter().enumerate() {
                if *t == I {
                    assert!(i > 0 && matches!(utt.tags[i - 1], B | I));
                }
            }
            assert_eq!(decode_bio(&utt.tags).len(), utt.conjunct_count());
            assert!(seen.insert(utt.tokens.clone()), "duplicate across splits");
        }
    }

    #[test]
    fn conjunct_counts_follow_distribution() {
        let g = Grammar::bundled().restrict(&IN_DOMAIN_SLOTS).unwrap();
        let config = GenConfig {
            corpus_size: 100_000,
            seed: 11,
            split_ratios: [1.0, 0.0, 0.0],
            ..Default::default()
        };
        let split = generate_corpus(&g, &config).unwrap();
        let n = split.train.len() as f64;
        let frac =
            |pred: &dyn Fn(usize) -> bool| split.train.iter().filter(|u| pred(u.conjunct_count())).count() as f64 / n;
        assert!((frac(&|k| k == 2) - 0.60).abs() < 0.01);
        assert!((frac(&|k| k == 3) - 0.28).abs() < 0.01);
        assert!((frac(&|k| k >= 4) - 0.12).abs() < 0.01);
    }

    #[test]
    fn unseen_testset_counts_and_partition() {
        let full = Grammar::bundled();
        let unseen = full.restrict(&UNSEEN_SLOTS).unwrap();
        let config = GenConfig::default();
        let big = generate_unseen_testset(&unseen, &IN_DOMAIN_SLOTS, 1000, &config).unwrap();
        assert_eq!(big.len(), 4000);
        for slot in UNSEEN_SLOTS {
            assert_eq!(big.iter().filter(|u| u.slot_type == slot).count(), 1000);
        }
        assert!(generate_unseen_testset(&unseen, &IN_DOMAIN_SLOTS, 0, &config)
            .unwrap()
            .is_empty());

        let two = full.restrict(&["MealType", "CityName"]).unwrap();
        let small = generate_unseen_testset(&two, &IN_DOMAIN_SLOTS, 5, &config).unwrap();
        assert_eq!(small.len(), 10);
        assert!(small
            .iter()
            .all(|u| u.slot_type == "MealType" || u.slot_type == "CityName"));

        let err = generate_unseen_testset(&two, &["CityName"], 5, &config).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn load_reads_directory_layout() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("catalogs")).unwrap();
        fs::create_dir_all(dir.path().join("carriers")).unwrap();
        fs::write(
            dir.path().join("catalogs/Color.txt"),
            "red\ndark blue\ngreen\nyellow\nwhite\n",
        )
        .unwrap();
        fs::write(dir.path().join("carriers/Color.txt"), "paint it ⟨SLOT⟩\n").unwrap();
        let g = Grammar::load(dir.path()).unwrap();
        assert_eq!(g.carrier_slots(), ["Color"]);
        assert_eq!(g.catalogs["Color"].entities[1], ["dark", "blue"]);
    }
}
