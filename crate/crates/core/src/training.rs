//! Epoch loop with early stopping on validation exact-match accuracy.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversarial::{lambda_schedule, AdversarialConfig};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::model::{Decoder, Example, ModelConfig, TaggerModel};
use crate::neural::{load_pretrained, Adam, AdamConfig, Gradients, ParamGroup, Vocab};
use crate::rng;
use crate::types::LabeledUtterance;

/// Examples per gradient accumulation chunk. Chunks are summed in order,
/// so results do not depend on the number of threads.
const CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CharEncoder {
    None,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WordEncoder {
    None,
    Random,
    Pretrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub char_encoder: CharEncoder,
    pub word_encoder: WordEncoder,
    /// Text file of `token v1 ... vd` lines, used with `word_encoder = "pretrained"`.
    pub pretrained_vectors: Option<PathBuf>,
    pub freeze_word_embeddings: bool,
    pub decoder: Decoder,
    pub lr: f64,
    pub char_emb_dim: usize,
    pub word_emb_dim: usize,
    pub char_hidden: usize,
    pub word_hidden: usize,
    pub embedding_dropout: f64,
    pub variational_dropout: f64,
    pub patience: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Evaluate every this many batches instead of once per epoch.
    pub eval_every_batches: Option<usize>,
    pub seed: u64,
    /// Global gradient norm bound; 0 disables clipping.
    pub clip_norm: f64,
    /// Worker threads for gradient computation; 0 uses all cores.
    pub threads: usize,
    /// Task-specific BiLSTM on top of the shared one. Always on with the adversary.
    pub seq_layer: bool,
    pub crf_end_scores: bool,
    pub bio_constraints: bool,
    /// Overrides the λ schedule with a constant.
    pub fixed_lambda: Option<f64>,
    pub adversarial: AdversarialConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            char_encoder: CharEncoder::None,
            word_encoder: WordEncoder::Random,
            pretrained_vectors: None,
            freeze_word_embeddings: false,
            decoder: Decoder::Crf,
            lr: 0.002,
            char_emb_dim: 100,
            word_emb_dim: 300,
            char_hidden: 100,
            word_hidden: 200,
            embedding_dropout: 0.5,
            variational_dropout: 0.01,
            patience: 10,
            batch_size: 32,
            max_epochs: 50,
            eval_every_batches: None,
            seed: 0,
            clip_norm: 5.0,
            threads: 0,
            seq_layer: false,
            crf_end_scores: false,
            bio_constraints: false,
            fixed_lambda: None,
            adversarial: AdversarialConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: TrainConfig = toml::from_str(text).map_err(|e| Error::Argument(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.char_encoder == CharEncoder::None && self.word_encoder == WordEncoder::None {
            return Err(Error::Argument(
                "at least one of char_encoder and word_encoder must be active".into(),
            ));
        }
        if self.word_encoder == WordEncoder::Pretrained && self.pretrained_vectors.is_none() {
            return Err(Error::Argument(
                "word_encoder = \"pretrained\" needs pretrained_vectors".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::Argument("batch_size must be positive".into()));
        }
        if self.eval_every_batches == Some(0) {
            return Err(Error::Argument("eval_every_batches must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Argument(format!("lr must be positive, got {}", self.lr)));
        }
        if self.clip_norm.is_nan() || self.clip_norm < 0.0 {
            return Err(Error::Argument(format!(
                "clip_norm must be non-negative, got {}",
                self.clip_norm
            )));
        }
        if let Some(l) = self.fixed_lambda {
            if !l.is_finite() {
                return Err(Error::Argument("fixed_lambda must be finite".into()));
            }
        }
        self.adversarial.validate()
    }

    /// The model architecture for the given training slot types.
    pub fn model_config(&self, training_slots: &[String]) -> ModelConfig {
        let adversary = self.adversarial.enabled;
        let slot_labels = if !adversary {
            Vec::new()
        } else if self.adversarial.slot_labels.is_empty() {
            training_slots.to_vec()
        } else {
            self.adversarial.slot_labels.clone()
        };
        ModelConfig {
            char_encoder: self.char_encoder != CharEncoder::None,
            word_encoder: self.word_encoder != WordEncoder::None,
            char_emb_dim: self.char_emb_dim,
            char_hidden: self.char_hidden,
            word_emb_dim: self.word_emb_dim,
            word_hidden: self.word_hidden,
            decoder: self.decoder,
            seq_layer: self.seq_layer || adversary,
            adversary,
            slot_labels,
            crf_end_scores: self.crf_end_scores,
            bio_constraints: self.bio_constraints,
            embedding_dropout: self.embedding_dropout,
            variational_dropout: self.variational_dropout,
            word_embeddings_trainable: !self.freeze_word_embeddings,
        }
    }
}

/// One validation evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Optimizer steps completed so far.
    pub steps: usize,
    /// Mean tagging loss over the examples seen since the last record.
    pub loss_y: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_d: Option<f64>,
    pub lambda: f64,
    pub valid_accuracy: f64,
    pub valid_f1: f64,
    pub improved: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The model with the best validation accuracy.
    pub model: TaggerModel<f32>,
    pub log: Vec<EpochRecord>,
    pub best_accuracy: Option<f64>,
    pub stopped_early: bool,
}

/// Word and character vocabularies from the training tokens.
pub fn build_vocabularies(train: &[LabeledUtterance]) -> (Vocab, Vocab) {
    let words = Vocab::build(train.iter().flat_map(|u| u.tokens.iter().map(String::as_str)));
    let mut chars = BTreeSet::new();
    for u in train {
        for t in &u.tokens {
            chars.extend(t.chars().map(String::from));
        }
    }
    (words, Vocab::build(chars))
}

/// Sorted distinct slot types of the training data.
pub fn training_slots(train: &[LabeledUtterance]) -> Vec<String> {
    let set: BTreeSet<&str> = train.iter().map(|u| u.slot_type.as_str()).collect();
    set.into_iter().map(String::from).collect()
}

/// Builds the initial model for `config`, loading pretrained vectors if asked.
pub fn init_model(config: &TrainConfig, train: &[LabeledUtterance]) -> Result<TaggerModel<f32>> {
    config.validate()?;
    let (words, chars) = build_vocabularies(train);
    let mut model = TaggerModel::new(config.model_config(&training_slots(train)), words, chars, config.seed)?;
    if config.word_encoder == WordEncoder::Pretrained {
        let path = config.pretrained_vectors.as_ref().expect("validated");
        let id = model.word_embedding_id().expect("word encoder active");
        let words = model.words().clone();
        load_pretrained(path, &words, &mut model.params_mut()[id])?;
    }
    Ok(model)
}

fn batches(examples: &[Example], batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut rng = rng::stream(seed, &[0xBA7C, epoch as u64]);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng);
    order.sort_by_key(|&i| examples[i].input.len());
    let mut out: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    out.shuffle(&mut rng);
    out
}

/// Clips the adversary's gradient and the rest separately, since they
/// belong to different objectives.
fn clip(model: &TaggerModel<f32>, grads: &mut Gradients<f32>, max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    for adversary in [false, true] {
        let ids: Vec<_> = model
            .params()
            .iter()
            .filter(|(_, p)| (p.group == ParamGroup::Adversary) == adversary)
            .map(|(id, _)| id)
            .collect();
        let norm = ids
            .iter()
            .map(|&id| grads[id].iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        if norm > max_norm {
            let factor = (max_norm / norm) as f32;
            for &id in &ids {
                grads[id].mapv_inplace(|x| x * factor);
            }
        }
    }
}

struct BatchResult {
    grads: Gradients<f32>,
    loss_y: f64,
    loss_d: f64,
}

fn batch_gradients(
    model: &TaggerModel<f32>,
    examples: &[Example],
    batch: &[usize],
    lambda: f32,
    seed: u64,
    epoch: usize,
) -> Result<BatchResult> {
    let parts: Vec<Result<BatchResult>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grads = model.params().zero_gradients();
            let (mut loss_y, mut loss_d) = (0.0, 0.0);
            for &i in chunk {
                let mut rng = TaggerModel::<f32>::dropout_stream(seed, epoch as u64, i as u64);
                let loss = model.accumulate_gradients(&examples[i], lambda, Some(&mut rng), &mut grads)?;
                loss_y += loss.tag_loss as f64;
                loss_d += loss.slot_loss.unwrap_or(0.0) as f64;
            }
            Ok(BatchResult { grads, loss_y, loss_d })
        })
        .collect();
    let mut total: Option<BatchResult> = None;
    for part in parts {
        let part = part?;
        match &mut total {
            None => total = Some(part),
            Some(t) => {
                t.grads.add_assign(&part.grads);
                t.loss_y += part.loss_y;
                t.loss_d += part.loss_d;
            }
        }
    }
    let mut total = total.expect("non-empty batch");
    total.grads.scale(1.0 / batch.len() as f32);
    Ok(total)
}

pub fn train(config: &TrainConfig, train: &[LabeledUtterance], valid: &[LabeledUtterance]) -> Result<TrainOutcome> {
    train_with_callback(config, train, valid, |_| {})
}

/// Like [`train`], calling `on_record` after every validation evaluation.
pub fn train_with_callback(
    config: &TrainConfig,
    train: &[LabeledUtterance],
    valid: &[LabeledUtterance],
    mut on_record: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let model = init_model(config, train)?;
    if config.max_epochs == 0 {
        return Ok(TrainOutcome {
            model,
            log: Vec::new(),
            best_accuracy: None,
            stopped_early: false,
        });
    }
    if valid.is_empty() {
        return Err(Error::Data("validation set is empty".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
    run(config, model, train, valid, &pool, &mut on_record)
}

fn run(
    config: &TrainConfig,
    mut model: TaggerModel<f32>,
    train: &[LabeledUtterance],
    valid: &[LabeledUtterance],
    pool: &rayon::ThreadPool,
    on_record: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    let examples = train.iter().map(|u| model.example(u)).collect::<Result<Vec<_>>>()?;
    let adversary = model.config().adversary;
    let adam_config = AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    };
    let mut adam = Adam::new(adam_config, model.params());
    let per_epoch = examples.len().div_ceil(config.batch_size);
    let planned = (config.max_epochs * per_epoch) as f64;

    let mut log = Vec::new();
    let mut best: Option<(f64, TaggerModel<f32>)> = None;
    let mut since_best = 0;
    let (mut sum_y, mut sum_d, mut seen) = (0.0, 0.0, 0usize);

    for epoch in 1..=config.max_epochs {
        let plan = batches(&examples, config.batch_size, config.seed, epoch);
        let last = plan.len() - 1;
        for (b, batch) in plan.iter().enumerate() {
            let lambda = match (adversary, config.fixed_lambda) {
                (false, _) => 0.0,
                (true, Some(l)) => l,
                (true, None) => lambda_schedule((adam.steps() as f64 / planned).min(1.0), config.adversarial.gamma)?,
            };
            let step = adam.steps() + 1;
            let mut result =
                pool.install(|| batch_gradients(&model, &examples, batch, lambda as f32, config.seed, epoch))?;
            if !(result.loss_y.is_finite() && result.loss_d.is_finite()) {
                return Err(Error::Training {
                    step,
                    message: "non-finite loss".into(),
                });
            }
            sum_y += result.loss_y;
            sum_d += result.loss_d;
            seen += batch.len();
            clip(&model, &mut result.grads, config.clip_norm);
            adam.step(model.params_mut(), &result.grads)?;

            let due = match config.eval_every_batches {
                Some(n) => adam.steps().is_multiple_of(n) || b == last,
                None => b == last,
            };
            if !due {
                continue;
            }
            let report = pool.install(|| evaluate(&model, valid))?;
            let accuracy = report.overall.accuracy;
            let improved = best.as_ref().is_none_or(|(a, _)| accuracy > *a);
            let record = EpochRecord {
                epoch,
                steps: adam.steps(),
                loss_y: sum_y / seen as f64,
                loss_d: adversary.then(|| sum_d / seen as f64),
                lambda,
                valid_accuracy: accuracy,
                valid_f1: report.overall.f1,
                improved,
            };
            (sum_y, sum_d, seen) = (0.0, 0.0, 0);
            on_record(&record);
            log.push(record);
            if improved {
                best = Some((accuracy, model.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.patience {
                    let (acc, model) = best.expect("first evaluation always improves");
                    return Ok(TrainOutcome {
                        model,
                        log,
                        best_accuracy: Some(acc),
                        stopped_early: true,
                    });
                }
            }
        }
    }
    let (acc, model) = best.expect("at least one evaluation");
    Ok(TrainOutcome {
        model,
        log,
        best_accuracy: Some(acc),
        stopped_early: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checkpoint;
    use crate::datagen::{generate_corpus, GenConfig, Grammar};
    use crate::types::DatasetSplit;

    fn data(size: usize, slots: &[&str]) -> DatasetSplit {
        let grammar = Grammar::bundled().restrict(slots).unwrap();
        let config = GenConfig {
            corpus_size: size,
            seed: 11,
            ..GenConfig::default()
        };
        generate_corpus(&grammar, &config).unwrap()
    }

    fn tiny() -> TrainConfig {
        TrainConfig {
            word_emb_dim: 8,
            word_hidden: 6,
            char_emb_dim: 4,
            char_hidden: 3,
            batch_size: 8,
            max_epochs: 2,
            threads: 1,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let split = data(60, &["Time", "Drink"]);
        let config = TrainConfig {
            max_epochs: 0,
            ..tiny()
        };
        let out = train(&config, &split.train, &split.validation).unwrap();
        assert!(out.log.is_empty());
        assert_eq!(out.model, init_model(&config, &split.train).unwrap());
    }

    #[test]
    fn identical_runs_are_identical() {
        let split = data(80, &["Time", "Drink"]);
        let config = TrainConfig {
            char_encoder: CharEncoder::Random,
            adversarial: AdversarialConfig {
                enabled: true,
                ..AdversarialConfig::default()
            },
            ..tiny()
        };
        let a = train(&config, &split.train, &split.validation).unwrap();
        let b = train(&config, &split.train, &split.validation).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(
            checkpoint::to_bytes(&a.model).unwrap(),
            checkpoint::to_bytes(&b.model).unwrap()
        );
        assert!(a.log.iter().all(|r| r.loss_d.is_some()));

        // Fixed-size accumulation chunks make the thread count irrelevant.
        let c = train(&TrainConfig { threads: 3, ..config }, &split.train, &split.validation).unwrap();
        assert_eq!(a.log, c.log);
    }

    #[test]
    fn early_stopping_and_best_checkpoint() {
        let split = data(60, &["Time", "Drink"]);
        let config = TrainConfig {
            lr: 1e-12,
            patience: 2,
            max_epochs: 10,
            ..tiny()
        };
        let out = train(&config, &split.train, &split.validation).unwrap();
        assert!(out.stopped_early);
        assert_eq!(out.log.len(), 3);
        let max = out.log.iter().map(|r| r.valid_accuracy).fold(f64::MIN, f64::max);
        assert_eq!(out.best_accuracy, Some(max));
        let report = evaluate(&out.model, &split.validation).unwrap();
        assert_eq!(report.overall.accuracy, max);

        let out = train(
            &TrainConfig {
                max_epochs: 3,
                patience: 100,
                ..config
            },
            &split.train,
            &split.validation,
        )
        .unwrap();
        assert!(!out.stopped_early);
        assert_eq!(out.log.last().unwrap().epoch, 3);
    }

    #[test]
    fn evaluation_interval_in_batches() {
        let split = data(60, &["Time", "Drink"]);
        let config = TrainConfig {
            eval_every_batches: Some(2),
            max_epochs: 1,
            ..tiny()
        };
        let out = train(&config, &split.train, &split.validation).unwrap();
        let batches = split.train.len().div_ceil(8);
        assert_eq!(out.log.len(), batches.div_ceil(2));
    }

    #[test]
    fn divergence_reports_the_step() {
        let dir = tempfile::tempdir().unwrap();
        let split = data(40, &["Time", "Drink"]);
        let vectors = dir.path().join("vec.txt");
        let mut text = String::new();
        for w in split.train.iter().flat_map(|u| &u.tokens) {
            text.push_str(&format!("{w} inf 0 0 0 0 0 0 0\n"));
        }
        std::fs::write(&vectors, text).unwrap();
        let config = TrainConfig {
            word_encoder: WordEncoder::Pretrained,
            pretrained_vectors: Some(vectors),
            ..tiny()
        };
        match train(&config, &split.train, &split.validation) {
            Err(Error::Training { step, .. }) => assert_eq!(step, 1),
            other => panic!("expected a training error, got {other:?}"),
        }
    }

    #[test]
    fn pretrained_rows_are_loaded() {
        let dir = tempfile::tempdir().unwrap();
        let split = data(40, &["Time", "Drink"]);
        let vectors = dir.path().join("vec.txt");
        std::fs::write(&vectors, "2 8\nat 1 2 3 4 5 6 7 8\nnotaword 0 0 0 0 0 0 0 0\n").unwrap();
        let config = TrainConfig {
            word_encoder: WordEncoder::Pretrained,
            pretrained_vectors: Some(vectors),
            freeze_word_embeddings: true,
            ..tiny()
        };
        let model = init_model(&config, &split.train).unwrap();
        let id = model.word_embedding_id().unwrap();
        let row = model.words().get("at");
        assert!(row > 1);
        assert_eq!(
            model.params()[id].row(row).to_vec(),
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]
        );
        let trained = train(&config, &split.train, &split.validation).unwrap();
        assert_eq!(trained.model.params()[id], model.params()[id]);
    }

    #[test]
    fn frozen_zero_lambda_matches_two_layer_model() {
        let split = data(60, &["Time", "Drink"]);
        let base = TrainConfig {
            seq_layer: true,
            ..tiny()
        };
        let adv = TrainConfig {
            fixed_lambda: Some(0.0),
            adversarial: AdversarialConfig {
                enabled: true,
                ..AdversarialConfig::default()
            },
            ..base.clone()
        };
        let a = train(&base, &split.train, &split.validation).unwrap();
        let b = train(&adv, &split.train, &split.validation).unwrap();
        for (x, y) in a.log.iter().zip(&b.log) {
            assert_eq!(
                (x.loss_y, x.valid_accuracy, x.valid_f1),
                (y.loss_y, y.valid_accuracy, y.valid_f1)
            );
        }
        let shared: Vec<_> = b
            .model
            .params()
            .iter()
            .filter(|(_, p)| p.group != ParamGroup::Adversary)
            .map(|(_, p)| p.clone())
            .collect();
        let plain: Vec<_> = a.model.params().iter().map(|(_, p)| p.clone()).collect();
        assert_eq!(shared, plain);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let config = TrainConfig {
            char_encoder: CharEncoder::Random,
            decoder: Decoder::Softmax,
            max_epochs: 7,
            adversarial: AdversarialConfig {
                enabled: true,
                gamma: 3.0,
                slot_labels: vec!["A".into(), "B".into()],
            },
            ..TrainConfig::default()
        };
        let text = config.to_toml_string();
        assert_eq!(TrainConfig::from_toml_str(&text).unwrap(), config);
        let parsed = TrainConfig::from_toml_str("word_encoder = \"none\"\nchar_encoder = \"random\"\n").unwrap();
        assert_eq!(parsed.patience, 10);
        assert!(TrainConfig::from_toml_str("word_encoder = \"none\"").is_err());
        assert!(TrainConfig::from_toml_str("batch_sise = 3").is_err());
    }

    #[test]
    fn size_grows_with_nested_vocabularies() {
        let split = data(200, &["FoodItem", "ListItem"]);
        let config = TrainConfig {
            max_epochs: 1,
            ..tiny()
        };
        let small = train(&config, &split.train[..40], &split.validation).unwrap();
        let large = train(&config, &split.train, &split.validation).unwrap();
        assert!(small.model.words().len() < large.model.words().len());
        assert!(checkpoint::model_size(&small.model).unwrap() < checkpoint::model_size(&large.model).unwrap());
    }
}
