//! The BiLSTM tagger: word and/or character representations, a shared
//! BiLSTM encoder, an optional task-specific BiLSTM on top, a dense
//! emission layer, a softmax or CRF decoder and an optional slot-type
//! adversary on the last shared-encoder output.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crf::{self, CrfParams, TransitionMask};
use crate::error::{Error, Result};
use crate::neural::dropout::keep_mask;
use crate::neural::embedding::init_table;
use crate::neural::lstm::{reverse_rows, LstmTrace};
use crate::neural::{
    apply_dropout, softmax_ce_loss, BiLstm, Dense, DropoutMode, Float, Gradients, ParamGroup, ParamId, ParamSet, Vocab,
};
use crate::rng;
use crate::types::{LabeledUtterance, Tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decoder {
    /// Per-position softmax with cross-entropy loss.
    Softmax,
    /// Linear-chain CRF with Viterbi decoding.
    Crf,
}

/// Architecture of a [`TaggerModel`]. Stored verbatim in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub char_encoder: bool,
    pub word_encoder: bool,
    pub char_emb_dim: usize,
    pub char_hidden: usize,
    pub word_emb_dim: usize,
    pub word_hidden: usize,
    pub decoder: Decoder,
    /// Adds the task-specific BiLSTM on top of the shared one.
    pub seq_layer: bool,
    /// Adds the slot-type adversary. Requires `slot_labels`.
    pub adversary: bool,
    pub slot_labels: Vec<String>,
    pub crf_end_scores: bool,
    /// Forbid `I-C` after `O`/`CC` or at the start during CRF decoding.
    pub bio_constraints: bool,
    pub embedding_dropout: f64,
    pub variational_dropout: f64,
    pub word_embeddings_trainable: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            char_encoder: false,
            word_encoder: true,
            char_emb_dim: 100,
            char_hidden: 100,
            word_emb_dim: 300,
            word_hidden: 200,
            decoder: Decoder::Crf,
            seq_layer: false,
            adversary: false,
            slot_labels: Vec::new(),
            crf_end_scores: false,
            bio_constraints: false,
            embedding_dropout: 0.5,
            variational_dropout: 0.01,
            word_embeddings_trainable: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.char_encoder && !self.word_encoder {
            return Err(Error::Argument(
                "at least one of the char and word encoders must be active".into(),
            ));
        }
        let dims = [
            (self.char_encoder, self.char_emb_dim, "char_emb_dim"),
            (self.char_encoder, self.char_hidden, "char_hidden"),
            (self.word_encoder, self.word_emb_dim, "word_emb_dim"),
            (true, self.word_hidden, "word_hidden"),
        ];
        for (active, dim, name) in dims {
            if active && dim == 0 {
                return Err(Error::Argument(format!("{name} must be positive")));
            }
        }
        if self.adversary && self.slot_labels.len() < 2 {
            return Err(Error::Argument(
                "the slot adversary needs at least two slot labels".into(),
            ));
        }
        for rate in [self.embedding_dropout, self.variational_dropout] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Argument(format!("dropout rate {rate} outside [0, 1)")));
            }
        }
        Ok(())
    }

    /// Width of the per-token representation fed to the shared encoder.
    pub fn input_dim(&self) -> usize {
        let chars = if self.char_encoder { 2 * self.char_hidden } else { 0 };
        let words = if self.word_encoder { self.word_emb_dim } else { 0 };
        chars + words
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct CrfIds {
    transitions: ParamId,
    start: ParamId,
    end: Option<ParamId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Layers {
    word_emb: Option<ParamId>,
    char_emb: Option<ParamId>,
    char_lstm: Option<BiLstm>,
    base: BiLstm,
    seq: Option<BiLstm>,
    emission: Dense,
    crf: Option<CrfIds>,
    adversary: Option<Dense>,
}

/// Token and character indices of one utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedInput {
    pub words: Vec<usize>,
    pub chars: Vec<Vec<usize>>,
}

impl EncodedInput {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// A training instance in index form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub input: EncodedInput,
    pub gold: Vec<usize>,
    pub slot: Option<usize>,
}

/// Per-example loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleLoss<F> {
    pub tag_loss: F,
    pub slot_loss: Option<F>,
}

struct CharTrace<F> {
    fwd: LstmTrace<F>,
    bwd: LstmTrace<F>,
    steps: usize,
}

/// Everything the backward pass needs from one forward pass.
struct Pass<F> {
    char_traces: Vec<CharTrace<F>>,
    emb_mask: Option<Array2<F>>,
    base_trace: crate::neural::lstm::BiLstmTrace<F>,
    base_out: Array2<F>,
    seq: Option<(crate::neural::lstm::BiLstmTrace<F>, Array2<F>)>,
    emissions: Array2<F>,
}

impl<F> Pass<F> {
    fn encoder_out(&self) -> &Array2<F> {
        self.seq.as_ref().map_or(&self.base_out, |(_, out)| out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggerModel<F> {
    config: ModelConfig,
    words: Vocab,
    chars: Vocab,
    params: ParamSet<F>,
    layers: Layers,
}

impl<F: Float> TaggerModel<F> {
    /// Builds a freshly initialized model. Parameters are created in a
    /// fixed order so that the layout is a function of the configuration
    /// and vocabulary sizes alone.
    pub fn new(config: ModelConfig, words: Vocab, chars: Vocab, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(seed, &[0x1417]);
        let mut params = ParamSet::new();
        let shared = ParamGroup::Shared;
        let word_emb = config.word_encoder.then(|| {
            let id = params.add(
                "word_emb",
                shared,
                init_table(words.len(), config.word_emb_dim, &mut rng),
            );
            params.param_mut(id).trainable = config.word_embeddings_trainable;
            id
        });
        let (char_emb, char_lstm) = if config.char_encoder {
            let emb = params.add(
                "char_emb",
                shared,
                init_table(chars.len(), config.char_emb_dim, &mut rng),
            );
            let lstm = BiLstm::new(
                &mut params,
                "char_lstm",
                shared,
                config.char_emb_dim,
                config.char_hidden,
                &mut rng,
            );
            (Some(emb), Some(lstm))
        } else {
            (None, None)
        };
        let base = BiLstm::new(
            &mut params,
            "base_lstm",
            shared,
            config.input_dim(),
            config.word_hidden,
            &mut rng,
        );
        let seq = config.seq_layer.then(|| {
            BiLstm::new(
                &mut params,
                "seq_lstm",
                ParamGroup::Task,
                2 * config.word_hidden,
                config.word_hidden,
                &mut rng,
            )
        });
        let emission = Dense::new(
            &mut params,
            "emission",
            ParamGroup::Task,
            2 * config.word_hidden,
            Tag::COUNT,
            &mut rng,
        );
        let crf = (config.decoder == Decoder::Crf).then(|| CrfIds {
            transitions: params.add(
                "crf.transitions",
                ParamGroup::Task,
                Array2::zeros((Tag::COUNT, Tag::COUNT)),
            ),
            start: params.add("crf.start", ParamGroup::Task, Array2::zeros((1, Tag::COUNT))),
            end: config
                .crf_end_scores
                .then(|| params.add("crf.end", ParamGroup::Task, Array2::zeros((1, Tag::COUNT)))),
        });
        let adversary = config.adversary.then(|| {
            Dense::new(
                &mut params,
                "adversary",
                ParamGroup::Adversary,
                2 * config.word_hidden,
                config.slot_labels.len(),
                &mut rng,
            )
        });
        Ok(TaggerModel {
            config,
            words,
            chars,
            params,
            layers: Layers {
                word_emb,
                char_emb,
                char_lstm,
                base,
                seq,
                emission,
                crf,
                adversary,
            },
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn words(&self) -> &Vocab {
        &self.words
    }

    pub fn chars(&self) -> &Vocab {
        &self.chars
    }

    pub fn params(&self) -> &ParamSet<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<F> {
        &mut self.params
    }

    /// Same model in another float type.
    pub fn cast<G: Float>(&self) -> TaggerModel<G> {
        TaggerModel {
            config: self.config.clone(),
            words: self.words.clone(),
            chars: self.chars.clone(),
            params: self.params.cast(),
            layers: self.layers.clone(),
        }
    }

    /// Word embedding table, if the word encoder is active.
    pub fn word_embedding_id(&self) -> Option<ParamId> {
        self.layers.word_emb
    }

    pub fn crf_params(&self) -> Option<CrfParams<F>> {
        self.layers.crf.map(|ids| CrfParams {
            transitions: self.params[ids.transitions].clone(),
            start: self.params[ids.start].row(0).to_owned(),
            end: ids.end.map(|e| self.params[e].row(0).to_owned()),
        })
    }

    pub fn encode(&self, tokens: &[String]) -> EncodedInput {
        EncodedInput {
            words: tokens.iter().map(|t| self.words.get(t)).collect(),
            chars: tokens
                .iter()
                .map(|t| t.chars().map(|c| self.chars.get(c.encode_utf8(&mut [0; 4]))).collect())
                .collect(),
        }
    }

    pub fn example(&self, utt: &LabeledUtterance) -> Result<Example> {
        let slot = if self.config.adversary {
            let idx = self
                .config
                .slot_labels
                .iter()
                .position(|s| *s == utt.slot_type)
                .ok_or_else(|| Error::Data(format!("slot type {:?} is not a training slot label", utt.slot_type)))?;
            Some(idx)
        } else {
            None
        };
        Ok(Example {
            input: self.encode(&utt.tokens),
            gold: utt.tags.iter().map(|t| t.index()).collect(),
            slot,
        })
    }

    fn char_forward(&self, char_ids: &[usize], rng: &mut Option<&mut ChaCha8Rng>) -> Result<(Array1<F>, CharTrace<F>)> {
        let (emb, lstm) = match (self.layers.char_emb, self.layers.char_lstm) {
            (Some(e), Some(l)) => (e, l),
            _ => return Err(Error::Argument("model has no character encoder".into())),
        };
        if char_ids.is_empty() {
            return Err(Error::Argument("cannot encode an empty word".into()));
        }
        let table = &self.params[emb];
        let x = table.select(Axis(0), char_ids);
        let masks = self.recurrent_masks(lstm.hidden(), rng)?;
        let [mf, mb] = masks;
        let (out_f, fwd) = lstm.forward.forward(&self.params, x.clone(), mf);
        let (out_b, bwd) = lstm.backward.forward(&self.params, reverse_rows(x.view()), mb);
        let n = char_ids.len();
        let h = lstm.hidden();
        let mut v = Array1::zeros(2 * h);
        v.slice_mut(s![..h]).assign(&out_f.row(n - 1));
        v.slice_mut(s![h..]).assign(&out_b.row(n - 1));
        Ok((v, CharTrace { fwd, bwd, steps: n }))
    }

    /// Fixed-length character representation of `word`: the final forward
    /// state concatenated with the final state of the backward pass.
    pub fn char_encode(&self, word: &str) -> Result<Array1<F>> {
        let ids: Vec<usize> = word
            .chars()
            .map(|c| self.chars.get(c.encode_utf8(&mut [0; 4])))
            .collect();
        Ok(self.char_forward(&ids, &mut None)?.0)
    }

    fn recurrent_masks(&self, hidden: usize, rng: &mut Option<&mut ChaCha8Rng>) -> Result<[Option<Array1<F>>; 2]> {
        let rate = self.config.variational_dropout;
        match rng {
            Some(r) if rate > 0.0 => Ok([Some(keep_mask(hidden, rate, *r)?), Some(keep_mask(hidden, rate, *r)?)]),
            _ => Ok([None, None]),
        }
    }

    /// Forward pass. Dropout is active iff `rng` is given.
    fn run(&self, input: &EncodedInput, mut rng: Option<&mut ChaCha8Rng>) -> Result<Pass<F>> {
        let steps = input.len();
        if steps == 0 {
            return Err(Error::Argument("empty utterance".into()));
        }
        let mut w_full = Array2::zeros((steps, self.config.input_dim()));
        let mut char_traces = Vec::new();
        let mut col = 0;
        if self.config.char_encoder {
            for (t, ids) in input.chars.iter().enumerate() {
                let (v, trace) = self.char_forward(ids, &mut rng)?;
                w_full.slice_mut(s![t, ..v.len()]).assign(&v);
                char_traces.push(trace);
            }
            col = 2 * self.config.char_hidden;
        }
        if let Some(emb) = self.layers.word_emb {
            let rows = self.params[emb].select(Axis(0), &input.words);
            w_full.slice_mut(s![.., col..]).assign(&rows);
        }
        let (x, emb_mask) = match rng.as_deref_mut() {
            Some(r) => apply_dropout(&w_full, self.config.embedding_dropout, DropoutMode::Embedding, true, r)?,
            None => (w_full, None),
        };
        let masks = self.recurrent_masks(self.layers.base.hidden(), &mut rng)?;
        let (base_out, base_trace) = self.layers.base.forward(&self.params, x.view(), masks);
        let seq = match self.layers.seq {
            Some(seq) => {
                let masks = self.recurrent_masks(seq.hidden(), &mut rng)?;
                let (out, trace) = seq.forward(&self.params, base_out.view(), masks);
                Some((trace, out))
            }
            None => None,
        };
        let enc = seq.as_ref().map_or(&base_out, |(_, out)| out);
        let emissions = self.layers.emission.forward(&self.params, enc.view());
        Ok(Pass {
            char_traces,
            emb_mask,
            base_trace,
            base_out,
            seq,
            emissions,
        })
    }

    /// Final encoder states (`T × 2·word_hidden`) with dropout off.
    pub fn encode_utterance(&self, tokens: &[String]) -> Result<Array2<F>> {
        let pass = self.run(&self.encode(tokens), None)?;
        Ok(pass.encoder_out().clone())
    }

    /// Emission scores (`T × 4`) with dropout off.
    pub fn emissions(&self, input: &EncodedInput) -> Result<Array2<F>> {
        Ok(self.run(input, None)?.emissions)
    }

    /// Slot-classifier logits on the last shared-encoder output.
    pub fn slot_logits(&self, tokens: &[String]) -> Result<Option<Array1<F>>> {
        let Some(adv) = self.layers.adversary else {
            return Ok(None);
        };
        let pass = self.run(&self.encode(tokens), None)?;
        let last = pass.base_out.slice(s![pass.base_out.nrows() - 1.., ..]);
        Ok(Some(adv.forward(&self.params, last).row(0).to_owned()))
    }

    /// Tagging loss, its emission gradient and, for CRF models, the
    /// transition-parameter gradients.
    fn tag_loss(&self, emissions: ArrayView2<F>, gold: &[usize]) -> (F, Array2<F>, Option<crf::CrfGradients<F>>) {
        match self.crf_params() {
            Some(p) => {
                let (loss, mut g) = crf::crf_nll(emissions, gold, &p);
                let d = std::mem::take(&mut g.emissions);
                (loss, d, Some(g))
            }
            None => {
                let (loss, d) = softmax_ce_loss(emissions, gold);
                (loss, d, None)
            }
        }
    }

    /// Loss terms without gradients (dropout off unless `rng` is given).
    pub fn loss(&self, example: &Example, rng: Option<&mut ChaCha8Rng>) -> Result<ExampleLoss<F>> {
        let pass = self.run(&example.input, rng)?;
        let (tag_loss, _, _) = self.tag_loss(pass.emissions.view(), &example.gold);
        let slot_loss = match (self.layers.adversary, example.slot) {
            (Some(adv), Some(slot)) => {
                let last = pass.base_out.slice(s![pass.base_out.nrows() - 1.., ..]);
                let logits = adv.forward(&self.params, last);
                Some(softmax_ce_loss(logits.view(), &[slot]).0)
            }
            _ => None,
        };
        Ok(ExampleLoss { tag_loss, slot_loss })
    }

    /// Accumulates into `grads` the gradient of `L_y` for task and shared
    /// parameters, of `L_d` for the adversary, and `−λ·∂L_d` for shared
    /// parameters through the reversal layer.
    pub fn accumulate_gradients(
        &self,
        example: &Example,
        lambda: F,
        rng: Option<&mut ChaCha8Rng>,
        grads: &mut Gradients<F>,
    ) -> Result<ExampleLoss<F>> {
        if example.gold.len() != example.input.len() {
            return Err(Error::Validation("gold tags and tokens differ in length".into()));
        }
        let pass = self.run(&example.input, rng)?;
        let steps = example.input.len();
        let (tag_loss, d_emissions, crf_grads) = self.tag_loss(pass.emissions.view(), &example.gold);

        if let (Some(ids), Some(g)) = (self.layers.crf, crf_grads) {
            grads[ids.transitions] += &g.transitions;
            let mut start = grads[ids.start].row_mut(0);
            start += &g.start;
            if let (Some(end_id), Some(end)) = (ids.end, g.end) {
                let mut row = grads[end_id].row_mut(0);
                row += &end;
            }
        }

        let d_enc = self
            .layers
            .emission
            .backward(&self.params, grads, pass.encoder_out().view(), d_emissions.view());
        let mut d_base = match (&self.layers.seq, &pass.seq) {
            (Some(seq), Some((trace, _))) => seq.backward(&self.params, grads, trace, d_enc.view()),
            _ => d_enc,
        };

        let mut slot_loss = None;
        if let (Some(adv), Some(slot)) = (self.layers.adversary, example.slot) {
            let last = pass.base_out.slice(s![steps - 1.., ..]);
            let logits = adv.forward(&self.params, last);
            let (loss, d_logits) = softmax_ce_loss(logits.view(), &[slot]);
            let d_last = adv.backward(&self.params, grads, last, d_logits.view());
            let reversed = crate::adversarial::grad_reversal_backward(d_last.row(0), lambda);
            let mut row = d_base.row_mut(steps - 1);
            row += &reversed;
            slot_loss = Some(loss);
        }

        let mut d_x = self
            .layers
            .base
            .backward(&self.params, grads, &pass.base_trace, d_base.view());
        if let Some(mask) = &pass.emb_mask {
            d_x *= mask;
        }

        let mut col = 0;
        if let (Some(emb), Some(lstm)) = (self.layers.char_emb, self.layers.char_lstm) {
            let h = lstm.hidden();
            for (t, trace) in pass.char_traces.iter().enumerate() {
                let n = trace.steps;
                let mut d_f = Array2::zeros((n, h));
                d_f.row_mut(n - 1).assign(&d_x.slice(s![t, ..h]));
                let mut d_b = Array2::zeros((n, h));
                d_b.row_mut(n - 1).assign(&d_x.slice(s![t, h..2 * h]));
                let dx_f = lstm.forward.backward(&self.params, grads, &trace.fwd, d_f.view());
                let dx_b = lstm.backward.backward(&self.params, grads, &trace.bwd, d_b.view());
                let table = &mut grads[emb];
                for (i, &c) in example.input.chars[t].iter().enumerate() {
                    let mut row = table.row_mut(c);
                    row += &dx_f.row(i);
                    row += &dx_b.row(n - 1 - i);
                }
            }
            col = 2 * h;
        }
        if let Some(emb) = self.layers.word_emb {
            let table = &mut grads[emb];
            for (t, &w) in example.input.words.iter().enumerate() {
                let mut row = table.row_mut(w);
                row += &d_x.slice(s![t, col..]);
            }
        }
        Ok(ExampleLoss { tag_loss, slot_loss })
    }

    /// Tag indices: Viterbi for CRF models, per-position argmax otherwise.
    pub fn predict_indices(&self, input: &EncodedInput) -> Result<Vec<usize>> {
        let emissions = self.emissions(input)?;
        Ok(self.decode(emissions.view()))
    }

    fn decode(&self, emissions: ArrayView2<F>) -> Vec<usize> {
        match self.crf_params() {
            Some(p) if self.config.bio_constraints => {
                crf::viterbi_decode_masked(emissions, &p, &TransitionMask::bio()).0
            }
            Some(p) => crf::viterbi_decode(emissions, &p).0,
            None => emissions
                .rows()
                .into_iter()
                .map(|row| {
                    let mut best = 0;
                    for (k, &v) in row.iter().enumerate() {
                        if v > row[best] {
                            best = k;
                        }
                    }
                    best
                })
                .collect(),
        }
    }

    pub fn predict(&self, tokens: &[String]) -> Result<Vec<Tag>> {
        let idx = self.predict_indices(&self.encode(tokens))?;
        Ok(idx
            .into_iter()
            .map(|i| Tag::from_index(i).expect("tag index in range"))
            .collect())
    }

    /// Predicted tags with the probability of each chosen tag (softmax
    /// probability or CRF marginal).
    pub fn predict_with_scores(&self, tokens: &[String]) -> Result<(Vec<Tag>, Vec<f64>)> {
        let emissions = self.emissions(&self.encode(tokens))?;
        let idx = self.decode(emissions.view());
        let probs = match self.crf_params() {
            Some(p) => crf::marginals(emissions.view(), &p),
            None => {
                let mut probs = emissions.clone();
                for mut row in probs.rows_mut() {
                    let soft = crate::neural::loss::softmax(row.view());
                    row.assign(&soft);
                }
                probs
            }
        };
        let scores = idx.iter().enumerate().map(|(t, &i)| probs[[t, i]].as_f64()).collect();
        let tags = idx
            .into_iter()
            .map(|i| Tag::from_index(i).expect("tag index in range"))
            .collect();
        Ok((tags, scores))
    }

    /// Returns a random stream for dropout on one example.
    pub fn dropout_stream(seed: u64, epoch: u64, index: u64) -> ChaCha8Rng {
        rng::stream(seed, &[0xD50, epoch, index])
    }

    pub(crate) fn from_parts(config: ModelConfig, words: Vocab, chars: Vocab, params: ParamSet<F>) -> Result<Self> {
        let mut model = TaggerModel::new(config, words, chars, 0)?;
        if model.params.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                model.params.len(),
                params.len()
            )));
        }
        for ((_, want), (_, got)) in model.params.iter().zip(params.iter()) {
            if want.name != got.name || want.value.dim() != got.value.dim() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {:?} does not match layout {} {:?}",
                    got.name,
                    got.value.dim(),
                    want.name,
                    want.value.dim()
                )));
            }
        }
        model.params = params;
        Ok(model)
    }
}
