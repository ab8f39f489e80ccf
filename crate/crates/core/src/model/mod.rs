//! Shared-encoder language model with a next-word head and a supertag head.

mod checkpoint;
mod config;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{SupertaggedCorpus, TagId, TagInventory, Vocabulary, WordId};
use crate::error::{Error, Result};
use crate::nn::{lstm_step, softmax, softmax_cross_entropy, DenseMatrix, LstmParams};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::TrainConfig;
pub use train::{batch_gradient, batch_loss, train, BatchLoss, EpochLoss, Example, TrainReport};

pub const INIT_SCALE: f64 = 0.1;
pub const FORGET_BIAS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab_size: usize,
    pub tag_count: usize,
    pub embed: usize,
    pub hidden: usize,
    pub layers: usize,
}

/// All trainable blocks. Gradients use the same struct.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embedding: DenseMatrix,
    pub layers: Vec<LstmParams>,
    pub lm_w: DenseMatrix,
    pub lm_b: DenseMatrix,
    pub tag_w: DenseMatrix,
    pub tag_b: DenseMatrix,
}

impl ModelParams {
    pub fn zeros(dims: &ModelDims) -> Self {
        let mut layers = Vec::with_capacity(dims.layers);
        for l in 0..dims.layers {
            let input = if l == 0 { dims.embed } else { dims.hidden };
            layers.push(LstmParams::zeros(input, dims.hidden));
        }
        ModelParams {
            embedding: DenseMatrix::zeros(dims.vocab_size, dims.embed),
            layers,
            lm_w: DenseMatrix::zeros(dims.vocab_size, dims.hidden),
            lm_b: DenseMatrix::zeros(dims.vocab_size, 1),
            tag_w: DenseMatrix::zeros(dims.tag_count, dims.hidden),
            tag_b: DenseMatrix::zeros(dims.tag_count, 1),
        }
    }

    pub fn init(dims: &ModelDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embedding = DenseMatrix::uniform(dims.vocab_size, dims.embed, INIT_SCALE, &mut rng);
        let mut layers = Vec::with_capacity(dims.layers);
        for l in 0..dims.layers {
            let input = if l == 0 { dims.embed } else { dims.hidden };
            layers.push(LstmParams::init(input, dims.hidden, INIT_SCALE, FORGET_BIAS, &mut rng));
        }
        let lm_w = DenseMatrix::uniform(dims.vocab_size, dims.hidden, INIT_SCALE, &mut rng);
        let tag_w = DenseMatrix::uniform(dims.tag_count, dims.hidden, INIT_SCALE, &mut rng);
        let mut p = ModelParams {
            embedding,
            layers,
            lm_w,
            lm_b: DenseMatrix::zeros(dims.vocab_size, 1),
            tag_w,
            tag_b: DenseMatrix::zeros(dims.tag_count, 1),
        };
        p.round_to_f32();
        p
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            embedding: self.embedding.zeros_like(),
            layers: self.layers.iter().map(LstmParams::zeros_like).collect(),
            lm_w: self.lm_w.zeros_like(),
            lm_b: self.lm_b.zeros_like(),
            tag_w: self.tag_w.zeros_like(),
            tag_b: self.tag_b.zeros_like(),
        }
    }

    /// Blocks in checkpoint order, with their names.
    pub fn blocks(&self) -> Vec<(String, &DenseMatrix)> {
        let mut out = vec![("embedding".to_string(), &self.embedding)];
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("encoder.{l}.w_x"), &layer.w_x));
            out.push((format!("encoder.{l}.w_h"), &layer.w_h));
            out.push((format!("encoder.{l}.bias"), &layer.bias));
        }
        out.push(("lm.weight".into(), &self.lm_w));
        out.push(("lm.bias".into(), &self.lm_b));
        out.push(("tag.weight".into(), &self.tag_w));
        out.push(("tag.bias".into(), &self.tag_b));
        out
    }

    /// Mutable blocks in the same order as [`ModelParams::blocks`].
    pub fn blocks_mut(&mut self) -> Vec<&mut DenseMatrix> {
        let mut out = vec![&mut self.embedding];
        for layer in &mut self.layers {
            out.push(&mut layer.w_x);
            out.push(&mut layer.w_h);
            out.push(&mut layer.bias);
        }
        out.push(&mut self.lm_w);
        out.push(&mut self.lm_b);
        out.push(&mut self.tag_w);
        out.push(&mut self.tag_b);
        out
    }

    pub fn round_to_f32(&mut self) {
        for b in self.blocks_mut() {
            b.data_mut().iter_mut().for_each(|x| *x = *x as f32 as f64);
        }
    }

    /// Name of the first block holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<String> {
        self.blocks().into_iter().find(|(_, b)| !b.is_finite()).map(|(n, _)| n)
    }
}

/// Encoder state after consuming `<s>` and `len` real tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub len: usize,
}

impl PrefixState {
    pub fn top(&self) -> &[f64] {
        self.h.last().expect("state has at least one layer")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointModel {
    pub dims: ModelDims,
    pub params: ModelParams,
    pub vocab: Vocabulary,
    pub tags: TagInventory,
    pub seed: u64,
    pub config: TrainConfig,
}

impl JointModel {
    /// Randomly initialized model sized from the inventories and `config`.
    pub fn new(vocab: Vocabulary, tags: TagInventory, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        if tags.is_empty() {
            return Err(Error::Data("tag inventory is empty".into()));
        }
        let dims = ModelDims {
            vocab_size: vocab.len(),
            tag_count: tags.len(),
            embed: config.embed,
            hidden: config.hidden,
            layers: config.layers,
        };
        Ok(JointModel {
            params: ModelParams::init(&dims, config.seed),
            dims,
            vocab,
            tags,
            seed: config.seed,
            config: config.clone(),
        })
    }

    /// Model with every parameter zero; both heads are then uniform.
    pub fn zeroed(vocab: Vocabulary, tags: TagInventory, config: &TrainConfig) -> Result<Self> {
        let mut m = Self::new(vocab, tags, config)?;
        m.params = ModelParams::zeros(&m.dims);
        Ok(m)
    }

    fn check_state(&self, state: &PrefixState) -> Result<()> {
        let ok = state.h.len() == self.dims.layers
            && state.c.len() == self.dims.layers
            && state.h.iter().chain(&state.c).all(|v| v.len() == self.dims.hidden);
        if ok {
            Ok(())
        } else {
            Err(Error::Data(format!(
                "prefix state shape does not match model ({} layers of {})",
                self.dims.layers, self.dims.hidden
            )))
        }
    }

    fn step_from(&self, state: &PrefixState, word: WordId) -> Result<PrefixState> {
        if word >= self.dims.vocab_size {
            return Err(Error::Data(format!("word id {word} outside vocabulary of {}", self.dims.vocab_size)));
        }
        let mut h = Vec::with_capacity(self.dims.layers);
        let mut c = Vec::with_capacity(self.dims.layers);
        let mut x = self.params.embedding.row(word).to_vec();
        for (l, layer) in self.params.layers.iter().enumerate() {
            let (hl, cl) = lstm_step(layer, &x, &state.h[l], &state.c[l]).map_err(|e| layer_error(e, l))?;
            x = hl.clone();
            h.push(hl);
            c.push(cl);
        }
        Ok(PrefixState { h, c, len: state.len })
    }

    /// State after reading only `<s>`.
    pub fn initial_state(&self) -> Result<PrefixState> {
        let zero = PrefixState {
            h: vec![vec![0.0; self.dims.hidden]; self.dims.layers],
            c: vec![vec![0.0; self.dims.hidden]; self.dims.layers],
            len: 0,
        };
        self.step_from(&zero, Vocabulary::BOS_ID)
    }

    pub fn advance(&self, state: &PrefixState, word: WordId) -> Result<PrefixState> {
        self.check_state(state)?;
        let mut next = self.step_from(state, word)?;
        next.len = state.len + 1;
        Ok(next)
    }

    pub fn state_after(&self, words: &[WordId]) -> Result<PrefixState> {
        let mut s = self.initial_state()?;
        for &w in words {
            s = self.advance(&s, w)?;
        }
        Ok(s)
    }

    pub fn lm_logits(&self, state: &PrefixState) -> Result<Vec<f64>> {
        self.check_state(state)?;
        let mut z = self.params.lm_w.matvec(state.top());
        z.iter_mut().zip(self.params.lm_b.data()).for_each(|(a, b)| *a += b);
        Ok(z)
    }

    pub fn tag_logits(&self, state: &PrefixState) -> Result<Vec<f64>> {
        self.check_state(state)?;
        if state.len == 0 {
            return Err(Error::Data(
                "tag posterior needs at least one token; the state has only read <s>".into(),
            ));
        }
        Ok(self.tag_logits_of(state.top()))
    }

    pub(crate) fn tag_logits_of(&self, top: &[f64]) -> Vec<f64> {
        let mut z = self.params.tag_w.matvec(top);
        z.iter_mut().zip(self.params.tag_b.data()).for_each(|(a, b)| *a += b);
        z
    }

    /// P(w_{n+1} | w_1..w_n) over the whole vocabulary.
    pub fn next_word_distribution(&self, state: &PrefixState) -> Result<Vec<f64>> {
        Ok(softmax(&self.lm_logits(state)?))
    }

    /// Distribution over the supertag of the most recently read word.
    pub fn tag_posterior(&self, state: &PrefixState) -> Result<Vec<f64>> {
        Ok(softmax(&self.tag_logits(state)?))
    }
}

pub(crate) fn layer_error(e: Error, layer: usize) -> Error {
    match e {
        Error::NonFinite { block } => Error::NonFinite {
            block: format!("encoder.{layer} ({block})"),
        },
        other => other,
    }
}

/// exp of the mean per-token cross-entropy; `</s>` is a target, `<s>` is not.
pub fn evaluate_perplexity(model: &JointModel, sentences: &[Vec<WordId>]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for s in sentences {
        let mut state = model.initial_state()?;
        for (i, &target) in s.iter().chain(std::iter::once(&Vocabulary::EOS_ID)).enumerate() {
            let (loss, _) = softmax_cross_entropy(&model.lm_logits(&state)?, target)?;
            total += loss;
            count += 1;
            if i < s.len() {
                state = model.advance(&state, target)?;
            }
        }
    }
    if sentences.iter().all(|s| s.is_empty()) {
        return Err(Error::Data("perplexity needs a non-empty corpus".into()));
    }
    Ok((total / count as f64).exp())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Fraction of tokens whose most probable tag is the gold tag.
pub fn evaluate_tag_accuracy(model: &JointModel, corpus: &SupertaggedCorpus) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for s in &corpus.sentences {
        let mut state = model.initial_state()?;
        for (&w, &gold) in s.words.iter().zip(&s.tags) {
            state = model.advance(&state, w)?;
            let pred: TagId = argmax(&model.tag_logits(&state)?);
            correct += usize::from(pred == gold);
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Data("tag accuracy needs a non-empty corpus".into()));
    }
    Ok(correct as f64 / total as f64)
}
