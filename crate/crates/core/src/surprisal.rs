//! Lexical and syntactic surprisal from a frozen [`JointModel`].

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Condition, ExperimentalItem, WordId};
use crate::error::{Error, Result};
use crate::model::{layer_error, JointModel, PrefixState};
use crate::nn::{log_softmax, lstm_gates, softmax, DenseMatrix};

/// Distribution over the next word's supertag, before that word is read.
#[derive(Debug, Clone, PartialEq)]
pub struct TagPrior {
    pub probs: Vec<f64>,
    pub context_len: usize,
    pub k_used: usize,
    /// Next-word probability mass of the candidates, before renormalization.
    pub mass_covered: f64,
}

impl TagPrior {
    pub fn entropy(&self) -> f64 {
        -self.probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurprisalRecord {
    pub item_id: u32,
    pub token_index: usize,
    pub token: String,
    pub surp_lex: f64,
    pub surp_syn: f64,
    pub tag_prior_entropy: f64,
    pub k_used: usize,
    pub oov_flag: bool,
    #[serde(default)]
    pub condition: Option<Condition>,
}

/// Scores for one token of a sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenScore {
    pub token: String,
    pub word: WordId,
    pub oov: bool,
    pub surp_lex: f64,
    pub surp_syn: f64,
    pub prior: TagPrior,
}

/// Surprisal computations over one model.
///
/// Holds the first encoder layer's input projection for every vocabulary
/// word so that advancing a state by each candidate next word costs only the
/// gate arithmetic at that layer. Results are bit-identical to
/// [`JointModel::advance`].
pub struct SurprisalEngine<'m> {
    model: &'m JointModel,
    input_proj: DenseMatrix,
}

impl<'m> SurprisalEngine<'m> {
    pub fn new(model: &'m JointModel) -> Self {
        let layer0 = &model.params.layers[0];
        let mut input_proj = DenseMatrix::zeros(model.dims.vocab_size, 4 * model.dims.hidden);
        for w in 0..model.dims.vocab_size {
            layer0.w_x.matvec_into(model.params.embedding.row(w), input_proj.row_mut(w));
        }
        SurprisalEngine { model, input_proj }
    }

    pub fn model(&self) -> &JointModel {
        self.model
    }

    pub fn lexical_surprisal(&self, state: &PrefixState, next: WordId) -> Result<f64> {
        let lp = log_softmax(&self.model.lm_logits(state)?);
        let s = lp
            .get(next)
            .ok_or_else(|| Error::Data(format!("word id {next} outside vocabulary")))?;
        Ok((-s).max(0.0))
    }

    pub fn next_tag_prior(&self, state: &PrefixState, k: usize) -> Result<TagPrior> {
        let p_next = self.model.next_word_distribution(state)?;
        self.prior_from(state, &p_next, k)
    }

    fn prior_from(&self, state: &PrefixState, p_next: &[f64], k: usize) -> Result<TagPrior> {
        if k < 1 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        let m = self.model;
        let k = k.min(p_next.len());
        let candidates = top_k(p_next, k);
        let mass: f64 = candidates.iter().map(|&w| p_next[w]).sum();

        let zh: Vec<Vec<f64>> = m
            .params
            .layers
            .iter()
            .zip(&state.h)
            .map(|(layer, h)| layer.w_h.matvec(h))
            .collect();
        let mut probs = vec![0.0; m.dims.tag_count];
        for &w in &candidates {
            let mut top = Vec::new();
            for (l, layer) in m.params.layers.iter().enumerate() {
                let zx = if l == 0 {
                    self.input_proj.row(w).to_vec()
                } else {
                    layer.w_x.matvec(&top)
                };
                let (h, _, _) = lstm_gates(layer, &zx, &zh[l], &state.c[l]).map_err(|e| layer_error(e, l))?;
                top = h;
            }
            let post = softmax(&m.tag_logits_of(&top));
            let weight = p_next[w] / mass;
            for (a, b) in probs.iter_mut().zip(&post) {
                *a += weight * b;
            }
        }
        Ok(TagPrior {
            probs,
            context_len: state.len,
            k_used: k,
            mass_covered: mass,
        })
    }

    /// `-ln sum_c prior(c) * posterior(c)`, with `state_after` having read the word.
    pub fn syntactic_surprisal(&self, prior: &TagPrior, state_after: &PrefixState) -> Result<f64> {
        let post = self.model.tag_posterior(state_after)?;
        syntactic_surprisal_from(prior, &post)
    }

    pub fn score_sentence<S: AsRef<str>>(&self, tokens: &[S], k: usize) -> Result<Vec<TokenScore>> {
        if tokens.is_empty() {
            return Err(Error::Data("cannot score an empty sentence".into()));
        }
        let m = self.model;
        let mut state = m.initial_state()?;
        let mut out = Vec::with_capacity(tokens.len());
        for tok in tokens {
            let tok = tok.as_ref();
            let (word, oov) = match m.vocab.get(tok) {
                Some(w) => (w, false),
                None => (crate::corpus::Vocabulary::UNK_ID, true),
            };
            let logits = m.lm_logits(&state)?;
            let p_next = softmax(&logits);
            let prior = self.prior_from(&state, &p_next, k)?;
            let surp_lex = (-log_softmax(&logits)[word]).max(0.0);
            state = m.advance(&state, word)?;
            let surp_syn = self.syntactic_surprisal(&prior, &state)?;
            out.push(TokenScore {
                token: tok.to_string(),
                word,
                oov,
                surp_lex,
                surp_syn,
                prior,
            });
        }
        Ok(out)
    }

    /// Score every item, in input order. Sentences are scored in parallel.
    pub fn score_items(&self, items: &[ExperimentalItem], k: usize) -> Result<Vec<SurprisalRecord>> {
        let per_item: Vec<Result<Vec<SurprisalRecord>>> = items
            .par_iter()
            .map(|item| {
                let scores = self.score_sentence(&item.tokens, k)?;
                Ok(scores
                    .into_iter()
                    .enumerate()
                    .map(|(i, s)| SurprisalRecord {
                        item_id: item.item_id,
                        token_index: i,
                        token: s.token,
                        surp_lex: s.surp_lex,
                        surp_syn: s.surp_syn,
                        tag_prior_entropy: s.prior.entropy(),
                        k_used: s.prior.k_used,
                        oov_flag: s.oov,
                        condition: Some(item.condition),
                    })
                    .collect())
            })
            .collect();
        let mut out = Vec::new();
        for r in per_item {
            out.extend(r?);
        }
        Ok(out)
    }
}

/// Candidate ids with the `k` largest probabilities; ties go to the lower id.
fn top_k(p: &[f64], k: usize) -> Vec<WordId> {
    let mut ids: Vec<WordId> = (0..p.len()).collect();
    if k < p.len() {
        ids.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
        ids.truncate(k);
    }
    ids
}

pub fn syntactic_surprisal_from(prior: &TagPrior, posterior: &[f64]) -> Result<f64> {
    if prior.probs.len() != posterior.len() {
        return Err(Error::Data(format!(
            "tag prior has {} entries but posterior has {}",
            prior.probs.len(),
            posterior.len()
        )));
    }
    let inner: f64 = prior.probs.iter().zip(posterior).map(|(a, b)| a * b).sum();
    if !(inner > 0.0) || !inner.is_finite() {
        return Err(Error::Numerical(format!(
            "tag prior and posterior have no overlap (inner product {inner}); \
             the prior used only the top {} next words, increase k",
            prior.k_used
        )));
    }
    Ok((-inner.ln()).max(0.0))
}

pub fn write_surprisal_csv(path: &Path, records: &[SurprisalRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(SURPRISAL_HEADER)?;
    for r in records {
        w.serialize(SurprisalRow::from(r))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_surprisal_csv(path: &Path) -> Result<Vec<SurprisalRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
        _ => Error::from(e),
    })?;
    let mut out = Vec::new();
    for row in rdr.deserialize::<SurprisalRow>() {
        let row = row?;
        let condition = match row.condition.as_deref() {
            None | Some("") => None,
            Some(c) => Some(c.parse()?),
        };
        out.push(SurprisalRecord {
            item_id: row.item_id,
            token_index: row.token_index,
            token: row.token,
            surp_lex: row.surp_lex,
            surp_syn: row.surp_syn,
            tag_prior_entropy: row.tag_prior_entropy,
            k_used: row.k_used,
            oov_flag: row.oov_flag != 0,
            condition,
        });
    }
    Ok(out)
}

const SURPRISAL_HEADER: [&str; 9] = [
    "item_id",
    "token_index",
    "token",
    "surp_lex",
    "surp_syn",
    "tag_prior_entropy",
    "k_used",
    "oov_flag",
    "condition",
];

#[derive(Serialize, Deserialize)]
struct SurprisalRow {
    item_id: u32,
    token_index: usize,
    token: String,
    surp_lex: f64,
    surp_syn: f64,
    tag_prior_entropy: f64,
    k_used: usize,
    oov_flag: u8,
    #[serde(default)]
    condition: Option<String>,
}

impl From<&SurprisalRecord> for SurprisalRow {
    fn from(r: &SurprisalRecord) -> Self {
        SurprisalRow {
            item_id: r.item_id,
            token_index: r.token_index,
            token: r.token.clone(),
            surp_lex: r.surp_lex,
            surp_syn: r.surp_syn,
            tag_prior_entropy: r.tag_prior_entropy,
            k_used: r.k_used,
            oov_flag: u8::from(r.oov_flag),
            condition: r.condition.map(|c| c.as_str().to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{TagInventory, Vocabulary};
    use crate::model::TrainConfig;

    fn model(words: &[&str], tags: usize, hidden: usize, seed: u64) -> JointModel {
        let vocab = Vocabulary::from_sentences([words], 1);
        let tags = TagInventory::from((0..tags).map(|t| format!("T{t}")).collect::<Vec<_>>());
        let cfg = TrainConfig {
            hidden,
            embed: 4,
            seed,
            ..TrainConfig::default()
        };
        let mut m = JointModel::new(vocab, tags, &cfg).unwrap();
        // Sharpen the randomly initialized heads so the distributions are far from uniform.
        m.params.lm_w.scale(20.0);
        m.params.tag_w.scale(20.0);
        m
    }

    fn brute_force_prior(m: &JointModel, state: &PrefixState) -> Vec<f64> {
        let p = m.next_word_distribution(state).unwrap();
        let mut prior = vec![0.0; m.dims.tag_count];
        for w in 0..m.dims.vocab_size {
            let post = m.tag_posterior(&m.advance(state, w).unwrap()).unwrap();
            for c in 0..prior.len() {
                prior[c] += p[w] * post[c];
            }
        }
        prior
    }

    #[test]
    fn full_k_matches_enumeration() {
        let m = model(&["a", "b", "c", "d", "e"], 4, 6, 2);
        let engine = SurprisalEngine::new(&m);
        let s = m.state_after(&[3, 7, 4]).unwrap();
        let prior = engine.next_tag_prior(&s, m.dims.vocab_size).unwrap();
        for (a, b) in prior.probs.iter().zip(brute_force_prior(&m, &s)) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((prior.mass_covered - 1.0).abs() < 1e-12);
        assert!((prior.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn covered_mass_grows_with_k() {
        let m = model(&["a", "b", "c", "d", "e", "f"], 3, 5, 3);
        let engine = SurprisalEngine::new(&m);
        let s = m.state_after(&[4]).unwrap();
        let mut prev = 0.0;
        for k in 1..=m.dims.vocab_size + 2 {
            let p = engine.next_tag_prior(&s, k).unwrap();
            assert!(p.mass_covered >= prev);
            assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prev = p.mass_covered;
        }
        assert!(engine.next_tag_prior(&s, 0).is_err());
    }

    #[test]
    fn mixture_algebra_two_words() {
        let prior = TagPrior {
            probs: vec![0.75, 0.25],
            context_len: 0,
            k_used: 2,
            mass_covered: 1.0,
        };
        let s = syntactic_surprisal_from(&prior, &[1.0, 0.0]).unwrap();
        assert!((s - (1.0f64 / 0.75).ln()).abs() < 1e-15);
    }

    #[test]
    fn inner_product_cases() {
        let onehot = TagPrior {
            probs: vec![0.0, 1.0, 0.0],
            context_len: 1,
            k_used: 1,
            mass_covered: 0.5,
        };
        assert_eq!(syntactic_surprisal_from(&onehot, &[0.0, 1.0, 0.0]).unwrap(), 0.0);
        let uniform = TagPrior {
            probs: vec![1.0 / 3.0; 3],
            ..onehot.clone()
        };
        assert!((syntactic_surprisal_from(&uniform, &[0.0, 0.0, 1.0]).unwrap() - 3f64.ln()).abs() < 1e-15);
        assert!(matches!(
            syntactic_surprisal_from(&onehot, &[1.0, 0.0, 0.0]),
            Err(Error::Numerical(m)) if m.contains("increase k")
        ));
    }

    #[test]
    fn sentence_scores_are_deterministic_and_nonnegative() {
        let m = model(&["a", "b", "c"], 3, 4, 5);
        let engine = SurprisalEngine::new(&m);
        let toks = ["a", "c", "zzz", "b"];
        let a = engine.score_sentence(&toks, 100).unwrap();
        let b = engine.score_sentence(&toks, 100).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert!(a[2].oov && !a[0].oov);
        for s in &a {
            assert!(s.surp_lex >= 0.0 && s.surp_syn >= 0.0);
        }
        let s0 = m.initial_state().unwrap();
        let p = m.next_word_distribution(&s0).unwrap();
        assert!((a[0].surp_lex + p[m.vocab.id("a")].ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_csv_has_header() {
        let f = tempfile::NamedTempFile::new().unwrap();
        write_surprisal_csv(f.path(), &[]).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        assert_eq!(text.trim(), SURPRISAL_HEADER.join(","));
        assert!(load_surprisal_csv(f.path()).unwrap().is_empty());
    }

    #[test]
    fn csv_round_trip() {
        let rec = SurprisalRecord {
            item_id: 3,
            token_index: 1,
            token: ",".into(),
            surp_lex: 1.25,
            surp_syn: 0.5,
            tag_prior_entropy: 0.1,
            k_used: 9,
            oov_flag: true,
            condition: Some(Condition::Ambiguous),
        };
        let f = tempfile::NamedTempFile::new().unwrap();
        write_surprisal_csv(f.path(), &[rec.clone()]).unwrap();
        assert_eq!(load_surprisal_csv(f.path()).unwrap(), vec![rec]);
    }
}
