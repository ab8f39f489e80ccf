use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{layer_error, JointModel, ModelParams};
use crate::corpus::{SupertaggedCorpus, TagId, Vocabulary, WordId};
use crate::error::{Error, Result};
use crate::nn::{clip_global_norm, lstm_step_backward, lstm_step_cached, softmax_cross_entropy, Adam, AdamConfig, LstmStep};

/// Losses of one minibatch, in nats per token.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchLoss {
    pub lm: f64,
    /// Absent for batches drawn from untagged text.
    pub tag: Option<f64>,
    pub total: f64,
    pub lm_tokens: usize,
    pub tag_tokens: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub lm: f64,
    pub tag: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLoss>,
    pub steps: Vec<BatchLoss>,
}

/// A sentence's word ids and, for supertagged text, its tag ids.
pub type Example<'a> = (&'a [WordId], Option<&'a [TagId]>);

/// Batch losses computed through the public inference path only.
pub fn batch_loss(model: &JointModel, batch: &[Example<'_>]) -> Result<BatchLoss> {
    let (mut lm_sum, mut lm_n, mut tag_sum, mut tag_n) = (0.0, 0usize, 0.0, 0usize);
    for &(words, tags) in batch {
        let mut state = model.initial_state()?;
        for t in 0..=words.len() {
            let target = words.get(t).copied().unwrap_or(Vocabulary::EOS_ID);
            let p = model.next_word_distribution(&state)?;
            lm_sum -= p[target].ln();
            lm_n += 1;
            if t < words.len() {
                state = model.advance(&state, target)?;
                if let Some(tags) = tags {
                    tag_sum -= model.tag_posterior(&state)?[tags[t]].ln();
                    tag_n += 1;
                }
            }
        }
    }
    Ok(combine(lm_sum, lm_n, tag_sum, tag_n, model.config.tag_weight))
}

fn combine(lm_sum: f64, lm_n: usize, tag_sum: f64, tag_n: usize, tag_weight: f64) -> BatchLoss {
    let lm = lm_sum / lm_n.max(1) as f64;
    let tag = (tag_n > 0).then(|| tag_sum / tag_n as f64);
    BatchLoss {
        lm,
        tag,
        total: lm + tag_weight * tag.unwrap_or(0.0),
        lm_tokens: lm_n,
        tag_tokens: tag_n,
    }
}

/// Loss and mean-loss gradient of a batch by backpropagation through time.
pub fn batch_gradient(model: &JointModel, batch: &[Example<'_>]) -> Result<(BatchLoss, ModelParams)> {
    let mut grads = model.params.zeros_like();
    let loss = forward_backward(model, batch, &mut grads)?;
    Ok((loss, grads))
}

struct SentenceTrace {
    steps: Vec<Vec<LstmStep>>,
}

/// Forward and backward over a batch, accumulating mean-loss gradients.
fn forward_backward(model: &JointModel, batch: &[Example<'_>], grads: &mut ModelParams) -> Result<BatchLoss> {
    let lm_n: usize = batch.iter().map(|(w, _)| w.len() + 1).sum();
    let tag_n: usize = batch.iter().filter(|(_, t)| t.is_some()).map(|(w, _)| w.len()).sum();
    let lm_scale = 1.0 / lm_n.max(1) as f64;
    let tag_scale = if tag_n > 0 { model.config.tag_weight / tag_n as f64 } else { 0.0 };
    let p = &model.params;
    let hidden = model.dims.hidden;
    let (mut lm_sum, mut tag_sum) = (0.0, 0.0);

    for &(words, tags) in batch {
        let n = words.len();
        let inputs: Vec<WordId> = std::iter::once(Vocabulary::BOS_ID).chain(words.iter().copied()).collect();
        let mut trace = SentenceTrace { steps: Vec::with_capacity(n + 1) };
        let mut h: Vec<Vec<f64>> = vec![vec![0.0; hidden]; model.dims.layers];
        let mut c = h.clone();
        let mut dh_top: Vec<Vec<f64>> = Vec::with_capacity(n + 1);

        for (t, &w) in inputs.iter().enumerate() {
            let mut x = p.embedding.row(w).to_vec();
            let mut layer_steps = Vec::with_capacity(model.dims.layers);
            for (l, layer) in p.layers.iter().enumerate() {
                let step = lstm_step_cached(layer, &x, &h[l], &c[l]).map_err(|e| layer_error(e, l))?;
                h[l] = step.h.clone();
                c[l] = step.c.clone();
                x = step.h.clone();
                layer_steps.push(step);
            }
            let top = &x;
            let target = words.get(t).copied().unwrap_or(Vocabulary::EOS_ID);
            let (loss, mut dz) = softmax_cross_entropy(&model.lm_logits_of(top), target)?;
            lm_sum += loss;
            dz.iter_mut().for_each(|g| *g *= lm_scale);
            grads.lm_w.add_outer(&dz, top);
            grads.lm_b.data_mut().iter_mut().zip(&dz).for_each(|(b, g)| *b += g);
            let mut dh = vec![0.0; hidden];
            p.lm_w.matvec_t_acc(&dz, &mut dh);
            if let (Some(tags), true) = (tags, t >= 1) {
                let (loss, mut dq) = softmax_cross_entropy(&model.tag_logits_of(top), tags[t - 1])?;
                tag_sum += loss;
                dq.iter_mut().for_each(|g| *g *= tag_scale);
                grads.tag_w.add_outer(&dq, top);
                grads.tag_b.data_mut().iter_mut().zip(&dq).for_each(|(b, g)| *b += g);
                p.tag_w.matvec_t_acc(&dq, &mut dh);
            }
            dh_top.push(dh);
            trace.steps.push(layer_steps);
        }

        let mut dh_next: Vec<Vec<f64>> = vec![vec![0.0; hidden]; model.dims.layers];
        let mut dc_next = dh_next.clone();
        for t in (0..inputs.len()).rev() {
            let mut above = std::mem::take(&mut dh_top[t]);
            for l in (0..model.dims.layers).rev() {
                let layer = &p.layers[l];
                let dh: Vec<f64> = above.iter().zip(&dh_next[l]).map(|(a, b)| a + b).collect();
                let mut dx = vec![0.0; layer.input()];
                let (dhp, dcp) = lstm_step_backward(layer, &trace.steps[t][l], &dh, &dc_next[l], &mut grads.layers[l], &mut dx);
                dh_next[l] = dhp;
                dc_next[l] = dcp;
                above = dx;
            }
            grads
                .embedding
                .row_mut(inputs[t])
                .iter_mut()
                .zip(&above)
                .for_each(|(g, d)| *g += d);
        }
    }
    Ok(combine(lm_sum, lm_n, tag_sum, tag_n, model.config.tag_weight))
}

impl JointModel {
    pub(crate) fn lm_logits_of(&self, top: &[f64]) -> Vec<f64> {
        let mut z = self.params.lm_w.matvec(top);
        z.iter_mut().zip(self.params.lm_b.data()).for_each(|(a, b)| *a += b);
        z
    }
}

fn check_inputs(model: &JointModel, lm: &[Vec<WordId>], tagged: &SupertaggedCorpus) -> Result<()> {
    if tagged.word_counts.len() != model.dims.vocab_size || tagged.tag_counts.len() != model.dims.tag_count {
        return Err(Error::Data(
            "supertagged corpus was encoded with different inventories than the model".into(),
        ));
    }
    let max_len = model.config.max_len;
    for s in lm.iter().chain(tagged.sentences.iter().map(|s| &s.words)) {
        if s.len() > max_len {
            return Err(Error::Data(format!("training sentence of {} tokens exceeds max_len {max_len}", s.len())));
        }
        if let Some(&w) = s.iter().find(|&&w| w >= model.dims.vocab_size) {
            return Err(Error::Data(format!("word id {w} outside vocabulary")));
        }
    }
    if lm.iter().all(|s| s.is_empty()) && tagged.sentences.iter().all(|s| s.words.is_empty()) {
        return Err(Error::Data("training corpora are empty".into()));
    }
    Ok(())
}

/// Train both heads jointly with Adam.
///
/// Plain sentences contribute only the next-word loss; supertagged sentences
/// contribute both. The two kinds are batched separately and the batches
/// interleaved in a seeded random order each epoch. If a loss or gradient
/// turns non-finite the parameters are reset to the end of the last
/// completed epoch and [`Error::Diverged`] is returned.
pub fn train(model: &mut JointModel, lm: &[Vec<WordId>], tagged: &SupertaggedCorpus) -> Result<TrainReport> {
    check_inputs(model, lm, tagged)?;
    let cfg = model.config.clone();
    let sizes: Vec<usize> = model.params.blocks().iter().map(|(_, b)| b.data().len()).collect();
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        &sizes,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_7a1c);
    let mut report = TrainReport::default();
    let mut last_good = model.params.clone();

    let examples: Vec<Example<'_>> = tagged
        .sentences
        .iter()
        .map(|s| (s.words.as_slice(), Some(s.tags.as_slice())))
        .chain(lm.iter().map(|s| (s.as_slice(), None)))
        .collect();
    let tagged_idx: Vec<usize> = (0..tagged.sentences.len()).collect();
    let plain_idx: Vec<usize> = (tagged.sentences.len()..examples.len()).collect();

    for epoch in 0..cfg.epochs {
        let mut batches: Vec<Vec<usize>> = Vec::new();
        for group in [&tagged_idx, &plain_idx] {
            let mut order = group.clone();
            order.shuffle(&mut rng);
            batches.extend(order.chunks(cfg.batch_size).map(<[usize]>::to_vec));
        }
        batches.shuffle(&mut rng);

        let (mut lm_sum, mut lm_n, mut tag_sum, mut tag_n) = (0.0, 0usize, 0.0, 0usize);
        for (step, idx) in batches.iter().enumerate() {
            let batch: Vec<Example<'_>> = idx.iter().map(|&i| examples[i]).collect();
            let mut grads = model.params.zeros_like();
            let loss = forward_backward(model, &batch, &mut grads);
            let diverged = match &loss {
                Ok(l) => !l.total.is_finite() || grads.first_non_finite().is_some(),
                Err(Error::NonFinite { .. }) => true,
                Err(_) => false,
            };
            if diverged {
                model.params = last_good;
                log::error!("training diverged at epoch {epoch}, step {step}; restored parameters from the last completed epoch");
                return Err(Error::Diverged { epoch, step });
            }
            let loss = loss?;
            lm_sum += loss.lm * loss.lm_tokens as f64;
            lm_n += loss.lm_tokens;
            if let Some(t) = loss.tag {
                tag_sum += t * loss.tag_tokens as f64;
                tag_n += loss.tag_tokens;
            }
            report.steps.push(loss);

            let mut gblocks = grads.blocks_mut();
            clip_global_norm(&mut gblocks, cfg.clip);
            let grefs: Vec<&_> = gblocks.iter().map(|g| &**g).collect();
            adam.step(&mut model.params.blocks_mut(), &grefs);
        }
        if let Some(block) = model.params.first_non_finite() {
            model.params = last_good;
            log::error!("parameter block {block} became non-finite in epoch {epoch}");
            return Err(Error::Diverged {
                epoch,
                step: batches.len(),
            });
        }
        last_good = model.params.clone();
        let lm_mean = lm_sum / lm_n.max(1) as f64;
        let tag_mean = if tag_n > 0 { tag_sum / tag_n as f64 } else { 0.0 };
        let e = EpochLoss {
            epoch,
            lm: lm_mean,
            tag: tag_mean,
            total: lm_mean + cfg.tag_weight * tag_mean,
        };
        log::info!("epoch {epoch}: lm {:.4} tag {:.4} total {:.4}", e.lm, e.tag, e.total);
        report.epochs.push(e);
    }
    model.params.round_to_f32();
    Ok(report)
}
