//! Regression-ready synthetic data with known generating parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{Condition, Construction, ExperimentalItem};
use crate::regression::{DesignRow, Prediction, Variant};

/// Filler reading times generated from the full conversion model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFillerConfig {
    pub participants: usize,
    pub items: usize,
    pub tokens_per_item: usize,
    /// Intercept followed by one coefficient per predictor column.
    pub beta: [f64; 17],
    pub participant_sd: f64,
    pub item_sd: f64,
    /// SD of the by-item slope on each of the six surprisal columns.
    pub slope_sd: f64,
    pub noise_sd: f64,
}

impl Default for SyntheticFillerConfig {
    fn default() -> Self {
        SyntheticFillerConfig {
            participants: 200,
            items: 40,
            tokens_per_item: 5,
            beta: [
                350.0, 10.0, 5.0, 2.0, 14.0, 7.0, 3.0, -4.0, -2.0, -1.0, 3.0, 1.0, 0.5, 1.0, 0.5, 0.2, -2.0,
            ],
            participant_sd: 30.0,
            item_sd: 12.0,
            slope_sd: 3.0,
            noise_sd: 30.0,
        }
    }
}

/// Every participant reads every item. Token predictors are standard normal
/// per item token; lags follow the sentence and are 0 before its start.
pub fn synthetic_filler_rows(cfg: &SyntheticFillerConfig, seed: u64) -> Vec<DesignRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = move || -> f64 { rng.sample(StandardNormal) };
    let t = cfg.tokens_per_item;
    let mut items = Vec::with_capacity(cfg.items);
    for _ in 0..cfg.items {
        let base: Vec<[f64; 4]> = (0..t).map(|_| [z(), z(), z(), z()]).collect();
        let rows: Vec<[f64; 16]> = (0..t)
            .map(|n| {
                let mut v = [0.0; 16];
                for k in 0..3 {
                    if n >= k {
                        let b = base[n - k];
                        v[k] = b[0];
                        v[3 + k] = b[1];
                        v[6 + k] = b[2];
                        v[9 + k] = b[3];
                        v[12 + k] = b[2] * b[3];
                    }
                }
                v[15] = if t > 1 { (n as f64 - (t - 1) as f64 / 2.0) / (t as f64 / 2.0) } else { 0.0 };
                v
            })
            .collect();
        let offset = cfg.item_sd * z();
        let slopes: [f64; 6] = std::array::from_fn(|_| cfg.slope_sd * z());
        items.push((rows, offset, slopes));
    }
    let participants: Vec<f64> = (0..cfg.participants).map(|_| cfg.participant_sd * z()).collect();

    let mut out = Vec::with_capacity(cfg.participants * cfg.items * t);
    for (p, p_off) in participants.iter().enumerate() {
        for (i, (rows, i_off, slopes)) in items.iter().enumerate() {
            for (n, v) in rows.iter().enumerate() {
                let mut y = cfg.beta[0] + p_off + i_off + cfg.noise_sd * z();
                for c in 0..16 {
                    y += cfg.beta[c + 1] * v[c];
                }
                for c in 0..6 {
                    y += slopes[c] * v[c];
                }
                out.push(DesignRow {
                    participant_id: format!("S{:03}", p + 1),
                    item_id: i as u32 + 1,
                    construction: Construction::Filler,
                    condition: Condition::NotApplicable,
                    token_index: n,
                    rt_ms: y,
                    values: *v,
                    lag_filled: n < 2,
                });
            }
        }
    }
    out
}

/// Predicted reading times for paired critical items whose garden-path
/// effect at the disambiguating word differs by conversion model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticContrastConfig {
    pub participants: usize,
    pub items_per_construction: usize,
    pub tokens: usize,
    /// Garden-path effect (ms) of NEITHER, LEXICAL, SYNTACTIC, BOTH.
    pub effects: [f64; 4],
    /// Condition-independent offset (ms) of each model.
    pub model_offsets: [f64; 4],
    pub baseline_ms: f64,
    pub participant_sd: f64,
    pub item_sd: f64,
    pub noise_sd: f64,
}

impl Default for SyntheticContrastConfig {
    fn default() -> Self {
        SyntheticContrastConfig {
            participants: 40,
            items_per_construction: 24,
            tokens: 8,
            effects: [6.0, 9.0, 14.0, 19.0],
            model_offsets: [0.0, -4.0, 3.0, -1.0],
            baseline_ms: 350.0,
            participant_sd: 30.0,
            item_sd: 15.0,
            noise_sd: 10.0,
        }
    }
}

/// Items for all three constructions plus predictions from all four models.
/// The disambiguating word sits at index 3 (ambiguous) or 4 (unambiguous);
/// each participant reads one member of each pair.
pub fn synthetic_contrast_data(cfg: &SyntheticContrastConfig, seed: u64) -> (Vec<ExperimentalItem>, Vec<Prediction>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = move || -> f64 { rng.sample(StandardNormal) };
    let mut items = Vec::new();
    let mut item_offsets = Vec::new();
    let mut id = 0;
    for c in Construction::CRITICAL {
        for _ in 0..cfg.items_per_construction {
            id += 1;
            for (cond, d) in [(Condition::Ambiguous, 3), (Condition::Unambiguous, 4)] {
                let toks = (0..cfg.tokens).map(|i| format!("w{i}")).collect();
                items.push(ExperimentalItem::new(id, c, cond, toks, Some(d)).expect("valid synthetic item"));
            }
            item_offsets.push(cfg.item_sd * z());
        }
    }
    let participants: Vec<f64> = (0..cfg.participants).map(|_| cfg.participant_sd * z()).collect();
    let mut preds = Vec::new();
    for (p, p_off) in participants.iter().enumerate() {
        for it in &items {
            let amb = it.condition == Condition::Ambiguous;
            if ((p + it.item_id as usize) % 2 == 0) != amb {
                continue;
            }
            let d = it.disambig_index.unwrap();
            for n in 0..it.tokens.len() {
                for (v, variant) in Variant::ALL.into_iter().enumerate() {
                    let mut y = cfg.baseline_ms + p_off + item_offsets[it.item_id as usize - 1] + cfg.model_offsets[v];
                    if amb && n == d {
                        y += cfg.effects[v];
                    }
                    y += cfg.noise_sd * z();
                    preds.push(Prediction {
                        participant_id: format!("S{:03}", p + 1),
                        item_id: it.item_id,
                        token_index: n,
                        variant,
                        predicted_rt_ms: y,
                        condition: it.condition,
                        population_level: false,
                    });
                }
            }
        }
    }
    (items, preds)
}
