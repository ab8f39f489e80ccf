//! Ambiguity x conversion-model interaction contrasts on predicted reading times.
//!
//! Per construction and region the model is
//! `pred_rt ~ ambiguity * model + (1 | item) + (1 | participant)`, with
//! ambiguity coded +-1/2 and the model factor in sliding-difference coding
//! over NEITHER < LEXICAL < SYNTACTIC < BOTH. Each interaction coefficient is
//! then the difference in garden-path effect between adjacent models, in ms.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::effects::Region;
use crate::corpus::{Condition, Construction, ExperimentalItem};
use crate::error::{Error, Result};
use crate::regression::{
    fit_lmm, wald_p_value, GroupingFactor, LmmFit, LmmOptions, LmmProblem, Prediction, RandomEffects, RandomTerm,
    Variant,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Contrast {
    BothVsSyn,
    SynVsLex,
    SynVsNeither,
    LexVsNeither,
}

impl Contrast {
    pub const ALL: [Contrast; 4] = [
        Contrast::BothVsSyn,
        Contrast::SynVsLex,
        Contrast::SynVsNeither,
        Contrast::LexVsNeither,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Contrast::BothVsSyn => "BOTH_VS_SYN",
            Contrast::SynVsLex => "SYN_VS_LEX",
            Contrast::SynVsNeither => "SYN_VS_NEITHER",
            Contrast::LexVsNeither => "LEX_VS_NEITHER",
        }
    }

    /// Weights on the three interaction coefficients (LEX-NEITHER, SYN-LEX, BOTH-SYN).
    fn weights(self) -> [f64; 3] {
        match self {
            Contrast::BothVsSyn => [0.0, 0.0, 1.0],
            Contrast::SynVsLex => [0.0, 1.0, 0.0],
            Contrast::SynVsNeither => [1.0, 1.0, 0.0],
            Contrast::LexVsNeither => [1.0, 0.0, 0.0],
        }
    }
}

impl fmt::Display for Contrast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastResult {
    pub construction: Construction,
    pub region: Region,
    pub contrast: Contrast,
    pub beta: f64,
    pub std_error: f64,
    pub p_value: f64,
}

/// Sliding-difference codes for NEITHER, LEXICAL, SYNTACTIC, BOTH.
const SLIDING: [[f64; 3]; 4] = [
    [-0.75, -0.5, -0.25],
    [0.25, -0.5, -0.25],
    [0.25, 0.5, -0.25],
    [0.25, 0.5, 0.75],
];

const COLUMNS: [&str; 8] = [
    "(Intercept)",
    "ambiguity",
    "model_lex_neither",
    "model_syn_lex",
    "model_both_syn",
    "ambiguity:model_lex_neither",
    "ambiguity:model_syn_lex",
    "ambiguity:model_both_syn",
];

fn variant_level(v: Variant) -> usize {
    match v {
        Variant::Neither => 0,
        Variant::Lexical => 1,
        Variant::Syntactic => 2,
        Variant::Both => 3,
    }
}

/// Fit the interaction model for one construction and region.
pub fn fit_interaction_model(
    predictions: &[Prediction],
    items: &[ExperimentalItem],
    construction: Construction,
    region: Region,
    opts: &LmmOptions,
) -> Result<LmmFit> {
    let mut target: HashMap<(u32, Condition), usize> = HashMap::new();
    for it in items.iter().filter(|i| i.construction == construction) {
        if let Some(t) = region.token_index(it) {
            target.insert((it.item_id, it.condition), t);
        }
    }
    let rows: Vec<&Prediction> = predictions
        .iter()
        .filter(|p| target.get(&(p.item_id, p.condition)) == Some(&p.token_index))
        .collect();
    for v in Variant::ALL {
        if !rows.iter().any(|p| p.variant == v) {
            return Err(Error::Data(format!("{construction} {region}: no {v} predictions")));
        }
    }
    let n = rows.len();
    let x = DMatrix::from_fn(n, 8, |i, j| {
        let p = rows[i];
        let amb = if p.condition == Condition::Ambiguous { 0.5 } else { -0.5 };
        let m = SLIDING[variant_level(p.variant)];
        match j {
            0 => 1.0,
            1 => amb,
            2..=4 => m[j - 2],
            _ => amb * m[j - 5],
        }
    });
    let item_labels: Vec<String> = rows.iter().map(|p| p.item_id.to_string()).collect();
    let participants: Vec<&str> = rows.iter().map(|p| p.participant_id.as_str()).collect();
    let problem = LmmProblem {
        y: rows.iter().map(|p| p.predicted_rt_ms).collect(),
        x,
        fixed_names: COLUMNS.iter().map(|s| s.to_string()).collect(),
        random: vec![
            RandomEffects {
                factor: GroupingFactor::from_labels("item", &item_labels),
                terms: vec![RandomTerm::intercept()],
            },
            RandomEffects {
                factor: GroupingFactor::from_labels("participant", &participants),
                terms: vec![RandomTerm::intercept()],
            },
        ],
    };
    fit_lmm(&problem, opts)
}

/// All four contrasts for every construction and region present.
pub fn interaction_contrasts(
    predictions: &[Prediction],
    items: &[ExperimentalItem],
    regions: &[Region],
    opts: &LmmOptions,
) -> Result<Vec<ContrastResult>> {
    let mut out = Vec::new();
    for c in Construction::CRITICAL {
        if !items.iter().any(|i| i.construction == c) {
            continue;
        }
        for &region in regions {
            let fit = fit_interaction_model(predictions, items, c, region, opts)?;
            for contrast in Contrast::ALL {
                let mut w = [0.0; 8];
                w[5..].copy_from_slice(&contrast.weights());
                let beta: f64 = w.iter().zip(&fit.fixed).map(|(a, f)| a * f.estimate).sum();
                let std_error = fit.linear_combination_se(&w);
                let p_value = if std_error > 0.0 {
                    wald_p_value(beta / std_error)
                } else if beta == 0.0 {
                    1.0
                } else {
                    0.0
                };
                out.push(ContrastResult {
                    construction: c,
                    region,
                    contrast,
                    beta,
                    std_error,
                    p_value,
                });
            }
        }
    }
    Ok(out)
}

pub fn write_contrasts_csv(path: &Path, rows: &[ContrastResult]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["construction", "region", "contrast", "beta", "std_error", "p_value"])?;
    for r in rows {
        w.write_record([
            r.construction.to_string(),
            r.region.to_string(),
            r.contrast.to_string(),
            r.beta.to_string(),
            r.std_error.to_string(),
            r.p_value.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{synthetic_contrast_data, SyntheticContrastConfig};

    #[test]
    fn sliding_codes_give_adjacent_differences() {
        // Solve for cell means mu = b0 + codes . c: the c recover successive differences.
        let mu = [10.0, 13.0, 19.0, 20.0];
        let x = DMatrix::from_fn(4, 4, |i, j| if j == 0 { 1.0 } else { SLIDING[i][j - 1] });
        let b = x.lu().solve(&nalgebra::DVector::from_column_slice(&mu)).unwrap();
        assert!((b[1] - 3.0).abs() < 1e-12);
        assert!((b[2] - 6.0).abs() < 1e-12);
        assert!((b[3] - 1.0).abs() < 1e-12);
        assert!((b[0] - 15.5).abs() < 1e-12);
    }

    #[test]
    fn identical_variants_have_zero_interaction() {
        let cfg = SyntheticContrastConfig {
            effects: [20.0, 20.0, 20.0, 20.0],
            ..SyntheticContrastConfig::default()
        };
        let (items, mut preds) = synthetic_contrast_data(&cfg, 3);
        // Make every variant's predictions identical, row for row.
        let base: HashMap<(String, u32, usize), f64> = preds
            .iter()
            .filter(|p| p.variant == Variant::Neither)
            .map(|p| ((p.participant_id.clone(), p.item_id, p.token_index), p.predicted_rt_ms))
            .collect();
        for p in &mut preds {
            p.predicted_rt_ms = base[&(p.participant_id.clone(), p.item_id, p.token_index)];
        }
        let res = interaction_contrasts(&preds, &items, &[Region::Disambig], &LmmOptions::default()).unwrap();
        for r in res {
            assert!(r.beta.abs() < 1e-8, "{} {}", r.contrast, r.beta);
        }
    }

    #[test]
    fn planted_interaction_is_recovered() {
        let cfg = SyntheticContrastConfig::default();
        let (items, preds) = synthetic_contrast_data(&cfg, 11);
        let res = interaction_contrasts(&preds, &items, &[Region::Disambig], &LmmOptions::default()).unwrap();
        let planted = |c: Contrast| {
            let e = cfg.effects;
            match c {
                Contrast::BothVsSyn => e[3] - e[2],
                Contrast::SynVsLex => e[2] - e[1],
                Contrast::SynVsNeither => e[2] - e[0],
                Contrast::LexVsNeither => e[1] - e[0],
            }
        };
        for r in res.iter().filter(|r| r.construction == Construction::Mvrr) {
            assert!((r.beta - planted(r.contrast)).abs() < 3.0 * r.std_error, "{r:?}");
            assert!((0.0..=1.0).contains(&r.p_value));
        }
    }

    #[test]
    fn missing_variant_is_an_error() {
        let (items, preds) = synthetic_contrast_data(&SyntheticContrastConfig::default(), 1);
        let preds: Vec<_> = preds.into_iter().filter(|p| p.variant != Variant::Both).collect();
        assert!(matches!(
            interaction_contrasts(&preds, &items, &[Region::Disambig], &LmmOptions::default()),
            Err(Error::Data(m)) if m.contains("BOTH")
        ));
    }
}
