//! The four conversion models: fit on fillers, predict critical items.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::design::{DesignRow, Standardizer, Variant, PREDICTORS};
use super::lmm::{
    fit_lmm, FixedEffect, GroupingFactor, LmmFit, LmmOptions, LmmProblem, RandomEffects, RandomTerm, VarianceComponent,
};
use crate::corpus::Condition;
use crate::error::{Error, Result};

pub const ITEM: &str = "item";
pub const PARTICIPANT: &str = "participant";

/// Fixed-effect names of a variant, intercept first.
pub fn fixed_names(variant: Variant) -> Vec<String> {
    std::iter::once("(Intercept)".to_string())
        .chain(variant.columns().into_iter().map(|c| PREDICTORS[c].to_string()))
        .collect()
}

/// Mixed-model problem for one variant: random intercepts by item and by
/// participant, plus by-item slopes on every surprisal column in the variant.
pub fn conversion_problem(rows: &[DesignRow], variant: Variant) -> LmmProblem {
    let cols = variant.columns();
    let n = rows.len();
    let x = DMatrix::from_fn(n, cols.len() + 1, |i, j| if j == 0 { 1.0 } else { rows[i].values[cols[j - 1]] });
    let items: Vec<String> = rows.iter().map(|r| r.item_id.to_string()).collect();
    let participants: Vec<&str> = rows.iter().map(|r| r.participant_id.as_str()).collect();
    let mut item_terms = vec![RandomTerm::intercept()];
    for c in variant.surprisal_columns() {
        item_terms.push(RandomTerm::slope(PREDICTORS[c], rows.iter().map(|r| r.values[c]).collect()));
    }
    LmmProblem {
        y: rows.iter().map(|r| r.rt_ms).collect(),
        x,
        fixed_names: fixed_names(variant),
        random: vec![
            RandomEffects {
                factor: GroupingFactor::from_labels(ITEM, &items),
                terms: item_terms,
            },
            RandomEffects {
                factor: GroupingFactor::from_labels(PARTICIPANT, &participants),
                terms: vec![RandomTerm::intercept()],
            },
        ],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConversionFit {
    pub variant: Variant,
    pub fit: LmmFit,
}

/// Fit all four variants on filler rows. The fits are independent and run in parallel.
pub fn fit_conversion_suite(filler_rows: &[DesignRow], opts: &LmmOptions) -> Result<Vec<ConversionFit>> {
    if let Some(r) = filler_rows.iter().find(|r| !r.is_filler()) {
        return Err(Error::Data(format!(
            "conversion models are fit on fillers only; item {} is {}",
            r.item_id, r.construction
        )));
    }
    Variant::ALL
        .par_iter()
        .map(|&variant| {
            let fit = fit_lmm(&conversion_problem(filler_rows, variant), opts)?;
            log::info!(
                "{variant}: REML criterion {:.3}, log-likelihood {:.3}, {} iterations",
                fit.reml_criterion,
                fit.log_likelihood,
                fit.iterations
            );
            Ok(ConversionFit { variant, fit })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub participant_id: String,
    pub item_id: u32,
    pub token_index: usize,
    pub variant: Variant,
    pub predicted_rt_ms: f64,
    pub condition: Condition,
    /// Participant absent from the fitting data; no participant offset applied.
    pub population_level: bool,
}

/// Fixed effects plus the participant's conditional mode. Item offsets are 0:
/// critical items are never part of the fitting data.
pub fn predict_rt(fit: &ConversionFit, rows: &[DesignRow]) -> Result<Vec<Prediction>> {
    if !fit.fit.converged {
        return Err(Error::Numerical(format!("{} fit did not converge; refusing to predict", fit.variant)));
    }
    let beta = fit.fit.beta();
    let participants = fit.fit.group(PARTICIPANT);
    let mut unseen = 0;
    let out = rows
        .iter()
        .map(|r| {
            let x = r.features(fit.variant);
            let mut y = beta[0] + x.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>();
            let offset = participants.and_then(|g| g.level(&r.participant_id)).map(|m| m[0]);
            match offset {
                Some(o) => y += o,
                None => unseen += 1,
            }
            Prediction {
                participant_id: r.participant_id.clone(),
                item_id: r.item_id,
                token_index: r.token_index,
                variant: fit.variant,
                predicted_rt_ms: y,
                condition: r.condition,
                population_level: offset.is_none(),
            }
        })
        .collect();
    if unseen > 0 {
        log::warn!("{}: {unseen} rows from participants without filler data use population-level predictions", fit.variant);
    }
    Ok(out)
}

/// Serialized summary of one conversion fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub variant: Variant,
    pub fixed: Vec<FixedEffect>,
    pub variance_components: Vec<VarianceComponent>,
    pub residual_variance: f64,
    pub log_likelihood: f64,
    pub reml_criterion: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n_obs: usize,
    pub standardizer: Standardizer,
}

impl FitSummary {
    pub fn new(fit: &ConversionFit, standardizer: &Standardizer) -> Self {
        FitSummary {
            variant: fit.variant,
            fixed: fit.fit.fixed.clone(),
            variance_components: fit.fit.components.clone(),
            residual_variance: fit.fit.residual_variance,
            log_likelihood: fit.fit.log_likelihood,
            reml_criterion: fit.fit.reml_criterion,
            converged: fit.fit.converged,
            iterations: fit.fit.iterations,
            n_obs: fit.fit.n_obs,
            standardizer: standardizer.clone(),
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

pub const PREDICTION_HEADER: [&str; 7] = [
    "participant_id",
    "item_id",
    "token_index",
    "variant",
    "predicted_rt_ms",
    "condition",
    "population_level",
];

pub fn write_predictions_csv(path: &Path, preds: &[Prediction]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(PREDICTION_HEADER)?;
    for p in preds {
        w.write_record([
            p.participant_id.clone(),
            p.item_id.to_string(),
            p.token_index.to_string(),
            p.variant.to_string(),
            p.predicted_rt_ms.to_string(),
            p.condition.to_string(),
            u8::from(p.population_level).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Deserialize)]
struct PredictionRow {
    participant_id: String,
    item_id: u32,
    token_index: usize,
    variant: String,
    predicted_rt_ms: f64,
    condition: String,
    #[serde(default)]
    population_level: u8,
}

pub fn load_predictions_csv(path: &Path) -> Result<Vec<Prediction>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.deserialize::<PredictionRow>() {
        let row = row?;
        out.push(Prediction {
            participant_id: row.participant_id,
            item_id: row.item_id,
            token_index: row.token_index,
            variant: row.variant.parse()?,
            predicted_rt_ms: row.predicted_rt_ms,
            condition: row.condition.parse()?,
            population_level: row.population_level != 0,
        });
    }
    Ok(out)
}

/// Element-wise mean of prediction sets that cover the same rows in the same order.
pub fn average_predictions(sets: &[Vec<Prediction>]) -> Result<Vec<Prediction>> {
    let Some(first) = sets.first() else {
        return Err(Error::Data("no prediction sets to average".into()));
    };
    let mut out = first.clone();
    for set in &sets[1..] {
        if set.len() != first.len() {
            return Err(Error::Data("prediction sets have different lengths".into()));
        }
        for (o, p) in out.iter_mut().zip(set) {
            let same = o.participant_id == p.participant_id
                && o.item_id == p.item_id
                && o.token_index == p.token_index
                && o.variant == p.variant
                && o.condition == p.condition;
            if !same {
                return Err(Error::Data(format!(
                    "prediction rows disagree: item {} token {} vs item {} token {}",
                    o.item_id, o.token_index, p.item_id, p.token_index
                )));
            }
            o.predicted_rt_ms += p.predicted_rt_ms;
            o.population_level |= p.population_level;
        }
    }
    let k = sets.len() as f64;
    for o in &mut out {
        o.predicted_rt_ms /= k;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Construction;
    use crate::regression::lmm::GroupModes;

    fn row(p: &str, values: [f64; 16]) -> DesignRow {
        DesignRow {
            participant_id: p.into(),
            item_id: 7,
            construction: Construction::Mvrr,
            condition: Condition::Ambiguous,
            token_index: 3,
            rt_ms: 0.0,
            values,
            lag_filled: false,
        }
    }

    fn fake_fit(variant: Variant, beta: &[f64]) -> ConversionFit {
        let names = fixed_names(variant);
        ConversionFit {
            variant,
            fit: LmmFit {
                fixed: names
                    .iter()
                    .zip(beta)
                    .map(|(n, &b)| FixedEffect {
                        name: n.clone(),
                        estimate: b,
                        std_error: 1.0,
                        z_value: b,
                        p_value: 0.5,
                    })
                    .collect(),
                vcov: vec![vec![0.0; beta.len()]; beta.len()],
                components: vec![],
                residual_variance: 1.0,
                modes: vec![GroupModes {
                    group: PARTICIPANT.into(),
                    terms: vec!["(Intercept)".into()],
                    levels: vec!["P1".into(), "P2".into()],
                    modes: vec![vec![12.5], vec![-3.0]],
                }],
                log_likelihood: 0.0,
                reml_criterion: 0.0,
                converged: true,
                iterations: 1,
                criterion_trace: vec![],
                n_obs: 10,
            },
        }
    }

    #[test]
    fn centered_row_predicts_intercept_plus_participant() {
        let mut beta = vec![0.0; 11];
        beta[0] = 350.0;
        beta[3] = 7.0;
        let fit = fake_fit(Variant::Neither, &beta);
        let p = predict_rt(&fit, &[row("P1", [0.0; 16]), row("P9", [0.0; 16])]).unwrap();
        assert_eq!(p[0].predicted_rt_ms, 362.5);
        assert!(!p[0].population_level);
        assert_eq!(p[1].predicted_rt_ms, 350.0);
        assert!(p[1].population_level);
    }

    #[test]
    fn prediction_is_a_dot_product() {
        let beta: Vec<f64> = (0..17).map(|i| 0.5 * i as f64 - 2.0).collect();
        let fit = fake_fit(Variant::Both, &beta);
        let values: [f64; 16] = std::array::from_fn(|i| (i as f64 * 0.37).sin());
        let p = predict_rt(&fit, &[row("P2", values)]).unwrap();
        let mut want = beta[0] - 3.0;
        for (j, c) in Variant::Both.columns().into_iter().enumerate() {
            want += beta[j + 1] * values[c];
        }
        assert!((p[0].predicted_rt_ms - want).abs() < 1e-10);
    }

    #[test]
    fn identical_rows_predict_identically() {
        let fit = fake_fit(Variant::Lexical, &[300.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0, 13.0]);
        let values = [0.3; 16];
        let mut a = row("P1", values);
        let mut b = row("P1", values);
        a.condition = Condition::Ambiguous;
        b.condition = Condition::Unambiguous;
        let p = predict_rt(&fit, &[a, b]).unwrap();
        assert_eq!(p[0].predicted_rt_ms, p[1].predicted_rt_ms);
    }

    #[test]
    fn unconverged_fit_is_refused() {
        let mut fit = fake_fit(Variant::Neither, &[0.0; 11]);
        fit.fit.converged = false;
        assert!(matches!(predict_rt(&fit, &[]), Err(Error::Numerical(_))));
    }

    #[test]
    fn prediction_csv_round_trip_and_average() {
        let mk = |v: f64| Prediction {
            participant_id: "P1".into(),
            item_id: 3,
            token_index: 2,
            variant: Variant::Syntactic,
            predicted_rt_ms: v,
            condition: Condition::Unambiguous,
            population_level: false,
        };
        let f = tempfile::NamedTempFile::new().unwrap();
        write_predictions_csv(f.path(), &[mk(301.25)]).unwrap();
        assert_eq!(load_predictions_csv(f.path()).unwrap(), vec![mk(301.25)]);
        let avg = average_predictions(&[vec![mk(300.0)], vec![mk(310.0)], vec![mk(305.0)]]).unwrap();
        assert_eq!(avg[0].predicted_rt_ms, 305.0);
        let mut other = mk(1.0);
        other.token_index = 9;
        assert!(average_predictions(&[vec![mk(1.0)], vec![other]]).is_err());
    }
}
