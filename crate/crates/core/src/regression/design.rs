//! Regression rows: lagged surprisal, frequency, length and position
//! predictors for every observed reading time.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Condition, Construction, ExperimentalItem, RtObservation, WordFrequencies};
use crate::error::{Error, Result};
use crate::surprisal::SurprisalRecord;

/// Which surprisal families enter a conversion model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Variant {
    Neither,
    Lexical,
    Syntactic,
    Both,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Neither, Variant::Lexical, Variant::Syntactic, Variant::Both];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Neither => "NEITHER",
            Variant::Lexical => "LEXICAL",
            Variant::Syntactic => "SYNTACTIC",
            Variant::Both => "BOTH",
        }
    }

    pub fn uses_lexical(self) -> bool {
        matches!(self, Variant::Lexical | Variant::Both)
    }

    pub fn uses_syntactic(self) -> bool {
        matches!(self, Variant::Syntactic | Variant::Both)
    }

    /// Indices into [`PREDICTORS`] used as fixed effects.
    pub fn columns(self) -> Vec<usize> {
        let mut cols = Vec::new();
        if self.uses_lexical() {
            cols.extend(0..3);
        }
        if self.uses_syntactic() {
            cols.extend(3..6);
        }
        cols.extend(6..PREDICTORS.len());
        cols
    }

    /// Indices into [`PREDICTORS`] that also get by-item random slopes.
    pub fn surprisal_columns(self) -> Vec<usize> {
        self.columns().into_iter().filter(|&c| c < 6).collect()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Data(format!("unknown model variant {s:?}")))
    }
}

/// Predictor names; suffix is the lag in words.
pub const PREDICTORS: [&str; 16] = [
    "s_lex_0", "s_lex_1", "s_lex_2", "s_syn_0", "s_syn_1", "s_syn_2", "f_0", "f_1", "f_2", "len_0", "len_1", "len_2",
    "f_x_len_0", "f_x_len_1", "f_x_len_2", "pos",
];

/// Columns standardized directly; the interactions are products of the
/// standardized frequency and length columns.
const RAW: [usize; 13] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 15];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

/// Centering and scaling constants estimated on filler rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub columns: Vec<ColumnScale>,
}

impl Standardizer {
    pub fn scale(&self, name: &str) -> Option<&ColumnScale> {
        self.columns.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow {
    pub participant_id: String,
    pub item_id: u32,
    pub construction: Construction,
    pub condition: Condition,
    pub token_index: usize,
    pub rt_ms: f64,
    /// Standardized predictors in [`PREDICTORS`] order.
    pub values: [f64; 16],
    /// Some lag was before the sentence start and was set to 0.
    pub lag_filled: bool,
}

impl DesignRow {
    pub fn is_filler(&self) -> bool {
        self.construction == Construction::Filler
    }

    /// Fixed-effect features of `variant`, intercept excluded.
    pub fn features(&self, variant: Variant) -> Vec<f64> {
        variant.columns().into_iter().map(|c| self.values[c]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub rows: Vec<DesignRow>,
    pub standardizer: Standardizer,
}

impl Design {
    pub fn fillers(&self) -> Vec<DesignRow> {
        self.rows.iter().filter(|r| r.is_filler()).cloned().collect()
    }

    pub fn critical(&self) -> Vec<DesignRow> {
        self.rows.iter().filter(|r| !r.is_filler()).cloned().collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct TokenValues {
    surp_lex: f64,
    surp_syn: f64,
    log_freq: f64,
    length: f64,
}

/// Build one row per reading time. Standardization constants come from the
/// filler rows and are applied unchanged to critical rows; lags that fall
/// before the sentence start are 0 after standardization.
pub fn build_design(
    items: &[ExperimentalItem],
    rts: &[RtObservation],
    records: &[SurprisalRecord],
    freqs: &WordFrequencies,
) -> Result<Design> {
    let mut by_item: HashMap<(u32, Condition), &ExperimentalItem> = HashMap::new();
    for it in items {
        by_item.insert((it.item_id, it.condition), it);
    }
    let mut surp: HashMap<(u32, Condition, usize), &SurprisalRecord> = HashMap::new();
    for r in records {
        let cond = r.condition.unwrap_or(Condition::NotApplicable);
        surp.insert((r.item_id, cond, r.token_index), r);
    }

    let mut token_cache: HashMap<(u32, Condition), Vec<Option<TokenValues>>> = HashMap::new();
    let mut raw_rows = Vec::with_capacity(rts.len());
    for rt in rts {
        let cond = rt.condition.unwrap_or(Condition::NotApplicable);
        let item = by_item.get(&(rt.item_id, cond)).ok_or_else(|| {
            Error::Data(format!("reading time refers to unknown item {} ({cond})", rt.item_id))
        })?;
        if rt.token_index >= item.tokens.len() {
            return Err(Error::Data(format!(
                "reading time for item {} token {} is past the sentence end",
                rt.item_id, rt.token_index
            )));
        }
        let toks = token_cache.entry((rt.item_id, cond)).or_insert_with(|| {
            item.tokens
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    surp.get(&(rt.item_id, cond, i)).map(|r| TokenValues {
                        surp_lex: r.surp_lex,
                        surp_syn: r.surp_syn,
                        log_freq: freqs.log_frequency(w),
                        length: w.chars().count() as f64,
                    })
                })
                .collect()
        });
        let n = rt.token_index;
        let mut raw = [f64::NAN; 16];
        for k in 0..3 {
            if n < k {
                continue;
            }
            let t = toks[n - k].ok_or_else(|| {
                Error::Data(format!(
                    "no surprisal record for item {} ({cond}) token {}",
                    rt.item_id,
                    n - k
                ))
            })?;
            raw[k] = t.surp_lex;
            raw[3 + k] = t.surp_syn;
            raw[6 + k] = t.log_freq;
            raw[9 + k] = t.length;
        }
        raw[15] = n as f64;
        raw_rows.push((rt, item.construction, cond, raw));
    }

    let mut columns = Vec::with_capacity(RAW.len());
    for &c in &RAW {
        let vals: Vec<f64> = raw_rows
            .iter()
            .filter(|r| r.1 == Construction::Filler)
            .map(|r| r.3[c])
            .filter(|v| !v.is_nan())
            .collect();
        if vals.len() < 2 {
            return Err(Error::Data(format!(
                "predictor {} needs at least two filler observations",
                PREDICTORS[c]
            )));
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 0.0) {
            return Err(Error::Data(format!("predictor {} is constant on fillers", PREDICTORS[c])));
        }
        columns.push(ColumnScale {
            name: PREDICTORS[c].to_string(),
            mean,
            sd,
        });
    }
    let standardizer = Standardizer { columns };

    let rows = raw_rows
        .into_iter()
        .map(|(rt, construction, condition, raw)| {
            let mut values = [0.0; 16];
            let mut lag_filled = false;
            for (&c, s) in RAW.iter().zip(&standardizer.columns) {
                if raw[c].is_nan() {
                    lag_filled = true;
                } else {
                    values[c] = (raw[c] - s.mean) / s.sd;
                }
            }
            for k in 0..3 {
                values[12 + k] = values[6 + k] * values[9 + k];
            }
            DesignRow {
                participant_id: rt.participant_id.clone(),
                item_id: rt.item_id,
                construction,
                condition,
                token_index: rt.token_index,
                rt_ms: rt.rt_ms,
                values,
                lag_filled,
            }
        })
        .collect();
    Ok(Design { rows, standardizer })
}
