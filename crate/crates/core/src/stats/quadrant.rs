//! Median split of filler words on lexical and syntactic surprisal.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::correlation::filler_words;
use super::effects::quantile;
use crate::corpus::WordFrequencies;
use crate::error::{Error, Result};
use crate::surprisal::SurprisalRecord;

/// Exemplars flagged per quadrant.
const EXEMPLARS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Quadrant {
    LowLexLowSyn,
    LowLexHighSyn,
    HighLexLowSyn,
    HighLexHighSyn,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant::LowLexLowSyn,
        Quadrant::LowLexHighSyn,
        Quadrant::HighLexLowSyn,
        Quadrant::HighLexHighSyn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Quadrant::LowLexLowSyn => "LOW_LEX_LOW_SYN",
            Quadrant::LowLexHighSyn => "LOW_LEX_HIGH_SYN",
            Quadrant::HighLexLowSyn => "HIGH_LEX_LOW_SYN",
            Quadrant::HighLexHighSyn => "HIGH_LEX_HIGH_SYN",
        }
    }

    /// "High" means strictly above the median.
    fn of(lex_high: bool, syn_high: bool) -> Self {
        match (lex_high, syn_high) {
            (false, false) => Quadrant::LowLexLowSyn,
            (false, true) => Quadrant::LowLexHighSyn,
            (true, false) => Quadrant::HighLexLowSyn,
            (true, true) => Quadrant::HighLexHighSyn,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrantToken {
    pub item_id: u32,
    pub token_index: usize,
    pub token: String,
    pub surp_lex: f64,
    pub surp_syn: f64,
    pub log_freq: f64,
    pub quadrant: Quadrant,
    pub exemplar: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrantReport {
    pub lex_median: f64,
    pub syn_median: f64,
    pub tokens: Vec<QuadrantToken>,
}

impl QuadrantReport {
    pub fn count(&self, q: Quadrant) -> usize {
        self.tokens.iter().filter(|t| t.quadrant == q).count()
    }
}

/// Bucket filler words by median splits. Exemplars are the tokens furthest
/// into their quadrant (largest smaller distance to either median); tokens
/// on a median are never exemplars.
pub fn quadrant_report(records: &[SurprisalRecord], freqs: &WordFrequencies) -> Result<QuadrantReport> {
    let fillers = filler_words(records);
    if fillers.is_empty() {
        return Ok(QuadrantReport {
            lex_median: f64::NAN,
            syn_median: f64::NAN,
            tokens: Vec::new(),
        });
    }
    let median = |f: fn(&SurprisalRecord) -> f64| {
        let mut v: Vec<f64> = fillers.iter().map(|r| f(r)).collect();
        v.sort_by(f64::total_cmp);
        quantile(&v, 0.5)
    };
    let lex_median = median(|r| r.surp_lex);
    let syn_median = median(|r| r.surp_syn);
    let mut tokens: Vec<QuadrantToken> = fillers
        .iter()
        .map(|r| QuadrantToken {
            item_id: r.item_id,
            token_index: r.token_index,
            token: r.token.clone(),
            surp_lex: r.surp_lex,
            surp_syn: r.surp_syn,
            log_freq: freqs.log_frequency(&r.token),
            quadrant: Quadrant::of(r.surp_lex > lex_median, r.surp_syn > syn_median),
            exemplar: false,
        })
        .collect();
    let depth = |t: &QuadrantToken| (t.surp_lex - lex_median).abs().min((t.surp_syn - syn_median).abs());
    for q in Quadrant::ALL {
        let mut idx: Vec<usize> = (0..tokens.len())
            .filter(|&i| tokens[i].quadrant == q && depth(&tokens[i]) > 0.0)
            .collect();
        idx.sort_by(|&a, &b| depth(&tokens[b]).total_cmp(&depth(&tokens[a])).then(a.cmp(&b)));
        for &i in idx.iter().take(EXEMPLARS) {
            tokens[i].exemplar = true;
        }
    }
    Ok(QuadrantReport {
        lex_median,
        syn_median,
        tokens,
    })
}

pub fn write_scatter_csv(path: &Path, report: &QuadrantReport) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record([
        "item_id",
        "token_index",
        "token",
        "surp_lex",
        "surp_syn",
        "log_freq",
        "quadrant",
        "exemplar",
    ])?;
    for t in &report.tokens {
        w.write_record([
            t.item_id.to_string(),
            t.token_index.to_string(),
            t.token.clone(),
            t.surp_lex.to_string(),
            t.surp_syn.to_string(),
            t.log_freq.to_string(),
            t.quadrant.as_str().to_string(),
            u8::from(t.exemplar).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
