//! Pearson correlations between surprisal and frequency on filler tokens.

use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::{Condition, WordFrequencies};
use crate::error::{Error, Result};
use crate::surprisal::SurprisalRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub x: String,
    pub y: String,
    pub n: usize,
    pub r: f64,
    pub t: f64,
    /// Two-sided.
    pub p_value: f64,
}

impl Correlation {
    /// Significant at `alpha` (two-sided) with a negative sign.
    pub fn significantly_negative(&self, alpha: f64) -> bool {
        self.r < 0.0 && self.p_value <= alpha
    }
}

/// Pearson r, its t statistic on n - 2 degrees of freedom, and the two-sided p-value.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Data(format!("correlation inputs differ in length: {n} vs {}", y.len())));
    }
    if n < 3 {
        return Err(Error::Data(format!("correlation needs at least 3 points, got {n}")));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(Error::Data("correlation undefined: a variable has zero variance".into()));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let t = if r.abs() == 1.0 {
        r.signum() * f64::INFINITY
    } else {
        r * (df / (1.0 - r * r)).sqrt()
    };
    let p = if t.is_infinite() {
        0.0
    } else {
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numerical(e.to_string()))?;
        (2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0)
    };
    Ok((r, t, p))
}

/// Filler tokens that are words; punctuation-only tokens are skipped.
pub(crate) fn filler_words(records: &[SurprisalRecord]) -> Vec<&SurprisalRecord> {
    records
        .iter()
        .filter(|r| r.condition.unwrap_or(Condition::NotApplicable) == Condition::NotApplicable)
        .filter(|r| r.token.chars().any(char::is_alphanumeric))
        .collect()
}

/// surp_syn against surp_lex and against log frequency, over filler words.
pub fn correlation_report(records: &[SurprisalRecord], freqs: &WordFrequencies) -> Result<Vec<Correlation>> {
    let fillers = filler_words(records);
    let syn: Vec<f64> = fillers.iter().map(|r| r.surp_syn).collect();
    let lex: Vec<f64> = fillers.iter().map(|r| r.surp_lex).collect();
    let freq: Vec<f64> = fillers.iter().map(|r| freqs.log_frequency(&r.token)).collect();
    let mut out = Vec::new();
    for (name, other) in [("surp_lex", &lex), ("log_freq", &freq)] {
        let (r, t, p_value) = pearson(&syn, other)?;
        out.push(Correlation {
            x: "surp_syn".into(),
            y: name.into(),
            n: syn.len(),
            r,
            t,
            p_value,
        });
    }
    Ok(out)
}

pub fn write_correlations_csv(path: &Path, rows: &[Correlation]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["x", "y", "n", "r", "t", "p_value"])?;
    for c in rows {
        w.write_record([
            c.x.clone(),
            c.y.clone(),
            c.n.to_string(),
            c.r.to_string(),
            c.t.to_string(),
            c.p_value.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
