//! Garden-path effects (ambiguous minus unambiguous means) and cluster
//! bootstrap intervals.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Condition, Construction, ExperimentalItem, RtObservation};
use crate::error::{Error, Result};
use crate::regression::{Prediction, Variant};
use crate::surprisal::SurprisalRecord;

pub const DEFAULT_RESAMPLES: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Region {
    Pre,
    Disambig,
    Spill1,
    Spill2,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::Pre, Region::Disambig, Region::Spill1, Region::Spill2];

    pub fn as_str(self) -> &'static str {
        match self {
            Region::Pre => "PRE",
            Region::Disambig => "DISAMBIG",
            Region::Spill1 => "SPILL1",
            Region::Spill2 => "SPILL2",
        }
    }

    /// Token index of this region in `item`, if it has one.
    pub fn token_index(self, item: &ExperimentalItem) -> Option<usize> {
        let d = item.disambig_index?;
        match self {
            Region::Pre => d.checked_sub(1),
            Region::Disambig => Some(d),
            Region::Spill1 => item.spillover_indices.first().copied(),
            Region::Spill2 => item.spillover_indices.get(1).copied(),
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Region {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Region::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Data(format!("unknown region {s:?}")))
    }
}

/// Where a reading time came from: the (synthetic) humans or a conversion model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "HUMAN")]
    Human,
    #[serde(untagged)]
    Model(Variant),
}

impl Source {
    pub const ALL: [Source; 5] = [
        Source::Human,
        Source::Model(Variant::Neither),
        Source::Model(Variant::Lexical),
        Source::Model(Variant::Syntactic),
        Source::Model(Variant::Both),
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Human => "HUMAN",
            Source::Model(v) => v.as_str(),
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One reading-time-like value: observed or predicted.
#[derive(Debug, Clone, PartialEq)]
pub struct Reading {
    pub participant_id: String,
    pub item_id: u32,
    pub condition: Condition,
    pub token_index: usize,
    pub value: f64,
}

impl From<&RtObservation> for Reading {
    fn from(r: &RtObservation) -> Self {
        Reading {
            participant_id: r.participant_id.clone(),
            item_id: r.item_id,
            condition: r.condition.unwrap_or(Condition::NotApplicable),
            token_index: r.token_index,
            value: r.rt_ms,
        }
    }
}

impl From<&Prediction> for Reading {
    fn from(p: &Prediction) -> Self {
        Reading {
            participant_id: p.participant_id.clone(),
            item_id: p.item_id,
            condition: p.condition,
            token_index: p.token_index,
            value: p.predicted_rt_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub construction: Construction,
    pub region: Region,
    pub source: Source,
    pub effect_ms: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_resamples: usize,
}

/// Per-cluster sums for a difference of condition means.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ConditionSums {
    pub amb_sum: f64,
    pub amb_n: usize,
    pub unamb_sum: f64,
    pub unamb_n: usize,
}

impl ConditionSums {
    fn add(&mut self, condition: Condition, v: f64) {
        match condition {
            Condition::Ambiguous => {
                self.amb_sum += v;
                self.amb_n += 1;
            }
            Condition::Unambiguous => {
                self.unamb_sum += v;
                self.unamb_n += 1;
            }
            Condition::NotApplicable => {}
        }
    }

    /// Ambiguous mean minus unambiguous mean over the pooled clusters.
    pub fn difference<'a, I: IntoIterator<Item = &'a ConditionSums>>(clusters: I) -> f64 {
        let mut t = ConditionSums::default();
        for c in clusters {
            t.amb_sum += c.amb_sum;
            t.amb_n += c.amb_n;
            t.unamb_sum += c.unamb_sum;
            t.unamb_n += c.unamb_n;
        }
        t.amb_sum / t.amb_n as f64 - t.unamb_sum / t.unamb_n as f64
    }
}

fn check_pairs(items: &[&ExperimentalItem]) -> Result<()> {
    let mut seen: HashMap<u32, (bool, bool)> = HashMap::new();
    for it in items {
        let e = seen.entry(it.item_id).or_default();
        match it.condition {
            Condition::Ambiguous => e.0 = true,
            Condition::Unambiguous => e.1 = true,
            Condition::NotApplicable => {}
        }
    }
    match seen.into_iter().filter(|(_, (a, u))| !(*a && *u)).map(|(id, _)| id).min() {
        Some(id) => Err(Error::Data(format!("item {id} is missing one of its two conditions"))),
        None => Ok(()),
    }
}

/// Region readings of one construction, summed per participant (in id order).
pub fn region_sums(
    readings: &[Reading],
    items: &[ExperimentalItem],
    construction: Construction,
    region: Region,
) -> Result<Vec<(String, ConditionSums)>> {
    let members: Vec<&ExperimentalItem> = items.iter().filter(|i| i.construction == construction).collect();
    check_pairs(&members)?;
    let mut target: HashMap<(u32, Condition), usize> = HashMap::new();
    for it in &members {
        if let Some(t) = region.token_index(it) {
            target.insert((it.item_id, it.condition), t);
        }
    }
    let mut per: BTreeMap<&str, ConditionSums> = BTreeMap::new();
    for r in readings {
        if target.get(&(r.item_id, r.condition)) == Some(&r.token_index) {
            per.entry(&r.participant_id).or_default().add(r.condition, r.value);
        }
    }
    Ok(per.into_iter().map(|(p, s)| (p.to_string(), s)).collect())
}

/// Mean ambiguous minus mean unambiguous reading at `region`, per construction present in `items`.
pub fn garden_path_effect(
    readings: &[Reading],
    items: &[ExperimentalItem],
    region: Region,
) -> Result<Vec<(Construction, f64)>> {
    let mut out = Vec::new();
    for c in Construction::CRITICAL {
        if !items.iter().any(|i| i.construction == c) {
            continue;
        }
        let sums = region_sums(readings, items, c, region)?;
        let d = ConditionSums::difference(sums.iter().map(|(_, s)| s));
        if !d.is_finite() {
            return Err(Error::Data(format!("{c} {region}: no readings in one of the conditions")));
        }
        out.push((c, d));
    }
    Ok(out)
}

/// Percentile 95% interval of `statistic` over resamples of `clusters` drawn
/// with replacement. Replicate `b` uses its own ChaCha stream, so results do
/// not depend on how replicates are spread over threads.
pub fn bootstrap_ci<T, F>(clusters: &[T], statistic: F, n_resamples: usize, seed: u64) -> Result<(f64, f64)>
where
    T: Sync,
    F: Fn(&[&T]) -> f64 + Sync,
{
    if clusters.len() < 2 {
        return Err(Error::Data(format!(
            "bootstrap needs at least 2 clusters, found {}",
            clusters.len()
        )));
    }
    if n_resamples < 1000 {
        return Err(Error::Config(format!("bootstrap needs at least 1000 resamples, got {n_resamples}")));
    }
    let n = clusters.len();
    let mut stats: Vec<f64> = (0..n_resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let sample: Vec<&T> = (0..n).map(|_| &clusters[rng.random_range(0..n)]).collect();
            statistic(&sample)
        })
        .collect();
    let bad = stats.iter().filter(|s| !s.is_finite()).count();
    if bad > 0 {
        return Err(Error::Numerical(format!("{bad} of {n_resamples} bootstrap replicates were not finite")));
    }
    stats.sort_by(f64::total_cmp);
    Ok((quantile(&stats, 0.025), quantile(&stats, 0.975)))
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Effects with participant-bootstrap intervals for every construction and region.
pub fn effect_table(
    readings: &[Reading],
    items: &[ExperimentalItem],
    source: Source,
    n_resamples: usize,
    seed: u64,
) -> Result<Vec<EffectEstimate>> {
    let mut out = Vec::new();
    for c in Construction::CRITICAL {
        if !items.iter().any(|i| i.construction == c) {
            continue;
        }
        for region in Region::ALL {
            let sums: Vec<ConditionSums> = region_sums(readings, items, c, region)?.into_iter().map(|(_, s)| s).collect();
            let effect = ConditionSums::difference(&sums);
            if !effect.is_finite() {
                return Err(Error::Data(format!("{c} {region}: no readings in one of the conditions")));
            }
            let (ci_low, ci_high) = bootstrap_ci(&sums, |s| ConditionSums::difference(s.iter().copied()), n_resamples, seed)?;
            out.push(checked(EffectEstimate {
                construction: c,
                region,
                source,
                effect_ms: effect,
                ci_low,
                ci_high,
                n_resamples,
            })?);
        }
    }
    Ok(out)
}

fn checked(e: EffectEstimate) -> Result<EffectEstimate> {
    let tol = 1e-9 * e.effect_ms.abs().max(1.0);
    if e.ci_low > e.effect_ms + tol || e.ci_high < e.effect_ms - tol {
        return Err(Error::Numerical(format!(
            "{} {} {}: bootstrap interval [{}, {}] excludes the observed effect {}",
            e.construction, e.region, e.source, e.ci_low, e.ci_high, e.effect_ms
        )));
    }
    Ok(e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Measure {
    Lexical,
    Syntactic,
}

impl Measure {
    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Lexical => "LEXICAL",
            Measure::Syntactic => "SYNTACTIC",
        }
    }
}

/// Model surprisal difference between the members of each garden-path pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurprisalDifference {
    pub construction: Construction,
    pub region: Region,
    pub measure: Measure,
    pub difference: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_items: usize,
}

/// Mean ambiguous-minus-unambiguous surprisal at each region, with an item bootstrap.
pub fn surprisal_differences(
    records: &[SurprisalRecord],
    items: &[ExperimentalItem],
    n_resamples: usize,
    seed: u64,
) -> Result<Vec<SurprisalDifference>> {
    let mut by_key: HashMap<(u32, Condition, usize), &SurprisalRecord> = HashMap::new();
    for r in records {
        by_key.insert((r.item_id, r.condition.unwrap_or(Condition::NotApplicable), r.token_index), r);
    }
    let mut out = Vec::new();
    for c in Construction::CRITICAL {
        let members: Vec<&ExperimentalItem> = items.iter().filter(|i| i.construction == c).collect();
        if members.is_empty() {
            continue;
        }
        check_pairs(&members)?;
        for region in Region::ALL {
            for measure in [Measure::Lexical, Measure::Syntactic] {
                let mut per_item: BTreeMap<u32, ConditionSums> = BTreeMap::new();
                for it in &members {
                    let Some(t) = region.token_index(it) else { continue };
                    let r = by_key.get(&(it.item_id, it.condition, t)).ok_or_else(|| {
                        Error::Data(format!("no surprisal for item {} ({}) token {t}", it.item_id, it.condition))
                    })?;
                    let v = match measure {
                        Measure::Lexical => r.surp_lex,
                        Measure::Syntactic => r.surp_syn,
                    };
                    per_item.entry(it.item_id).or_default().add(it.condition, v);
                }
                let sums: Vec<ConditionSums> = per_item.into_values().collect();
                let difference = ConditionSums::difference(&sums);
                let (ci_low, ci_high) =
                    bootstrap_ci(&sums, |s| ConditionSums::difference(s.iter().copied()), n_resamples, seed)?;
                out.push(SurprisalDifference {
                    construction: c,
                    region,
                    measure,
                    difference,
                    ci_low,
                    ci_high,
                    n_items: sums.len(),
                });
            }
        }
    }
    Ok(out)
}

pub fn write_effects_csv(path: &Path, effects: &[EffectEstimate]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["construction", "region", "source", "effect_ms", "ci_low", "ci_high", "n_resamples"])?;
    for e in effects {
        w.write_record([
            e.construction.to_string(),
            e.region.to_string(),
            e.source.to_string(),
            e.effect_ms.to_string(),
            e.ci_low.to_string(),
            e.ci_high.to_string(),
            e.n_resamples.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_surprisal_differences_csv(path: &Path, diffs: &[SurprisalDifference]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["construction", "region", "measure", "difference", "ci_low", "ci_high", "n_items"])?;
    for d in diffs {
        w.write_record([
            d.construction.to_string(),
            d.region.to_string(),
            d.measure.as_str().to_string(),
            d.difference.to_string(),
            d.ci_low.to_string(),
            d.ci_high.to_string(),
            d.n_items.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
