use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::corpus::{
    load_items, load_rts, load_supertag_corpus, load_supertag_corpus_with, read_corpus, supertag_file_words, write_rts,
    Condition, ExperimentalItem, FrequencyTable, RtObservation, Vocabulary, WordFrequencies,
};
use crate::error::{Error, Result};
use crate::model::{
    evaluate_perplexity, evaluate_tag_accuracy, load_checkpoint, save_checkpoint, train, JointModel, TrainReport,
};
use crate::plot;
use crate::regression::{
    average_predictions, build_design, fit_conversion_suite, load_predictions_csv, predict_rt, write_predictions_csv,
    FitSummary, LmmOptions, Prediction, Variant,
};
use crate::stats::{
    correlation_report, effect_table, interaction_contrasts, quadrant_report, surprisal_differences,
    write_contrasts_csv, write_correlations_csv, write_effects_csv, write_scatter_csv,
    write_surprisal_differences_csv, ContrastResult, Correlation, EffectEstimate, QuadrantReport, Reading, Region,
    Source, SurprisalDifference,
};
use crate::surprisal::{load_surprisal_csv, write_surprisal_csv, SurprisalEngine, SurprisalRecord};
use crate::toy::{simulate_rts, SimToken};

/// Regions entered into the interaction contrasts.
pub const CONTRAST_REGIONS: [Region; 3] = [Region::Disambig, Region::Spill1, Region::Spill2];

fn require(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "required input is missing"),
        ))
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Held-out quality of one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub seed: u64,
    pub dev_perplexity: f64,
    pub dev_tag_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub seed: u64,
    pub checkpoint: PathBuf,
    pub report: TrainReport,
    pub evaluation: Option<Evaluation>,
}

/// Train one model per seed. Also writes the unigram frequency table of the
/// training text, which later stages read.
pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<TrainOutcome>> {
    for p in &cfg.data.lm_corpus {
        require(p)?;
    }
    require(&cfg.data.supertag_corpus)?;
    if let Some(p) = &cfg.data.dev_supertag {
        require(p)?;
    }
    let layout = cfg.layout();

    let mut text: Vec<Vec<String>> = Vec::new();
    for p in &cfg.data.lm_corpus {
        text.extend(read_corpus(p)?);
    }
    let lm_len = text.len();
    text.extend(supertag_file_words(&cfg.data.supertag_corpus)?);
    let mut counts: HashMap<String, u64> = HashMap::new();
    for s in &text {
        for w in s {
            *counts.entry(w.clone()).or_insert(0) += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::Data("training corpora contain no tokens".into()));
    }
    let vocab = Vocabulary::from_counts(&counts, cfg.train.min_count);
    let table = FrequencyTable::from_sentences(text.iter().map(|s| s.as_slice()), &vocab);
    let freqs = WordFrequencies::new(&vocab, &table);
    ensure_parent(&layout.frequencies())?;
    freqs.write_csv(&layout.frequencies())?;

    let (tagged, tags) = load_supertag_corpus(&cfg.data.supertag_corpus, &vocab, cfg.train.max_len)?;
    let lm: Vec<Vec<usize>> = text[..lm_len]
        .iter()
        .filter(|s| s.len() <= cfg.train.max_len)
        .map(|s| vocab.encode(s))
        .collect();
    let dev = match &cfg.data.dev_supertag {
        Some(p) => Some(load_supertag_corpus_with(p, &vocab, &tags, cfg.train.max_len)?),
        None => None,
    };

    let outcomes: Vec<Result<TrainOutcome>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let tc = crate::model::TrainConfig {
                seed,
                ..cfg.train.clone()
            };
            let mut model = JointModel::new(vocab.clone(), tags.clone(), &tc)?;
            log::info!("training seed {seed}");
            let report = train(&mut model, &lm, &tagged)?;
            let evaluation = match &dev {
                Some(d) => {
                    let words: Vec<Vec<usize>> = d.sentences.iter().map(|s| s.words.clone()).collect();
                    Some(Evaluation {
                        seed,
                        dev_perplexity: evaluate_perplexity(&model, &words)?,
                        dev_tag_accuracy: evaluate_tag_accuracy(&model, d)?,
                    })
                }
                None => None,
            };
            let checkpoint = layout.checkpoint(seed);
            ensure_parent(&checkpoint)?;
            save_checkpoint(&model, &checkpoint)?;
            Ok(TrainOutcome {
                seed,
                checkpoint,
                report,
                evaluation,
            })
        })
        .collect();
    let outcomes: Vec<TrainOutcome> = outcomes.into_iter().collect::<Result<_>>()?;

    for o in &outcomes {
        let log_path = layout.train_log(o.seed);
        let mut log = String::from("epoch,lm_loss,tag_loss,total_loss\n");
        for e in &o.report.epochs {
            log.push_str(&format!("{},{},{},{}\n", e.epoch, e.lm, e.tag, e.total));
        }
        write_text(&log_path, &log)?;
        if let Some(ev) = &o.evaluation {
            let mut json = serde_json::to_string_pretty(ev)?;
            json.push('\n');
            write_text(&layout.evaluation(o.seed), &json)?;
            log::info!(
                "seed {}: dev perplexity {:.3}, tag accuracy {:.4}",
                ev.seed,
                ev.dev_perplexity,
                ev.dev_tag_accuracy
            );
        }
    }
    Ok(outcomes)
}

/// Surprisal of every item token under each seed's model.
pub fn cmd_score(cfg: &RunConfig) -> Result<Vec<(u64, Vec<SurprisalRecord>)>> {
    require(&cfg.data.items)?;
    let layout = cfg.layout();
    for &s in &cfg.seeds {
        require(&layout.checkpoint(s))?;
    }
    let items = load_items(&cfg.data.items)?;
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        let model = load_checkpoint(&layout.checkpoint(seed))?;
        let records = SurprisalEngine::new(&model).score_items(&items, cfg.k_or_all())?;
        let oov = records.iter().filter(|r| r.oov_flag).count();
        if !records.is_empty() {
            let rate = oov as f64 / records.len() as f64;
            if rate > cfg.analysis.oov_warning_rate {
                let mut words: Vec<&str> = records.iter().filter(|r| r.oov_flag).map(|r| r.token.as_str()).collect();
                words.sort_unstable();
                words.dedup();
                log::warn!(
                    "seed {seed}: {oov} of {} tokens ({:.1}%) are out of vocabulary, e.g. {}",
                    records.len(),
                    100.0 * rate,
                    words.iter().take(10).copied().collect::<Vec<_>>().join(" ")
                );
            }
        }
        let path = layout.surprisal(seed);
        ensure_parent(&path)?;
        write_surprisal_csv(&path, &records)?;
        out.push((seed, records));
    }
    Ok(out)
}

fn load_seed_surprisals(cfg: &RunConfig) -> Result<Vec<(u64, Vec<SurprisalRecord>)>> {
    let layout = cfg.layout();
    cfg.seeds
        .iter()
        .map(|&s| Ok((s, load_surprisal_csv(&layout.surprisal(s))?)))
        .collect()
}

/// Synthetic reading times from the seed-averaged surprisals.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<RtObservation>> {
    let sim = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| Error::Config("simulation needs a [simulate] section".into()))?;
    let layout = cfg.layout();
    require(&cfg.data.items)?;
    require(&layout.frequencies())?;
    for &s in &cfg.seeds {
        require(&layout.surprisal(s))?;
    }
    let items = load_items(&cfg.data.items)?;
    let freqs = WordFrequencies::load_csv(&layout.frequencies())?;
    let per_seed = load_seed_surprisals(cfg)?;
    let mut mean: HashMap<(u32, Condition, usize), (f64, f64)> = HashMap::new();
    let n = per_seed.len() as f64;
    for (_, recs) in &per_seed {
        for r in recs {
            let key = (r.item_id, r.condition.unwrap_or(Condition::NotApplicable), r.token_index);
            let e = mean.entry(key).or_insert((0.0, 0.0));
            e.0 += r.surp_lex / n;
            e.1 += r.surp_syn / n;
        }
    }
    let tokens = |it: &ExperimentalItem| -> Result<Vec<SimToken>> {
        it.tokens
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let &(surp_lex, surp_syn) = mean.get(&(it.item_id, it.condition, i)).ok_or_else(|| {
                    Error::Data(format!("no surprisal for item {} ({}) token {i}", it.item_id, it.condition))
                })?;
                Ok(SimToken {
                    surp_lex,
                    surp_syn,
                    log_freq: freqs.log_frequency(w),
                    length: w.chars().count(),
                })
            })
            .collect()
    };
    let rts = simulate_rts(&items, tokens, &sim.rt, sim.seed)?;
    let path = layout.simulated_rts();
    ensure_parent(&path)?;
    write_rts(&path, &rts)?;
    Ok(rts)
}

#[derive(Debug, Clone)]
pub struct FitPredictOutcome {
    pub fits: Vec<(u64, Vec<FitSummary>)>,
    pub averaged: Vec<Prediction>,
}

/// Four conversion fits per seed on filler reading times, predictions for
/// critical items, and the seed average of those predictions.
pub fn cmd_fit_predict(cfg: &RunConfig) -> Result<FitPredictOutcome> {
    let layout = cfg.layout();
    require(&cfg.data.items)?;
    require(&cfg.rts_path())?;
    require(&layout.frequencies())?;
    for &s in &cfg.seeds {
        require(&layout.surprisal(s))?;
    }
    let items = load_items(&cfg.data.items)?;
    let rts = load_rts(&cfg.rts_path())?;
    let freqs = WordFrequencies::load_csv(&layout.frequencies())?;
    let opts = LmmOptions::default();

    let mut fits = Vec::new();
    let mut by_variant: Vec<Vec<Vec<Prediction>>> = vec![Vec::new(); Variant::ALL.len()];
    for (seed, records) in load_seed_surprisals(cfg)? {
        let design = build_design(&items, &rts, &records, &freqs)?;
        let fillers = design.fillers();
        if fillers.is_empty() {
            return Err(Error::Data("no filler reading times to fit".into()));
        }
        let critical = design.critical();
        let suite = fit_conversion_suite(&fillers, &opts)?;
        let mut summaries = Vec::new();
        for (v, fit) in suite.iter().enumerate() {
            let summary = FitSummary::new(fit, &design.standardizer);
            let path = layout.fit(fit.variant, seed);
            ensure_parent(&path)?;
            summary.write_json(&path)?;
            summaries.push(summary);
            let preds = predict_rt(fit, &critical)?;
            let path = layout.predictions(fit.variant, seed);
            ensure_parent(&path)?;
            write_predictions_csv(&path, &preds)?;
            by_variant[v].push(preds);
        }
        fits.push((seed, summaries));
    }
    let mut averaged = Vec::new();
    for sets in &by_variant {
        averaged.extend(average_predictions(sets)?);
    }
    write_predictions_csv(&layout.averaged_predictions(), &averaged)?;
    Ok(FitPredictOutcome { fits, averaged })
}

#[derive(Debug, Clone)]
pub struct AnalysisOutcome {
    pub effects: Vec<EffectEstimate>,
    pub contrasts: Vec<ContrastResult>,
    pub surprisal_differences: Vec<(u64, Vec<SurprisalDifference>)>,
    pub correlations: Vec<(u64, Vec<Correlation>)>,
    pub quadrants: Vec<(u64, QuadrantReport)>,
}

/// Human and predicted garden-path effects, interaction contrasts, and the
/// per-seed surprisal summaries, as CSV plus SVG plots.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<AnalysisOutcome> {
    let layout = cfg.layout();
    require(&cfg.data.items)?;
    require(&cfg.rts_path())?;
    require(&layout.frequencies())?;
    require(&layout.averaged_predictions())?;
    for &s in &cfg.seeds {
        require(&layout.surprisal(s))?;
    }
    let items = load_items(&cfg.data.items)?;
    let rts = load_rts(&cfg.rts_path())?;
    let freqs = WordFrequencies::load_csv(&layout.frequencies())?;
    let averaged = load_predictions_csv(&layout.averaged_predictions())?;
    let (n, bseed) = (cfg.analysis.n_resamples, cfg.analysis.bootstrap_seed);

    let mut effects = Vec::new();
    for source in Source::ALL {
        let readings: Vec<Reading> = match source {
            Source::Human => rts.iter().map(Reading::from).collect(),
            Source::Model(v) => averaged.iter().filter(|p| p.variant == v).map(Reading::from).collect(),
        };
        effects.extend(effect_table(&readings, &items, source, n, bseed)?);
    }
    let path = layout.analysis("effects.csv");
    ensure_parent(&path)?;
    write_effects_csv(&path, &effects)?;
    write_text(&layout.plot("effects.svg"), &plot::effects_svg(&effects))?;

    let contrasts = interaction_contrasts(&averaged, &items, &CONTRAST_REGIONS, &LmmOptions::default())?;
    write_contrasts_csv(&layout.analysis("contrasts.csv"), &contrasts)?;

    let mut diffs = Vec::new();
    let mut correlations = Vec::new();
    let mut quadrants = Vec::new();
    for (seed, records) in load_seed_surprisals(cfg)? {
        let d = surprisal_differences(&records, &items, n, bseed)?;
        write_surprisal_differences_csv(&layout.analysis(&format!("surprisal_differences_seed_{seed}.csv")), &d)?;
        let c = correlation_report(&records, &freqs)?;
        write_correlations_csv(&layout.analysis(&format!("correlations_seed_{seed}.csv")), &c)?;
        let q = quadrant_report(&records, &freqs)?;
        write_scatter_csv(&layout.analysis(&format!("scatter_seed_{seed}.csv")), &q)?;
        write_text(&layout.plot(&format!("scatter_seed_{seed}.svg")), &plot::scatter_svg(&q))?;
        diffs.push((seed, d));
        correlations.push((seed, c));
        quadrants.push((seed, q));
    }
    write_text(&layout.plot("surprisal_differences.svg"), &plot::surprisal_differences_svg(&diffs))?;
    Ok(AnalysisOutcome {
        effects,
        contrasts,
        surprisal_differences: diffs,
        correlations,
        quadrants,
    })
}

/// Every stage in order; reading times are simulated when configured.
pub fn cmd_all(cfg: &RunConfig) -> Result<AnalysisOutcome> {
    for p in &cfg.data.lm_corpus {
        require(p)?;
    }
    require(&cfg.data.supertag_corpus)?;
    require(&cfg.data.items)?;
    if let Some(p) = &cfg.data.rts {
        require(p)?;
    }
    cmd_train(cfg)?;
    cmd_score(cfg)?;
    if cfg.simulate.is_some() {
        cmd_simulate(cfg)?;
    }
    cmd_fit_predict(cfg)?;
    cmd_analyze(cfg)
}

/// Write the run configuration next to its outputs.
pub fn write_config(path: &Path, cfg: &RunConfig) -> Result<()> {
    let text = toml::to_string_pretty(cfg).map_err(|e| Error::Config(e.to_string()))?;
    ensure_parent(path)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
