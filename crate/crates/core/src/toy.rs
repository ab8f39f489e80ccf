//! A small probabilistic grammar with the three garden-path ambiguities
//! built in, used to produce training corpora, experimental items and
//! synthetic reading times at desk scale.
//!
//! The ambiguities and their controlling choices:
//!
//! * main verb vs reduced relative: ditransitive verbs (`sent`, `handed`, ...)
//!   head a main clause far more often than they start a reduced relative
//!   inside the subject;
//! * object vs sentential complement: complement-taking verbs (`showed`,
//!   `knew`, ...) take an object noun phrase more often than a bare clause;
//! * object vs zero complement: optionally transitive verbs (`changed`,
//!   `moved`, ...) inside a `because` clause normally have an object, and
//!   the comma that closes an intransitive `because` clause is only
//!   occasionally dropped.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::corpus::{Condition, Construction, ExperimentalItem, RtObservation};
use crate::error::{Error, Result};

pub const DET: &str = "NP/N";
pub const ADJ: &str = "N/N";
pub const NOUN: &str = "N";
pub const TRANSITIVE: &str = "(S\\NP)/NP";
pub const INTRANSITIVE: &str = "S\\NP";
pub const BARE_COMPLEMENT: &str = "(S\\NP)/S";
pub const THAT_COMPLEMENT: &str = "(S\\NP)/S[em]";
pub const COMPLEMENTIZER: &str = "S[em]/S";
pub const PASSIVE: &str = "(S[pss]\\NP)/NP";
pub const AUX_PASSIVE: &str = "(S\\NP)/(S[pss]\\NP)";
pub const RELATIVIZER: &str = "(NP\\NP)/(S\\NP)";
pub const SUBORDINATOR: &str = "(S/S)/S";
pub const COMMA: &str = ",";
pub const STOP: &str = ".";

/// Every tag the grammar can emit.
pub const TAGS: [&str; 14] = [
    DET,
    ADJ,
    NOUN,
    TRANSITIVE,
    INTRANSITIVE,
    BARE_COMPLEMENT,
    THAT_COMPLEMENT,
    COMPLEMENTIZER,
    PASSIVE,
    AUX_PASSIVE,
    RELATIVIZER,
    SUBORDINATOR,
    COMMA,
    STOP,
];

const ADJECTIVES: &[&str] = &["old", "young", "tall", "quiet", "angry", "happy", "clever", "nervous"];

const NOUNS: &[&str] = &[
    "man", "woman", "child", "doctor", "lawyer", "teacher", "student", "officer", "suspect", "nurse", "driver",
    "farmer", "artist", "pilot", "judge", "writer", "singer", "player", "captain", "clerk", "baker", "guard",
    "banker", "actor", "dancer", "sailor", "editor", "author", "priest", "mayor", "coach", "chef", "tenant",
    "witness", "manager", "soldier", "patient", "neighbor", "reporter", "visitor",
];

const RARE_NOUNS: &[&str] = &[
    "aardvark", "alchemist", "archivist", "armorer", "astrologer", "balladeer", "beekeeper", "blacksmith",
    "bookbinder", "calligrapher", "cartographer", "chandler", "clockmaker", "cobbler", "cooper", "falconer",
    "fletcher", "glassblower", "gondolier", "harpist", "herbalist", "hermit", "juggler", "lamplighter",
    "locksmith", "luthier", "mapmaker", "milliner", "minstrel", "navigator", "oboist", "perfumer", "puppeteer",
    "quokka", "ropemaker", "saddler", "scribe", "shepherd", "silversmith", "stonemason", "tanner", "thatcher",
    "tinker", "troubadour", "vintner", "weaver", "wheelwright", "woodcarver", "yodeler", "zookeeper",
    "zitherist", "abbess", "bard", "drover", "ferrier", "gamekeeper", "jester", "knave", "lutenist", "ostler",
];

const TRANSITIVE_VERBS: &[&str] = &[
    "deserved", "needed", "liked", "praised", "visited", "blamed", "thanked", "helped", "admired", "ignored",
    "trusted", "called", "hired", "warned", "greeted", "followed",
];

const INTRANSITIVE_VERBS: &[&str] = &["slept", "laughed", "arrived", "smiled", "waited", "cried", "sneezed", "fainted"];

const OPTIONAL_VERBS: &[&str] = &["changed", "moved", "studied", "played", "watched", "cleaned", "painted", "practiced"];

const COMPLEMENT_VERBS: &[&str] = &["showed", "knew", "believed", "heard", "noticed", "understood"];

const DITRANSITIVE_VERBS: &[&str] = &["sent", "handed", "offered", "brought", "mailed", "fed", "taught", "paid"];

/// How many of the most frequent transitive verbs serve as disambiguating words.
const DISAMBIGUATORS: usize = 4;

/// Critical items draw their nouns from this many of the most frequent nouns.
const ITEM_NOUNS: usize = 12;

/// Word lists of the grammar, by category.
#[derive(Debug, Clone, Copy)]
pub struct Lexicon;

impl Lexicon {
    pub fn adjectives() -> &'static [&'static str] {
        ADJECTIVES
    }
    pub fn nouns() -> &'static [&'static str] {
        NOUNS
    }
    pub fn rare_nouns() -> &'static [&'static str] {
        RARE_NOUNS
    }
    pub fn transitive_verbs() -> &'static [&'static str] {
        TRANSITIVE_VERBS
    }
    pub fn intransitive_verbs() -> &'static [&'static str] {
        INTRANSITIVE_VERBS
    }
    pub fn optional_verbs() -> &'static [&'static str] {
        OPTIONAL_VERBS
    }
    pub fn complement_verbs() -> &'static [&'static str] {
        COMPLEMENT_VERBS
    }
    pub fn ditransitive_verbs() -> &'static [&'static str] {
        DITRANSITIVE_VERBS
    }
    pub fn is_rare_noun(word: &str) -> bool {
        RARE_NOUNS.contains(&word)
    }
}

/// Sampling probabilities of the grammar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrammarConfig {
    pub adjective: f64,
    /// Chance that an adjective-modified noun is drawn from the rare list.
    pub rare_after_adjective: f64,
    pub relative_clause: f64,
    /// Share of relative clauses that are reduced (no `who was`).
    pub reduced_relative: f64,
    pub because_clause: f64,
    /// Chance an intransitive `because` clause is not followed by a comma.
    pub dropped_comma: f64,
    pub optional_verb_object: f64,
    pub complement_object: f64,
    pub complement_that: f64,
    /// Relative weights of verb-phrase frames: transitive, intransitive,
    /// optionally transitive, complement-taking, ditransitive main verb, passive.
    pub frames: [f64; 6],
}

impl Default for GrammarConfig {
    fn default() -> Self {
        GrammarConfig {
            adjective: 0.25,
            rare_after_adjective: 0.2,
            relative_clause: 0.12,
            reduced_relative: 0.3,
            because_clause: 0.15,
            dropped_comma: 0.3,
            optional_verb_object: 0.6,
            complement_object: 0.6,
            complement_that: 0.5,
            frames: [0.34, 0.14, 0.14, 0.14, 0.12, 0.12],
        }
    }
}

pub type Tagged = Vec<(String, &'static str)>;

/// Seeded sampler over the grammar.
pub struct ToyGrammar {
    cfg: GrammarConfig,
    rng: ChaCha8Rng,
    zipf: HashMap<usize, WeightedIndex<f64>>,
    frames: WeightedIndex<f64>,
}

impl ToyGrammar {
    pub fn new(cfg: GrammarConfig, seed: u64) -> Result<Self> {
        let frames = WeightedIndex::new(cfg.frames).map_err(|e| Error::Config(format!("verb frame weights: {e}")))?;
        let mut zipf = HashMap::new();
        for n in [
            ADJECTIVES.len(),
            NOUNS.len(),
            RARE_NOUNS.len(),
            TRANSITIVE_VERBS.len(),
            INTRANSITIVE_VERBS.len(),
            OPTIONAL_VERBS.len(),
            COMPLEMENT_VERBS.len(),
            DITRANSITIVE_VERBS.len(),
        ] {
            zipf.entry(n)
                .or_insert_with(|| WeightedIndex::new((1..=n).map(|r| 1.0 / r as f64)).unwrap());
        }
        Ok(ToyGrammar {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            zipf,
            frames,
        })
    }

    fn pick(&mut self, words: &'static [&'static str]) -> &'static str {
        words[self.zipf[&words.len()].sample(&mut self.rng)]
    }

    fn pick_uniform(&mut self, words: &'static [&'static str]) -> &'static str {
        words[self.rng.random_range(0..words.len())]
    }

    fn push(out: &mut Tagged, w: &str, t: &'static str) {
        out.push((w.to_string(), t));
    }

    fn noun_phrase(&mut self, out: &mut Tagged) {
        Self::push(out, "the", DET);
        if self.rng.random_bool(self.cfg.adjective) {
            let a = self.pick(ADJECTIVES);
            Self::push(out, a, ADJ);
            if self.rng.random_bool(self.cfg.rare_after_adjective) {
                let n = self.pick_uniform(RARE_NOUNS);
                Self::push(out, n, NOUN);
                return;
            }
        }
        let n = self.pick(NOUNS);
        Self::push(out, n, NOUN);
    }

    fn subject(&mut self, out: &mut Tagged, allow_relative: bool) {
        self.noun_phrase(out);
        if !allow_relative || !self.rng.random_bool(self.cfg.relative_clause) {
            return;
        }
        if self.rng.random_bool(self.cfg.reduced_relative) {
            let v = self.pick(DITRANSITIVE_VERBS);
            Self::push(out, v, PASSIVE);
            self.noun_phrase(out);
            return;
        }
        Self::push(out, "who", RELATIVIZER);
        match self.rng.random_range(0..3) {
            0 => {
                Self::push(out, "was", AUX_PASSIVE);
                let v = self.pick(DITRANSITIVE_VERBS);
                Self::push(out, v, PASSIVE);
                self.noun_phrase(out);
            }
            1 => {
                let v = self.pick(TRANSITIVE_VERBS);
                Self::push(out, v, TRANSITIVE);
                self.noun_phrase(out);
            }
            _ => {
                let v = self.pick(INTRANSITIVE_VERBS);
                Self::push(out, v, INTRANSITIVE);
            }
        }
    }

    /// Returns true when the phrase ended without an object or complement.
    fn verb_phrase(&mut self, out: &mut Tagged, depth: usize) -> bool {
        loop {
            match self.frames.sample(&mut self.rng) {
                0 => {
                    let v = self.pick(TRANSITIVE_VERBS);
                    Self::push(out, v, TRANSITIVE);
                    self.noun_phrase(out);
                    return false;
                }
                1 => {
                    let v = self.pick(INTRANSITIVE_VERBS);
                    Self::push(out, v, INTRANSITIVE);
                    return true;
                }
                2 => {
                    let v = self.pick(OPTIONAL_VERBS);
                    if self.rng.random_bool(self.cfg.optional_verb_object) {
                        Self::push(out, v, TRANSITIVE);
                        self.noun_phrase(out);
                        return false;
                    }
                    Self::push(out, v, INTRANSITIVE);
                    return true;
                }
                3 => {
                    let v = self.pick(COMPLEMENT_VERBS);
                    if self.rng.random_bool(self.cfg.complement_object) {
                        Self::push(out, v, TRANSITIVE);
                        self.noun_phrase(out);
                        return false;
                    }
                    if depth > 0 {
                        // Keep embedding shallow: resample the frame.
                        continue;
                    }
                    if self.rng.random_bool(self.cfg.complement_that) {
                        Self::push(out, v, THAT_COMPLEMENT);
                        Self::push(out, "that", COMPLEMENTIZER);
                    } else {
                        Self::push(out, v, BARE_COMPLEMENT);
                    }
                    self.subject(out, false);
                    self.verb_phrase(out, depth + 1);
                    return false;
                }
                4 => {
                    let v = self.pick(DITRANSITIVE_VERBS);
                    Self::push(out, v, TRANSITIVE);
                    self.noun_phrase(out);
                    return false;
                }
                _ => {
                    Self::push(out, "was", AUX_PASSIVE);
                    let v = self.pick(DITRANSITIVE_VERBS);
                    Self::push(out, v, PASSIVE);
                    self.noun_phrase(out);
                    return false;
                }
            }
        }
    }

    pub fn sentence(&mut self) -> Tagged {
        let mut out = Vec::new();
        if self.rng.random_bool(self.cfg.because_clause) {
            Self::push(&mut out, "because", SUBORDINATOR);
            self.subject(&mut out, false);
            let intransitive = self.verb_phrase(&mut out, 1);
            if !(intransitive && self.rng.random_bool(self.cfg.dropped_comma)) {
                Self::push(&mut out, ",", COMMA);
            }
        }
        self.subject(&mut out, true);
        self.verb_phrase(&mut out, 0);
        Self::push(&mut out, ".", STOP);
        out
    }
}

/// Training material drawn from the grammar.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyCorpus {
    /// Untagged sentences for the next-word objective only.
    pub plain: Vec<Vec<String>>,
    pub tagged: Vec<Tagged>,
}

impl ToyCorpus {
    pub fn all_words(&self) -> impl Iterator<Item = Vec<String>> + '_ {
        self.plain
            .iter()
            .cloned()
            .chain(self.tagged.iter().map(|s| s.iter().map(|(w, _)| w.clone()).collect()))
    }
}

pub fn generate_corpus(cfg: &GrammarConfig, plain: usize, tagged: usize, seed: u64) -> Result<ToyCorpus> {
    let mut g = ToyGrammar::new(cfg.clone(), seed)?;
    let tagged: Vec<Tagged> = (0..tagged).map(|_| g.sentence()).collect();
    let plain = (0..plain)
        .map(|_| g.sentence().into_iter().map(|(w, _)| w).collect())
        .collect();
    Ok(ToyCorpus { plain, tagged })
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

/// Critical pairs for each construction, then fillers.
///
/// Critical item ids run from 1; filler ids follow. Fillers are grammar
/// samples plus `rare_fillers` sentences of the form
/// `the ADJ RARE-NOUN VERB the NOUN .`
pub fn generate_items(
    cfg: &GrammarConfig,
    per_construction: usize,
    fillers: usize,
    rare_fillers: usize,
    seed: u64,
) -> Result<Vec<ExperimentalItem>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = ToyGrammar::new(cfg.clone(), seed.wrapping_add(1))?;
    let mut items = Vec::new();
    let mut id = 1u32;
    let pick = |rng: &mut ChaCha8Rng, ws: &'static [&'static str]| ws[rng.random_range(0..ws.len())];
    for construction in Construction::CRITICAL {
        for i in 0..per_construction {
            let nouns = &NOUNS[..ITEM_NOUNS];
            let n1 = pick(&mut rng, nouns);
            let mut n2 = pick(&mut rng, nouns);
            while n2 == n1 {
                n2 = pick(&mut rng, nouns);
            }
            let n3 = pick(&mut rng, nouns);
            let dis = TRANSITIVE_VERBS[i % DISAMBIGUATORS];
            let (amb, unamb, d_amb, d_unamb) = match construction {
                Construction::Mvrr => {
                    let v = DITRANSITIVE_VERBS[i % DITRANSITIVE_VERBS.len()];
                    (
                        format!("the {n1} {v} the {n2} {dis} the {n3} ."),
                        format!("the {n1} who was {v} the {n2} {dis} the {n3} ."),
                        5,
                        7,
                    )
                }
                Construction::Nps => {
                    let v = COMPLEMENT_VERBS[i % COMPLEMENT_VERBS.len()];
                    (
                        format!("the {n1} {v} the {n2} {dis} the {n3} ."),
                        format!("the {n1} {v} that the {n2} {dis} the {n3} ."),
                        5,
                        6,
                    )
                }
                Construction::Npz => {
                    let v = OPTIONAL_VERBS[i % OPTIONAL_VERBS.len()];
                    (
                        format!("because the {n1} {v} the {n2} {dis} the {n3} ."),
                        format!("because the {n1} {v} , the {n2} {dis} the {n3} ."),
                        6,
                        7,
                    )
                }
                Construction::Filler => unreachable!(),
            };
            items.push(ExperimentalItem::new(id, construction, Condition::Ambiguous, words(&amb), Some(d_amb))?);
            items.push(ExperimentalItem::new(id, construction, Condition::Unambiguous, words(&unamb), Some(d_unamb))?);
            id += 1;
        }
    }
    for _ in 0..fillers {
        let s: Vec<String> = g.sentence().into_iter().map(|(w, _)| w).collect();
        items.push(ExperimentalItem::new(id, Construction::Filler, Condition::NotApplicable, s, None)?);
        id += 1;
    }
    for _ in 0..rare_fillers {
        let a = pick(&mut rng, ADJECTIVES);
        let r = pick(&mut rng, RARE_NOUNS);
        let v = pick(&mut rng, TRANSITIVE_VERBS);
        let n = pick(&mut rng, NOUNS);
        let s = words(&format!("the {a} {r} {v} the {n} ."));
        items.push(ExperimentalItem::new(id, Construction::Filler, Condition::NotApplicable, s, None)?);
        id += 1;
    }
    Ok(items)
}

/// Coefficients of the synthetic reading-time generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RtSimConfig {
    pub participants: usize,
    pub baseline_ms: f64,
    /// ms per nat at lags 0, 1, 2.
    pub lexical: [f64; 3],
    pub syntactic: [f64; 3],
    /// ms per unit of natural-log frequency.
    pub frequency: f64,
    /// ms per character.
    pub length: f64,
    /// ms per word position.
    pub position: f64,
    pub participant_sd: f64,
    pub item_sd: f64,
    pub noise_sd: f64,
    /// Extra ms on ambiguous members at the disambiguating word and the
    /// two spillover words. Independent of any surprisal value.
    pub ambiguity_penalty: [f64; 3],
    pub min_rt_ms: f64,
}

impl Default for RtSimConfig {
    fn default() -> Self {
        RtSimConfig {
            participants: 48,
            baseline_ms: 330.0,
            lexical: [9.0, 5.0, 2.0],
            syntactic: [14.0, 7.0, 3.0],
            frequency: -4.0,
            length: 3.0,
            position: -1.0,
            participant_sd: 35.0,
            item_sd: 12.0,
            noise_sd: 30.0,
            ambiguity_penalty: [90.0, 60.0, 30.0],
            min_rt_ms: 50.0,
        }
    }
}

/// Per-token inputs to the simulator for one sentence.
#[derive(Debug, Clone)]
pub struct SimToken {
    pub surp_lex: f64,
    pub surp_syn: f64,
    pub log_freq: f64,
    pub length: usize,
}

/// Synthetic self-paced reading times.
///
/// Every participant reads every filler and one member of each critical
/// pair, alternating by participant and item. `tokens(item)` supplies the
/// per-token predictors of a sentence.
pub fn simulate_rts<F>(items: &[ExperimentalItem], mut tokens: F, cfg: &RtSimConfig, seed: u64) -> Result<Vec<RtObservation>>
where
    F: FnMut(&ExperimentalItem) -> Result<Vec<SimToken>>,
{
    if cfg.participants < 2 {
        return Err(Error::Config("at least two simulated participants are needed".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |sd: f64| Normal::new(0.0, sd).map_err(|e| Error::Config(format!("standard deviation {sd}: {e}")));
    let p_dist = normal(cfg.participant_sd)?;
    let i_dist = normal(cfg.item_sd)?;
    let e_dist = normal(cfg.noise_sd)?;
    let participant_offsets: Vec<f64> = (0..cfg.participants).map(|_| p_dist.sample(&mut rng)).collect();
    let mut item_offsets: HashMap<u32, f64> = HashMap::new();
    for it in items {
        item_offsets.entry(it.item_id).or_insert_with(|| i_dist.sample(&mut rng));
    }
    let token_table: Vec<Vec<SimToken>> = items.iter().map(&mut tokens).collect::<Result<_>>()?;

    let mut out = Vec::new();
    for (p, &p_off) in participant_offsets.iter().enumerate() {
        let pid = format!("P{:03}", p + 1);
        for (it, toks) in items.iter().zip(&token_table) {
            if it.tokens.len() != toks.len() {
                return Err(Error::Data(format!("item {}: predictor count does not match tokens", it.item_id)));
            }
            let reads = match it.condition {
                Condition::NotApplicable => true,
                Condition::Ambiguous => (p + it.item_id as usize) % 2 == 0,
                Condition::Unambiguous => (p + it.item_id as usize) % 2 == 1,
            };
            if !reads {
                continue;
            }
            for (n, t) in toks.iter().enumerate() {
                let lag = |k: usize, f: &dyn Fn(&SimToken) -> f64| if n >= k { f(&toks[n - k]) } else { 0.0 };
                let mut rt = cfg.baseline_ms + p_off + item_offsets[&it.item_id];
                for k in 0..3 {
                    rt += cfg.lexical[k] * lag(k, &|t| t.surp_lex);
                    rt += cfg.syntactic[k] * lag(k, &|t| t.surp_syn);
                }
                rt += cfg.frequency * t.log_freq + cfg.length * t.length as f64 + cfg.position * n as f64;
                if it.condition == Condition::Ambiguous {
                    if let Some(d) = it.disambig_index {
                        if n >= d && n < d + 3 {
                            rt += cfg.ambiguity_penalty[n - d];
                        }
                    }
                }
                rt += e_dist.sample(&mut rng);
                out.push(RtObservation {
                    participant_id: pid.clone(),
                    item_id: it.item_id,
                    token_index: n,
                    rt_ms: rt.max(cfg.min_rt_ms),
                    condition: (it.condition != Condition::NotApplicable).then_some(it.condition),
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::validate_pairs;

    #[test]
    fn corpus_is_deterministic_and_uses_known_tags() {
        let a = generate_corpus(&GrammarConfig::default(), 50, 50, 3).unwrap();
        let b = generate_corpus(&GrammarConfig::default(), 50, 50, 3).unwrap();
        assert_eq!(a, b);
        for s in &a.tagged {
            assert_eq!(s.last().unwrap().0, ".");
            assert!(s.iter().all(|(_, t)| TAGS.contains(t)));
        }
    }

    #[test]
    fn rare_nouns_only_follow_adjectives() {
        let c = generate_corpus(&GrammarConfig::default(), 0, 2000, 5).unwrap();
        let mut seen = 0;
        for s in &c.tagged {
            for i in 0..s.len() {
                if Lexicon::is_rare_noun(&s[i].0) {
                    assert_eq!(s[i - 1].1, ADJ);
                    seen += 1;
                }
            }
        }
        assert!(seen > 50);
    }

    #[test]
    fn items_pair_up_and_disambiguate_on_a_transitive_verb() {
        let items = generate_items(&GrammarConfig::default(), 6, 10, 4, 1).unwrap();
        validate_pairs(&items).unwrap();
        let critical: Vec<_> = items.iter().filter(|i| !i.is_filler()).collect();
        assert_eq!(critical.len(), 36);
        for it in critical {
            let d = it.disambig_index.unwrap();
            assert!(TRANSITIVE_VERBS[..DISAMBIGUATORS].contains(&it.tokens[d].as_str()));
            assert_eq!(it.spillover_indices.len(), 2);
        }
        let mvrr = &items[0];
        assert_eq!(mvrr.tokens.len(), 9);
        assert_eq!(items[1].tokens[2..4], ["who", "was"]);
    }

    #[test]
    fn simulated_penalty_lands_on_ambiguous_region() {
        let items = generate_items(&GrammarConfig::default(), 2, 1, 0, 2).unwrap();
        let cfg = RtSimConfig {
            participant_sd: 0.0,
            item_sd: 0.0,
            noise_sd: 0.0,
            participants: 2,
            ..RtSimConfig::default()
        };
        let flat = |it: &ExperimentalItem| {
            Ok(it
                .tokens
                .iter()
                .map(|_| SimToken {
                    surp_lex: 0.0,
                    surp_syn: 0.0,
                    log_freq: 0.0,
                    length: 0,
                })
                .collect())
        };
        let rts = simulate_rts(&items, flat, &cfg, 0).unwrap();
        for r in &rts {
            let it = items
                .iter()
                .find(|i| i.item_id == r.item_id && Some(i.condition) == r.condition.or(Some(Condition::NotApplicable)))
                .unwrap();
            let mut expected = cfg.baseline_ms + cfg.position * r.token_index as f64;
            if it.condition == Condition::Ambiguous {
                let d = it.disambig_index.unwrap();
                if r.token_index >= d && r.token_index < d + 3 {
                    expected += cfg.ambiguity_penalty[r.token_index - d];
                }
            }
            assert!((r.rt_ms - expected).abs() < 1e-9);
        }
        // Each participant reads exactly one member of every pair.
        let p1: Vec<_> = rts.iter().filter(|r| r.participant_id == "P001" && r.token_index == 0).collect();
        assert_eq!(p1.len(), 3 * 2 + 1);
    }
}
