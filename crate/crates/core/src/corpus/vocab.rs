use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::read_text;
use crate::error::{Error, Result};

pub type WordId = usize;

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

/// Word inventory with three reserved symbols at fixed ids 0..3.
///
/// Retained words are ordered by descending corpus count, ties broken
/// lexicographically, so identical inputs always produce identical ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    word_to_id: HashMap<String, WordId>,
    id_to_word: Vec<String>,
    min_count: u64,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    min_count: u64,
    words: Vec<String>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        let word_to_id = r
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocabulary {
            word_to_id,
            id_to_word: r.words,
            min_count: r.min_count,
        }
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            min_count: v.min_count,
            words: v.id_to_word,
        }
    }
}

impl Vocabulary {
    pub const UNK_ID: WordId = 0;
    pub const BOS_ID: WordId = 1;
    pub const EOS_ID: WordId = 2;

    /// Build from explicit token counts. Words below `min_count` are dropped.
    pub fn from_counts(counts: &HashMap<String, u64>, min_count: u64) -> Self {
        let mut kept: Vec<(&String, u64)> = counts
            .iter()
            .filter(|(w, &c)| c >= min_count && !is_reserved(w))
            .map(|(w, &c)| (w, c))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut id_to_word = vec![UNK.to_string(), BOS.to_string(), EOS.to_string()];
        id_to_word.extend(kept.into_iter().map(|(w, _)| w.clone()));
        VocabularyRepr {
            min_count,
            words: id_to_word,
        }
        .into()
    }

    pub fn from_sentences<'a, I, S>(sentences: I, min_count: u64) -> Self
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut counts = HashMap::new();
        for sentence in sentences {
            for tok in sentence {
                *counts.entry(tok.as_ref().to_string()).or_insert(0) += 1;
            }
        }
        Self::from_counts(&counts, min_count)
    }

    pub fn len(&self) -> usize {
        self.id_to_word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_word.is_empty()
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn get(&self, word: &str) -> Option<WordId> {
        self.word_to_id.get(word).copied()
    }

    /// Id of `word`, falling back to the UNK id.
    pub fn id(&self, word: &str) -> WordId {
        self.get(word).unwrap_or(Self::UNK_ID)
    }

    pub fn word(&self, id: WordId) -> Option<&str> {
        self.id_to_word.get(id).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.id_to_word
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<WordId> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }
}

fn is_reserved(w: &str) -> bool {
    w == UNK || w == BOS || w == EOS
}

/// Whitespace-tokenized sentences of a plain-text corpus, one per non-blank line.
pub fn read_corpus(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = read_text(path)?;
    Ok(text
        .lines()
        .map(|l| l.split_whitespace().map(str::to_string).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect())
}

pub fn count_tokens<P: AsRef<Path>>(corpus_paths: &[P]) -> Result<HashMap<String, u64>> {
    let mut counts = HashMap::new();
    let mut total = 0u64;
    for path in corpus_paths {
        for sentence in read_corpus(path.as_ref())? {
            for tok in sentence {
                *counts.entry(tok).or_insert(0) += 1;
                total += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::Data("corpus contains no tokens".into()));
    }
    Ok(counts)
}

pub fn build_vocabulary<P: AsRef<Path>>(corpus_paths: &[P], min_count: u64) -> Result<Vocabulary> {
    let counts = count_tokens(corpus_paths)?;
    Ok(Vocabulary::from_counts(&counts, min_count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn corpus(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn count_order_and_reserved_ids() {
        let f = corpus("a b a\n");
        let v = build_vocabulary(&[f.path()], 1).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.word(0), Some(UNK));
        assert_eq!(v.word(1), Some(BOS));
        assert_eq!(v.word(2), Some(EOS));
        assert!(v.id("a") < v.id("b"));
    }

    #[test]
    fn min_count_drops_rare_words() {
        let f = corpus("a b a\n");
        let v = build_vocabulary(&[f.path()], 2).unwrap();
        assert_eq!(v.get("a"), Some(3));
        assert_eq!(v.get("b"), None);
        assert_eq!(v.id("b"), Vocabulary::UNK_ID);
    }

    #[test]
    fn ties_break_lexicographically() {
        let f = corpus("zeta alpha mid\n");
        let v = build_vocabulary(&[f.path()], 1).unwrap();
        assert_eq!(&v.words()[3..], &["alpha", "mid", "zeta"]);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let f = corpus("\n  \n");
        assert!(matches!(build_vocabulary(&[f.path()], 1), Err(Error::Data(_))));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let r = build_vocabulary(&["/nonexistent/corpus.txt"], 1);
        assert!(matches!(r, Err(Error::Io { .. })));
    }

    #[test]
    fn hundred_sentence_builds_are_identical() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let words = ["the", "cat", "dog", "saw", "ran", "a", "big", "red", "x", "y"];
        let mut text = String::new();
        for _ in 0..100 {
            let n = rng.random_range(3..12);
            let s: Vec<&str> = (0..n).map(|_| words[rng.random_range(0..words.len())]).collect();
            text.push_str(&s.join(" "));
            text.push('\n');
        }
        let f = corpus(&text);
        let a = build_vocabulary(&[f.path()], 1).unwrap();
        let b = build_vocabulary(&[f.path()], 1).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn serde_round_trip_preserves_ids() {
        let v = Vocabulary::from_sentences([&["x", "y", "y"][..]], 1);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(v, back);
        assert_eq!(back.id("y"), v.id("y"));
    }
}
