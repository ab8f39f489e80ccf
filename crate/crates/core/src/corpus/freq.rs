use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::vocab::{read_corpus, Vocabulary, WordId};
use crate::error::{Error, Result};

/// Unigram counts per vocabulary id; out-of-vocabulary mass sits on UNK.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyTable {
    counts: Vec<u64>,
    total: u64,
}

impl FrequencyTable {
    pub fn from_sentences<'a, I, S>(sentences: I, vocab: &Vocabulary) -> Self
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut counts = vec![0u64; vocab.len()];
        let mut total = 0;
        for s in sentences {
            for tok in s {
                counts[vocab.id(tok.as_ref())] += 1;
                total += 1;
            }
        }
        FrequencyTable { counts, total }
    }

    pub fn count(&self, id: WordId) -> u64 {
        self.counts.get(id).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Add-one smoothed natural-log relative frequency.
    pub fn log_frequency(&self, id: WordId) -> f64 {
        let v = self.counts.len() as f64;
        ((self.count(id) as f64 + 1.0) / (self.total as f64 + v)).ln()
    }
}

pub fn build_frequency_table<P: AsRef<Path>>(corpus_paths: &[P], vocab: &Vocabulary) -> Result<FrequencyTable> {
    let mut sentences = Vec::new();
    for p in corpus_paths {
        sentences.extend(read_corpus(p.as_ref())?);
    }
    let table = FrequencyTable::from_sentences(sentences.iter().map(Vec::as_slice), vocab);
    if table.total == 0 {
        return Err(Error::Data("corpus contains no tokens".into()));
    }
    Ok(table)
}

/// Frequencies looked up by word string. Built from a vocabulary and its
/// table, or read back from a `word,count` CSV written by [`Self::write_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct WordFrequencies {
    words: Vec<(String, u64)>,
    index: HashMap<String, usize>,
    total: u64,
}

impl WordFrequencies {
    pub fn new(vocab: &Vocabulary, table: &FrequencyTable) -> Self {
        Self::from_pairs(vocab.words().iter().cloned().zip(table.counts().iter().copied()).collect())
    }

    fn from_pairs(words: Vec<(String, u64)>) -> Self {
        let index = words.iter().enumerate().map(|(i, (w, _))| (w.clone(), i)).collect();
        let total = words.iter().map(|(_, c)| c).sum();
        WordFrequencies { words, index, total }
    }

    pub fn count(&self, word: &str) -> u64 {
        self.index.get(word).map_or(0, |&i| self.words[i].1)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Add-one smoothed natural-log relative frequency. Words outside the
    /// table count as zero rather than inheriting the UNK mass.
    pub fn log_frequency(&self, word: &str) -> f64 {
        ((self.count(word) as f64 + 1.0) / (self.total as f64 + self.words.len() as f64)).ln()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["word", "count"])?;
        for (word, c) in &self.words {
            w.write_record([word.as_str(), &c.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut words = Vec::new();
        for row in rdr.deserialize::<(String, u64)>() {
            words.push(row?);
        }
        if words.is_empty() {
            return Err(Error::Data(format!("{}: frequency table is empty", path.display())));
        }
        Ok(Self::from_pairs(words))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn counts_and_total() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(b"a a b\n").unwrap();
        let v = Vocabulary::from_sentences([&["a", "b"][..]], 1);
        let t = build_frequency_table(&[f.path()], &v).unwrap();
        assert_eq!(t.count(v.id("a")), 2);
        assert_eq!(t.count(v.id("b")), 1);
        assert_eq!(t.total(), 3);
    }

    #[test]
    fn unseen_word_log_frequency_is_add_one() {
        let v = Vocabulary::from_sentences([&["a", "b", "c"][..]], 1);
        let t = FrequencyTable::from_sentences([&["a", "a", "b"][..]], &v);
        let expected = (1.0 / (3.0 + v.len() as f64)).ln();
        assert_eq!(t.log_frequency(v.id("c")), expected);
    }

    #[test]
    fn oov_tokens_accumulate_on_unk() {
        let v = Vocabulary::from_sentences([&["a"][..]], 1);
        let t = FrequencyTable::from_sentences([&["a", "zz", "yy"][..]], &v);
        assert_eq!(t.count(Vocabulary::UNK_ID), 2);
        assert_eq!(t.counts().iter().sum::<u64>(), t.total());
    }

    #[test]
    fn matches_hash_map_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let words: Vec<String> = (0..30).map(|i| format!("w{i}")).collect();
        let sents: Vec<Vec<String>> = (0..200)
            .map(|_| (0..rng.random_range(1..15)).map(|_| words[rng.random_range(0..30)].clone()).collect())
            .collect();
        let v = Vocabulary::from_sentences(sents.iter().map(Vec::as_slice), 3);
        let t = FrequencyTable::from_sentences(sents.iter().map(Vec::as_slice), &v);

        let mut oracle: HashMap<&str, u64> = HashMap::new();
        for s in &sents {
            for w in s {
                *oracle.entry(w.as_str()).or_default() += 1;
            }
        }
        let mut unk = 0;
        for (w, c) in &oracle {
            match v.get(w) {
                Some(id) => assert_eq!(t.count(id), *c, "{w}"),
                None => unk += c,
            }
        }
        assert_eq!(t.count(Vocabulary::UNK_ID), unk);
        assert_eq!(t.total(), oracle.values().sum::<u64>());
    }

    #[test]
    fn word_frequencies_agree_with_table_and_round_trip() {
        let v = Vocabulary::from_sentences([&["a", "b", "c"][..]], 1);
        let t = FrequencyTable::from_sentences([&["a", "a", "b", "q"][..]], &v);
        let wf = WordFrequencies::new(&v, &t);
        for w in ["a", "b", "c"] {
            assert_eq!(wf.log_frequency(w), t.log_frequency(v.id(w)));
        }
        assert_eq!(wf.count("q"), 0);
        assert_eq!(wf.log_frequency("q"), (1.0 / (4.0 + v.len() as f64)).ln());
        let f = tempfile::NamedTempFile::new().unwrap();
        wf.write_csv(f.path()).unwrap();
        assert_eq!(WordFrequencies::load_csv(f.path()).unwrap(), wf);
    }
}
