use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::read_text;
use super::vocab::{Vocabulary, WordId};
use crate::error::{Error, Result};

pub type TagId = usize;

pub const DEFAULT_MAX_SENTENCE_LEN: usize = 256;

/// Closed supertag inventory. There is no UNK tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct TagInventory {
    tag_to_id: HashMap<String, TagId>,
    id_to_tag: Vec<String>,
}

impl From<Vec<String>> for TagInventory {
    fn from(id_to_tag: Vec<String>) -> Self {
        let tag_to_id = id_to_tag
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        TagInventory {
            tag_to_id,
            id_to_tag,
        }
    }
}

impl From<TagInventory> for Vec<String> {
    fn from(t: TagInventory) -> Self {
        t.id_to_tag
    }
}

impl TagInventory {
    /// Inventory ordered by descending count, ties broken lexicographically.
    pub fn from_counts(counts: &HashMap<String, u64>) -> Self {
        let mut tags: Vec<(&String, u64)> = counts.iter().map(|(t, &c)| (t, c)).collect();
        tags.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        tags.into_iter()
            .map(|(t, _)| t.clone())
            .collect::<Vec<_>>()
            .into()
    }

    pub fn len(&self) -> usize {
        self.id_to_tag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_tag.is_empty()
    }

    pub fn get(&self, tag: &str) -> Option<TagId> {
        self.tag_to_id.get(tag).copied()
    }

    pub fn tag(&self, id: TagId) -> Option<&str> {
        self.id_to_tag.get(id).map(String::as_str)
    }

    pub fn tags(&self) -> &[String] {
        &self.id_to_tag
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    pub words: Vec<WordId>,
    pub tags: Vec<TagId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupertaggedCorpus {
    pub sentences: Vec<TaggedSentence>,
    pub source: PathBuf,
    pub word_counts: Vec<u64>,
    pub tag_counts: Vec<u64>,
}

impl SupertaggedCorpus {
    pub fn from_sentences(
        sentences: Vec<TaggedSentence>,
        vocab_size: usize,
        tag_count: usize,
        source: PathBuf,
    ) -> Result<Self> {
        let mut word_counts = vec![0u64; vocab_size];
        let mut tag_counts = vec![0u64; tag_count];
        for (i, s) in sentences.iter().enumerate() {
            if s.words.len() != s.tags.len() {
                return Err(Error::Data(format!(
                    "sentence {i}: {} tokens but {} tags",
                    s.words.len(),
                    s.tags.len()
                )));
            }
            for (&w, &t) in s.words.iter().zip(&s.tags) {
                if w >= vocab_size || t >= tag_count {
                    return Err(Error::Data(format!("sentence {i}: id out of range")));
                }
                word_counts[w] += 1;
                tag_counts[t] += 1;
            }
        }
        Ok(SupertaggedCorpus {
            sentences,
            source,
            word_counts,
            tag_counts,
        })
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.words.len()).sum()
    }
}

type RawSentence = Vec<(String, String)>;

fn parse_tsv(path: &Path, max_len: usize) -> Result<Vec<RawSentence>> {
    let text = read_text(path)?;
    let mut sentences = Vec::new();
    let mut current: RawSentence = Vec::new();
    let mut start_line = 1;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            if !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
            start_line = lineno + 1;
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected 2 tab-separated fields, found {}", fields.len()),
            ));
        }
        let word = fields[0].trim();
        let tag = fields[1].trim();
        if word.is_empty() {
            return Err(Error::parse(path, lineno, "empty word"));
        }
        if tag.is_empty() {
            return Err(Error::parse(path, lineno, "empty tag"));
        }
        current.push((word.to_string(), tag.to_string()));
        if current.len() > max_len {
            return Err(Error::parse(
                path,
                start_line,
                format!("sentence exceeds maximum length {max_len}"),
            ));
        }
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    Ok(sentences)
}

fn encode(
    raw: Vec<RawSentence>,
    vocab: &Vocabulary,
    tags: &TagInventory,
    path: &Path,
) -> Result<SupertaggedCorpus> {
    let mut sentences = Vec::with_capacity(raw.len());
    for s in raw {
        let mut words = Vec::with_capacity(s.len());
        let mut tag_ids = Vec::with_capacity(s.len());
        for (w, t) in s {
            words.push(vocab.id(&w));
            let id = tags
                .get(&t)
                .ok_or_else(|| Error::Data(format!("{}: unknown supertag {t:?}", path.display())))?;
            tag_ids.push(id);
        }
        sentences.push(TaggedSentence {
            words,
            tags: tag_ids,
        });
    }
    SupertaggedCorpus::from_sentences(sentences, vocab.len(), tags.len(), path.to_path_buf())
}

/// Load a `word<TAB>tag` file, building the tag inventory from it.
pub fn load_supertag_corpus(
    path: &Path,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<(SupertaggedCorpus, TagInventory)> {
    let raw = parse_tsv(path, max_len)?;
    if raw.is_empty() {
        return Err(Error::Data(format!("{}: no sentences", path.display())));
    }
    let mut counts = HashMap::new();
    for s in &raw {
        for (_, t) in s {
            *counts.entry(t.clone()).or_insert(0) += 1;
        }
    }
    let tags = TagInventory::from_counts(&counts);
    let corpus = encode(raw, vocab, &tags, path)?;
    Ok((corpus, tags))
}

/// Load a `word<TAB>tag` file against a fixed inventory; unseen tags are an error.
pub fn load_supertag_corpus_with(
    path: &Path,
    vocab: &Vocabulary,
    tags: &TagInventory,
    max_len: usize,
) -> Result<SupertaggedCorpus> {
    let raw = parse_tsv(path, max_len)?;
    encode(raw, vocab, tags, path)
}

/// Words of each sentence in a supertag file, for vocabulary building.
pub fn supertag_file_words(path: &Path) -> Result<Vec<Vec<String>>> {
    Ok(parse_tsv(path, usize::MAX)?
        .into_iter()
        .map(|s| s.into_iter().map(|(w, _)| w).collect())
        .collect())
}

pub fn format_supertag_tsv<S: AsRef<str>, T: AsRef<str>>(sentences: &[(Vec<S>, Vec<T>)]) -> String {
    let mut out = String::new();
    for (words, tags) in sentences {
        for (w, t) in words.iter().zip(tags) {
            let _ = writeln!(out, "{}\t{}", w.as_ref(), t.as_ref());
        }
        out.push('\n');
    }
    out
}
