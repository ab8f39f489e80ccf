//! Corpus, experimental-item and reading-time ingestion.

mod freq;
mod items;
mod rts;
mod supertag;
mod vocab;

use std::path::Path;

pub use freq::{build_frequency_table, FrequencyTable, WordFrequencies};
pub use items::{load_items, validate_pairs, write_items, Condition, Construction, ExperimentalItem};
pub use rts::{load_rts, validate_rts, write_rts, RtObservation};
pub use supertag::{
    format_supertag_tsv, load_supertag_corpus, load_supertag_corpus_with, supertag_file_words,
    SupertaggedCorpus, TagId, TagInventory, TaggedSentence, DEFAULT_MAX_SENTENCE_LEN,
};
pub use vocab::{build_vocabulary, count_tokens, read_corpus, Vocabulary, WordId, BOS, EOS, UNK};

use crate::error::{Error, Result};

pub(crate) fn read_text(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(format!("{}: not UTF-8: {e}", path.display())))
}
