//! Corpus ingestion, tokenization, vocabulary construction and the on-disk
//! formats shared by every other module.

mod formats;

pub use formats::*;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One corpus entry. `sentences` holds vocabulary indices and is empty until
/// [`index_document`] (or [`index_corpus`]) has run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip)]
    pub sentences: Vec<Vec<usize>>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            label: None,
            sentences: Vec::new(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// All in-vocabulary tokens in reading order.
    pub fn tokens(&self) -> impl Iterator<Item = usize> + '_ {
        self.sentences.iter().flatten().copied()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }
}

/// A word transform applied after lowercasing and stopword removal.
pub trait Stemmer: Send + Sync {
    fn name(&self) -> &str;
    fn stem(&self, word: &str) -> String;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct IdentityStemmer;

impl Stemmer for IdentityStemmer {
    fn name(&self) -> &str {
        "identity"
    }

    fn stem(&self, word: &str) -> String {
        word.to_string()
    }
}

/// Strips a plural `s` from words longer than three characters, leaving
/// `ss`, `us` and `is` endings alone.
#[derive(Debug, Default, Clone, Copy)]
pub struct PluralStemmer;

impl Stemmer for PluralStemmer {
    fn name(&self) -> &str {
        "plural"
    }

    fn stem(&self, word: &str) -> String {
        if word.len() > 3
            && word.ends_with('s')
            && !(word.ends_with("ss") || word.ends_with("us") || word.ends_with("is"))
        {
            word[..word.len() - 1].to_string()
        } else {
            word.to_string()
        }
    }
}

/// Looks up a built-in stemmer by name.
pub fn stemmer_by_name(name: &str) -> Result<Arc<dyn Stemmer>> {
    match name {
        "identity" | "none" => Ok(Arc::new(IdentityStemmer)),
        "plural" => Ok(Arc::new(PluralStemmer)),
        other => Err(Error::param(format!("unknown stemmer '{other}'"))),
    }
}

#[derive(Clone)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub stopwords: HashSet<String>,
    pub max_vocab: usize,
    pub stemmer: Arc<dyn Stemmer>,
}

impl fmt::Debug for TokenizerConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TokenizerConfig")
            .field("lowercase", &self.lowercase)
            .field("stopwords", &self.stopwords.len())
            .field("max_vocab", &self.max_vocab)
            .field("stemmer", &self.stemmer.name())
            .finish()
    }
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            lowercase: true,
            stopwords: HashSet::new(),
            max_vocab: 20_000,
            stemmer: Arc::new(IdentityStemmer),
        }
    }
}

impl TokenizerConfig {
    pub fn with_stopwords<I, S>(mut self, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.stopwords = words.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_max_vocab(mut self, max_vocab: usize) -> Self {
        self.max_vocab = max_vocab;
        self
    }

    pub fn with_stemmer(mut self, stemmer: Arc<dyn Stemmer>) -> Self {
        self.stemmer = stemmer;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_vocab == 0 {
            return Err(Error::param("max vocabulary size must be at least 1"));
        }
        Ok(())
    }

    fn transform(&self, raw: &str) -> Option<String> {
        let trimmed = raw.trim_matches(|c: char| !c.is_alphanumeric());
        if trimmed.is_empty() {
            return None;
        }
        let word = if self.lowercase {
            trimmed.to_lowercase()
        } else {
            trimmed.to_string()
        };
        if self.stopwords.contains(&word) {
            return None;
        }
        let stemmed = self.stemmer.stem(&word);
        (!stemmed.is_empty()).then_some(stemmed)
    }
}

/// Splits on `.`, `!` and `?`, then on whitespace. Surrounding punctuation is
/// trimmed from each token; sentences left empty are dropped.
pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<Vec<String>> {
    text.split(['.', '!', '?'])
        .map(|sentence| {
            sentence
                .split_whitespace()
                .filter_map(|tok| config.transform(tok))
                .collect::<Vec<_>>()
        })
        .filter(|s| !s.is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    words: Vec<String>,
    df: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from an ordered word list with per-word DFs.
    pub fn from_entries(entries: Vec<(String, u64)>) -> Result<Self> {
        let mut words = Vec::with_capacity(entries.len());
        let mut df = Vec::with_capacity(entries.len());
        let mut index = HashMap::with_capacity(entries.len());
        for (i, (word, count)) in entries.into_iter().enumerate() {
            if count == 0 {
                return Err(Error::param(format!("word '{word}' has document frequency 0")));
            }
            if index.insert(word.clone(), i).is_some() {
                return Err(Error::param(format!("duplicate vocabulary word '{word}'")));
            }
            words.push(word);
            df.push(count);
        }
        Ok(Vocabulary { words, df, index })
    }

    /// A vocabulary with DF 1 for every word, in the given order.
    pub fn from_words<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::from_entries(words.into_iter().map(|w| (w.into(), 1)).collect())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, index: usize) -> Option<&str> {
        self.words.get(index).map(String::as_str)
    }

    pub fn df(&self, index: usize) -> Option<u64> {
        self.df.get(index).copied()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &str, u64)> + '_ {
        self.words
            .iter()
            .zip(&self.df)
            .enumerate()
            .map(|(i, (w, &df))| (i, w.as_str(), df))
    }
}

/// Ranks words by document frequency (descending, ties lexicographic) and
/// keeps the top `config.max_vocab`.
pub fn build_vocabulary(corpus: &[Document], config: &TokenizerConfig) -> Result<Vocabulary> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let mut df: BTreeMap<String, u64> = BTreeMap::new();
    for doc in corpus {
        let distinct: HashSet<String> = tokenize(&doc.text, config).into_iter().flatten().collect();
        for word in distinct {
            *df.entry(word).or_insert(0) += 1;
        }
    }
    if df.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let mut ranked: Vec<(String, u64)> = df.into_iter().collect();
    // BTreeMap order already gives the lexical tie-break; a stable sort keeps it.
    ranked.sort_by_key(|e| std::cmp::Reverse(e.1));
    ranked.truncate(config.max_vocab);
    Vocabulary::from_entries(ranked)
}

/// Fills `doc.sentences` with vocabulary indices. Out-of-vocabulary tokens
/// are dropped; sentences keep their slot even when they end up empty.
pub fn index_document(doc: &mut Document, vocab: &Vocabulary, config: &TokenizerConfig) {
    doc.sentences = tokenize(&doc.text, config)
        .into_iter()
        .map(|sentence| sentence.iter().filter_map(|w| vocab.index_of(w)).collect())
        .collect();
}

pub fn index_corpus(corpus: &mut [Document], vocab: &Vocabulary, config: &TokenizerConfig) {
    use rayon::prelude::*;
    corpus
        .par_iter_mut()
        .for_each(|doc| index_document(doc, vocab, config));
}
