use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD_TOKEN: &str = "<PAD>";
pub const PAD_INDEX: usize = 0;

/// Lowercases and splits on whitespace and punctuation (anything that is not
/// alphanumeric).
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_lowercase).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledText {
    pub label: u8,
    pub text: String,
}

impl LabeledText {
    pub fn new(label: u8, text: impl Into<String>) -> Self {
        Self { label, text: text.into() }
    }
}

/// Word list with `<PAD>` at index 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        if words.first().map(String::as_str) != Some(PAD_TOKEN) {
            return Err(Error::Format(format!("vocabulary must start with {PAD_TOKEN}")));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if w.is_empty() {
                return Err(Error::Format(format!("empty word at index {i}")));
            }
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate word `{w}`")));
            }
        }
        Ok(Self { words, index })
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

    pub fn word(&self, i: usize) -> Option<&str> {
        self.words.get(i).map(String::as_str)
    }

    /// Index of `word`; unknown words map to the pad index.
    pub fn index_of(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(PAD_INDEX)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// One word per line, line number = index.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for w in &self.words {
            let _ = writeln!(out, "{w}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_words(text.lines().map(str::to_owned).collect())
    }
}

/// All distinct tokens of the corpus in first-occurrence order, after `<PAD>`.
pub fn build_vocabulary(corpus: &[LabeledText]) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut words = vec![PAD_TOKEN.to_owned()];
    let mut index = HashMap::from([(PAD_TOKEN.to_owned(), PAD_INDEX)]);
    for doc in corpus {
        for w in tokenize(&doc.text) {
            if !index.contains_key(&w) {
                index.insert(w.clone(), words.len());
                words.push(w);
            }
        }
    }
    Ok(Vocabulary { words, index })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Review {
    pub word_indices: Vec<usize>,
    pub label: u8,
}

/// Tokenizes, truncates to `n` words and right-pads with `<PAD>`. The label is 0.
pub fn encode_review(text: &str, vocab: &Vocabulary, n: usize) -> Review {
    let mut word_indices: Vec<usize> = tokenize(text).iter().take(n).map(|w| vocab.index_of(w)).collect();
    word_indices.resize(n, PAD_INDEX);
    Review { word_indices, label: 0 }
}

/// The non-pad words of a review.
pub fn decode_review<'a>(review: &Review, vocab: &'a Vocabulary) -> Vec<&'a str> {
    review.word_indices.iter().filter(|&&i| i != PAD_INDEX).filter_map(|&i| vocab.word(i)).collect()
}

pub fn encode_dataset(data: &[LabeledText], vocab: &Vocabulary, n: usize) -> Vec<Review> {
    data.iter().map(|t| Review { label: t.label, ..encode_review(&t.text, vocab, n) }).collect()
}

/// `label<TAB>text` per line, label 0 or 1. Blank lines are skipped.
pub fn parse_dataset(text: &str) -> Result<Vec<LabeledText>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (label, body) = line
            .split_once('\t')
            .ok_or_else(|| Error::Format(format!("line {}: expected `label<TAB>text`", lineno + 1)))?;
        let label = match label.trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(Error::Format(format!("line {}: label must be 0 or 1, got `{other}`", lineno + 1))),
        };
        out.push(LabeledText::new(label, body));
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

pub fn dataset_tsv(data: &[LabeledText]) -> String {
    let mut out = String::new();
    for t in data {
        let _ = writeln!(out, "{}\t{}", t.label, t.text.replace(['\t', '\n', '\r'], " "));
    }
    out
}
