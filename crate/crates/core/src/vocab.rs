//! Word ↔ id mapping shared by the n-gram and recurrent language models.

use std::collections::{BTreeMap, HashMap};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

pub type WordId = u32;

pub const BOS_ID: WordId = 0;
pub const EOS_ID: WordId = 1;
pub const UNK_ID: WordId = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, WordId>,
}

impl Vocab {
    /// Keeps every word seen at least `min_count` times; the rest map to `<unk>`.
    /// Ids after the three reserved symbols follow lexicographic order.
    pub fn build<S: AsRef<str>>(sentences: &[Vec<S>], min_count: usize) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for s in sentences {
            for w in s {
                *counts.entry(w.as_ref()).or_default() += 1;
            }
        }
        let kept = counts.into_iter().filter(|(w, c)| *c >= min_count && !is_reserved(w)).map(|(w, _)| w.to_string());
        Self::from_words(kept)
    }

    /// Reserved symbols are prepended; `words` must not contain them.
    pub fn from_words(words: impl IntoIterator<Item = String>) -> Self {
        let mut all = vec![BOS.to_string(), EOS.to_string(), UNK.to_string()];
        all.extend(words);
        let index = all.iter().enumerate().map(|(i, w)| (w.clone(), i as WordId)).collect();
        Self { words: all, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, word: &str) -> WordId {
        self.index.get(word).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn word(&self, id: WordId) -> &str {
        &self.words[id as usize]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn encode<S: AsRef<str>>(&self, sentence: &[S]) -> Vec<WordId> {
        sentence.iter().map(|w| self.id(w.as_ref())).collect()
    }
}

fn is_reserved(w: &str) -> bool {
    w == BOS || w == EOS || w == UNK
}
