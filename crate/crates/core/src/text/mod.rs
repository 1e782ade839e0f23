//! Vocabulary, tokenization and fixed-length subtitle encoding.

mod rnn;

pub use rnn::{greedy_decode, gru_encode, lstm_decode_nll, GruParams, LstmParams};

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const START: usize = 1;
pub const END: usize = 2;
pub const UNK: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<start>", "<end>", "<unk>"];

/// Word ↔ dense id map with four reserved ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    word_to_id: BTreeMap<String, usize>,
    id_to_word: Vec<String>,
}

impl Vocabulary {
    /// Deterministic construction: words with count >= min_count, ids
    /// assigned by (count descending, word ascending) after the reserved ids.
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a str>, min_count: usize) -> Result<Self> {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut any = false;
        for sentence in corpus {
            any = true;
            for tok in tokenize(sentence) {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
        if !any {
            return Err(Error::InvalidArg("cannot build a vocabulary from an empty corpus".into()));
        }
        let mut kept: Vec<(String, usize)> =
            counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut id_to_word: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        id_to_word.extend(kept.into_iter().map(|(w, _)| w));
        let word_to_id = id_to_word
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Ok(Vocabulary { word_to_id, id_to_word })
    }

    pub fn len(&self) -> usize {
        self.id_to_word.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, word: &str) -> usize {
        self.word_to_id.get(word).copied().unwrap_or(UNK)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.id_to_word[id]
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.word_to_id
                .iter()
                .map(|(w, &i)| (w.clone(), serde_json::json!(i)))
                .collect(),
        )
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let map = value
            .as_object()
            .ok_or_else(|| Error::InvalidArg("vocabulary JSON must be an object".into()))?;
        let mut id_to_word = vec![String::new(); map.len()];
        let mut word_to_id = BTreeMap::new();
        for (word, id) in map {
            let id = id
                .as_u64()
                .ok_or_else(|| Error::InvalidArg(format!("bad id for word {word:?}")))?
                as usize;
            if id >= id_to_word.len() || !id_to_word[id].is_empty() {
                return Err(Error::InvalidArg(format!("ids not dense at word {word:?}")));
            }
            id_to_word[id] = word.clone();
            word_to_id.insert(word.clone(), id);
        }
        for (i, reserved) in RESERVED.iter().enumerate() {
            if id_to_word.get(i).map(String::as_str) != Some(*reserved) {
                return Err(Error::InvalidArg(format!("reserved id {i} must be {reserved:?}")));
            }
        }
        Ok(Vocabulary { word_to_id, id_to_word })
    }
}

/// Lowercase and split on any non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|ch: char| !ch.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Fixed-length token buffer: `len` real positions (the last of which is End
/// whenever the sentence fit), Pad beyond.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSeq {
    pub ids: Vec<usize>,
    pub len: usize,
}

/// Tokenize, map to ids, truncate to m-1 content tokens, append End, pad to m.
/// Start is supplied by the decoder at decode time, never stored.
pub fn encode_subtitle(text: &str, vocab: &Vocabulary, m: usize) -> TokenSeq {
    let mut ids: Vec<usize> = tokenize(text)
        .iter()
        .take(m.saturating_sub(1))
        .map(|t| vocab.id(t))
        .collect();
    ids.push(END);
    let len = ids.len();
    ids.resize(m, PAD);
    TokenSeq { ids, len }
}
