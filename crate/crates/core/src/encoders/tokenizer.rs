//! Byte-level fallback tokenizer sharing the CLIP id layout.
//!
//! Id space (49,408 ids):
//! * `0..256`: raw byte pieces inside a word,
//! * `256..512`: raw byte pieces that end a word,
//! * `512..`: whole-word entries from the built-in word list,
//! * `49,406`: start of text, `49,407`: end of text.

use std::collections::HashMap;

use regex::Regex;
use serde::{Deserialize, Serialize};

const WORDS: &str = include_str!("../../assets/words.txt");
const WORD_BASE: u32 = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerSpec {
    pub vocab_size: usize,
    pub start_id: u32,
    pub end_id: u32,
    pub context_length: usize,
}

impl Default for TokenizerSpec {
    fn default() -> Self {
        Self {
            vocab_size: 49_408,
            start_id: 49_406,
            end_id: 49_407,
            context_length: 77,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Tokenizer {
    spec: TokenizerSpec,
    word_ids: HashMap<String, u32>,
    words: Vec<String>,
    pattern: Regex,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Self::new()
    }
}

impl Tokenizer {
    pub fn new() -> Self {
        let mut words = Vec::new();
        let mut word_ids = HashMap::new();
        for line in WORDS.lines() {
            let w = line.trim().to_lowercase();
            if w.is_empty() || w.starts_with('#') || word_ids.contains_key(&w) {
                continue;
            }
            word_ids.insert(w.clone(), WORD_BASE + words.len() as u32);
            words.push(w);
        }
        let spec = TokenizerSpec::default();
        assert!(WORD_BASE as usize + words.len() < spec.start_id as usize);
        Self {
            spec,
            word_ids,
            words,
            pattern: Regex::new(r"'s|'t|'re|'ve|'m|'ll|'d|\p{L}+|\p{N}|[^\s\p{L}\p{N}]+")
                .expect("static pattern"),
        }
    }

    pub fn spec(&self) -> &TokenizerSpec {
        &self.spec
    }

    pub fn start_id(&self) -> u32 {
        self.spec.start_id
    }

    pub fn end_id(&self) -> u32 {
        self.spec.end_id
    }

    /// Id of a whole-word entry, if the word is in the built-in list.
    pub fn word_id(&self, word: &str) -> Option<u32> {
        self.word_ids.get(&word.to_lowercase()).copied()
    }

    /// Tokens of `text` without start/end markers and without truncation.
    pub fn encode_pieces(&self, text: &str) -> Vec<u32> {
        let text = text.to_lowercase();
        let mut ids = Vec::new();
        for m in self.pattern.find_iter(&text) {
            let piece = m.as_str();
            if let Some(&id) = self.word_ids.get(piece) {
                ids.push(id);
                continue;
            }
            let bytes = piece.as_bytes();
            for (i, &b) in bytes.iter().enumerate() {
                let end = i + 1 == bytes.len();
                ids.push(b as u32 + if end { 256 } else { 0 });
            }
        }
        ids
    }

    /// `[start] + pieces + [end]`, truncated so the result fits the context
    /// while always keeping the end marker.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        let mut pieces = self.encode_pieces(text);
        pieces.truncate(self.spec.context_length - 2);
        let mut ids = Vec::with_capacity(pieces.len() + 2);
        ids.push(self.spec.start_id);
        ids.extend(pieces);
        ids.push(self.spec.end_id);
        ids
    }

    /// Text of a single base-vocabulary id, `None` for specials and unused ids.
    pub fn piece(&self, id: u32) -> Option<String> {
        match id {
            0..=255 => Some(String::from_utf8_lossy(&[id as u8]).into_owned()),
            256..=511 => Some(String::from_utf8_lossy(&[(id - 256) as u8]).into_owned()),
            _ => self
                .words
                .get((id - WORD_BASE) as usize)
                .cloned(),
        }
    }

    /// Best-effort inverse of [`encode_pieces`](Self::encode_pieces); specials are skipped.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut words: Vec<String> = Vec::new();
        let mut pending: Vec<u8> = Vec::new();
        for &id in ids {
            match id {
                0..=255 => pending.push(id as u8),
                256..=511 => {
                    pending.push((id - 256) as u8);
                    words.push(String::from_utf8_lossy(&pending).into_owned());
                    pending.clear();
                }
                _ => {
                    if !pending.is_empty() {
                        words.push(String::from_utf8_lossy(&pending).into_owned());
                        pending.clear();
                    }
                    if let Some(w) = self.words.get(id.wrapping_sub(WORD_BASE) as usize) {
                        words.push(w.clone());
                    }
                }
            }
        }
        if !pending.is_empty() {
            words.push(String::from_utf8_lossy(&pending).into_owned());
        }
        words.join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_text_is_start_end() {
        let t = Tokenizer::new();
        assert_eq!(t.tokenize(""), vec![49_406, 49_407]);
    }

    #[test]
    fn end_id_is_last_vocab_id() {
        let spec = TokenizerSpec::default();
        assert_eq!(spec.end_id as usize, spec.vocab_size - 1);
    }

    #[test]
    fn known_words_are_single_tokens() {
        let t = Tokenizer::new();
        let ids = t.encode_pieces("The walking SPEED is");
        assert_eq!(ids.len(), 4);
        assert_eq!(ids[3], t.word_id("is").unwrap());
        assert_eq!(t.decode(&ids), "the walking speed is");
    }

    #[test]
    fn unknown_words_fall_back_to_bytes() {
        let t = Tokenizer::new();
        let ids = t.encode_pieces("zq 1.2");
        assert_eq!(ids, vec![b'z' as u32, b'q' as u32 + 256, b'1' as u32 + 256, b'.' as u32 + 256, b'2' as u32 + 256]);
        assert_eq!(t.decode(&ids), "zq 1 . 2");
    }

    #[test]
    fn long_text_truncates_but_keeps_end() {
        let t = Tokenizer::new();
        let text = "gait ".repeat(200);
        let ids = t.tokenize(&text);
        assert_eq!(ids.len(), 77);
        assert_eq!(*ids.last().unwrap(), 49_407);
    }

    proptest! {
        #[test]
        fn tokenize_contract(text in "\\PC{0,300}") {
            let t = Tokenizer::new();
            let a = t.tokenize(&text);
            let b = t.tokenize(&text);
            prop_assert_eq!(&a, &b);
            prop_assert!(a.len() <= 77);
            prop_assert_eq!(a[0], 49_406);
            prop_assert_eq!(*a.last().unwrap(), 49_407);
            prop_assert!(a.iter().all(|&id| (id as usize) < 49_408));
        }
    }
}
