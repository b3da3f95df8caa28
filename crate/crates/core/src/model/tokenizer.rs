//! Byte-span preserving tokenizers.
//!
//! Every token records the byte range it covers, so identifier occurrences
//! found by the parser can be mapped onto token indices and back.
//!
//! [`VocabTokenizer`] splits text into pieces first (identifier words, digit
//! runs, punctuation runs, whitespace runs; a single space directly before a
//! non-space piece is merged into it, as GPT-2 style tokenizers do) and then
//! encodes each piece greedily by longest vocabulary match. The 256 single
//! bytes are always in the vocabulary, so encoding never fails. Encoding a
//! piece never looks outside it.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use super::vocab;
use super::ModelError;

pub type TokenId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub id: TokenId,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn span(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

pub trait Tokenizer: Send + Sync {
    /// Stable identifier, recorded in manifests and checked at detection.
    fn id(&self) -> &str;
    fn vocab_size(&self) -> usize;
    fn encode(&self, text: &[u8]) -> Vec<Token>;
    /// Raw bytes a token decodes to.
    fn token_bytes(&self, id: TokenId) -> &[u8];
    /// Exact vocabulary lookup.
    fn lookup(&self, bytes: &[u8]) -> Option<TokenId>;

    fn token_text(&self, id: TokenId) -> String {
        String::from_utf8_lossy(self.token_bytes(id)).into_owned()
    }

    fn ids(&self, text: &[u8]) -> Vec<TokenId> {
        self.encode(text).into_iter().map(|t| t.id).collect()
    }
}

pub const BUILTIN_TOKENIZER_ID: &str = "builtin:code-v1";

/// Greedy longest-match tokenizer over an explicit vocabulary.
pub struct VocabTokenizer {
    id: String,
    tokens: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, TokenId>,
    max_len: usize,
}

impl std::fmt::Debug for VocabTokenizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VocabTokenizer")
            .field("id", &self.id)
            .field("vocab_size", &self.tokens.len())
            .finish()
    }
}

impl VocabTokenizer {
    /// Builds a tokenizer whose ids `0..256` are the single bytes, followed by
    /// `entries` in order. Duplicates and empty entries are skipped.
    pub fn new<I, S>(id: impl Into<String>, entries: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        let mut index: HashMap<Vec<u8>, TokenId> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        for entry in entries {
            let bytes = entry.as_ref();
            if bytes.is_empty() || index.contains_key(bytes) {
                continue;
            }
            index.insert(bytes.to_vec(), tokens.len() as TokenId);
            tokens.push(bytes.to_vec());
        }
        let max_len = tokens.iter().map(Vec::len).max().unwrap_or(1);
        Self {
            id: id.into(),
            tokens,
            index,
            max_len,
        }
    }

    /// The built-in code vocabulary used by the mock providers.
    pub fn builtin() -> Arc<VocabTokenizer> {
        static BUILTIN: OnceLock<Arc<VocabTokenizer>> = OnceLock::new();
        BUILTIN
            .get_or_init(|| Arc::new(VocabTokenizer::new(BUILTIN_TOKENIZER_ID, vocab::builtin_entries())))
            .clone()
    }

    /// Loads a vocabulary from a JSON array of token strings. The tokenizer
    /// id is `vocab:<sha256 of the file>` so a changed file is detected.
    pub fn from_vocab_file(path: &Path) -> Result<Self, ModelError> {
        let raw = std::fs::read(path).map_err(|e| {
            ModelError::Config(format!("cannot read vocabulary {}: {e}", path.display()))
        })?;
        let entries: Vec<String> = serde_json::from_slice(&raw).map_err(|e| {
            ModelError::Config(format!("vocabulary {} is not a JSON string array: {e}", path.display()))
        })?;
        let id = format!("vocab:{}", crate::hash::sha256_hex(&raw));
        Ok(Self::new(id, entries))
    }

    fn encode_piece(&self, text: &[u8], start: usize, end: usize, out: &mut Vec<Token>) {
        let mut pos = start;
        while pos < end {
            let longest = self.max_len.min(end - pos);
            let (len, id) = (1..=longest)
                .rev()
                .find_map(|len| self.index.get(&text[pos..pos + len]).map(|&id| (len, id)))
                .expect("single bytes are always in the vocabulary");
            out.push(Token {
                id,
                start: pos,
                end: pos + len,
            });
            pos += len;
        }
    }
}

impl Tokenizer for VocabTokenizer {
    fn id(&self) -> &str {
        &self.id
    }

    fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    fn encode(&self, text: &[u8]) -> Vec<Token> {
        let mut out = Vec::with_capacity(text.len() / 3 + 1);
        for (start, end) in pieces(text) {
            self.encode_piece(text, start, end, &mut out);
        }
        out
    }

    fn token_bytes(&self, id: TokenId) -> &[u8] {
        &self.tokens[id as usize]
    }

    fn lookup(&self, bytes: &[u8]) -> Option<TokenId> {
        self.index.get(bytes).copied()
    }
}

fn is_word_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_'
}

fn is_word(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

fn is_space(b: u8) -> bool {
    b.is_ascii_whitespace()
}

/// End of the non-space unit starting at `i`.
fn unit_end(text: &[u8], i: usize) -> usize {
    let b = text[i];
    let pred: fn(u8) -> bool = if is_word_start(b) {
        is_word
    } else if b.is_ascii_digit() {
        |c| c.is_ascii_digit()
    } else {
        |c| !is_space(c) && !is_word(c)
    };
    let mut j = i + 1;
    while j < text.len() && pred(text[j]) {
        j += 1;
    }
    j
}

/// Pre-tokenization into `(start, end)` pieces covering `text` exactly.
pub fn pieces(text: &[u8]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < text.len() {
        let b = text[i];
        if !is_space(b) {
            let j = unit_end(text, i);
            out.push((i, j));
            i = j;
        } else if b == b' ' && i + 1 < text.len() && !is_space(text[i + 1]) {
            let j = unit_end(text, i + 1);
            out.push((i, j));
            i = j;
        } else {
            let mut j = i + 1;
            while j < text.len() && is_space(text[j]) {
                j += 1;
            }
            // Leave a trailing space to merge into the following piece.
            if j < text.len() && text[j - 1] == b' ' && j - 1 > i {
                j -= 1;
            }
            out.push((i, j));
            i = j;
        }
    }
    out
}
