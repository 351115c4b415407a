//! Code/comment pair loading, tokenization, vocabularies and padded batches.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;

const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// One code/comment record from a corpus file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPair {
    pub id: usize,
    pub code: String,
    pub comment: String,
}

/// Ordered lowercase tokens. Never contains an empty string.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn new(tokens: Vec<String>) -> Self {
        debug_assert!(tokens.iter().all(|t| !t.is_empty()));
        Self(tokens)
    }

    /// Whitespace-split an already tokenized line.
    pub fn from_whitespace(line: &str) -> Self {
        Self(line.split_whitespace().map(str::to_owned).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }

    pub fn join(&self) -> String {
        self.0.join(" ")
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSequence {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self(iter.into_iter().map(Into::into).collect())
    }
}

impl AsRef<[String]> for TokenSequence {
    fn as_ref(&self) -> &[String] {
        &self.0
    }
}

/// Result of [`load_corpus`]: the usable pairs and how many records were
/// dropped by preprocessing.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub pairs: Vec<RawPair>,
    pub skipped: usize,
}

#[derive(Deserialize)]
struct Record {
    code: String,
    comment: String,
}

/// Reads a JSON-lines corpus. Structurally invalid lines are errors; records
/// whose code or comment is empty after preprocessing are skipped and counted.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text)
}

pub fn parse_corpus(text: &str) -> Result<Corpus> {
    let mut corpus = Corpus::default();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(line).map_err(|e| Error::Format {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        if record.code.trim().is_empty() || tokenize_comment(&record.comment).is_err() {
            corpus.skipped += 1;
            continue;
        }
        corpus.pairs.push(RawPair {
            id: corpus.pairs.len(),
            code: record.code,
            comment: record.comment,
        });
    }
    Ok(corpus)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Upper,
    Lower,
    Digit,
}

fn classify(c: char) -> CharClass {
    if c.is_numeric() {
        CharClass::Digit
    } else if c.is_uppercase() {
        CharClass::Upper
    } else {
        CharClass::Lower
    }
}

/// Splits one alphanumeric run into lowercase subtokens at camelCase
/// boundaries. Digits stay attached to the subtoken before them.
fn split_identifier(word: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = word.chars().collect();
    let mut start = 0;
    for i in 1..chars.len() {
        let prev = classify(chars[i - 1]);
        let cur = classify(chars[i]);
        let boundary = match (prev, cur) {
            (CharClass::Lower, CharClass::Upper) | (CharClass::Digit, CharClass::Upper) => true,
            // "HTTPServer": the last capital of an acronym starts the next word.
            (CharClass::Upper, CharClass::Upper) => chars
                .get(i + 1)
                .is_some_and(|&n| classify(n) == CharClass::Lower),
            _ => false,
        };
        if boundary {
            out.push(chars[start..i].iter().collect::<String>().to_lowercase());
            start = i;
        }
    }
    if start < chars.len() {
        out.push(chars[start..].iter().collect::<String>().to_lowercase());
    }
}

pub fn tokenize_code(text: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            word.push(c);
            continue;
        }
        if !word.is_empty() {
            split_identifier(&word, &mut tokens);
            word.clear();
        }
        if !c.is_whitespace() && c != '_' {
            tokens.push(c.to_lowercase().collect());
        }
    }
    if !word.is_empty() {
        split_identifier(&word, &mut tokens);
    }
    TokenSequence(tokens)
}

/// Keeps the first sentence (terminator included), lowercases, and splits on
/// whitespace and punctuation.
pub fn tokenize_comment(text: &str) -> Result<TokenSequence> {
    let end = text
        .char_indices()
        .find(|(_, c)| matches!(c, '.' | '!' | '?'))
        .map_or(text.len(), |(i, c)| i + c.len_utf8());
    let sentence = text[..end].to_lowercase();

    let mut tokens = Vec::new();
    let mut word = String::new();
    for c in sentence.chars() {
        if c.is_alphanumeric() || c == '_' {
            word.push(c);
            continue;
        }
        if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
        }
        if !c.is_whitespace() {
            tokens.push(c.to_string());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    if tokens.is_empty() {
        return Err(Error::EmptyComment);
    }
    Ok(TokenSequence(tokens))
}

/// Token/index tables with the four reserved entries at fixed positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(Vec::new()).expect("reserved-only vocabulary")
    }
}

impl Vocabulary {
    /// Rebuilds a vocabulary from its serialized token list. The list may
    /// either start with the reserved tokens or omit them.
    pub fn from_tokens(list: Vec<String>) -> Result<Self> {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let body = if list.len() >= 4 && list[..4] == tokens[..] {
            &list[4..]
        } else {
            &list[..]
        };
        let mut index: HashMap<String, usize> =
            tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        for token in body {
            if token.is_empty() || index.contains_key(token) {
                return Err(Error::Config(format!(
                    "vocabulary entry {token:?} is empty or duplicated"
                )));
            }
            index.insert(token.clone(), tokens.len());
            tokens.push(token.clone());
        }
        Ok(Self { index, tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Full token list, reserved entries first; index equals position.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, seq: &TokenSequence) -> Vec<usize> {
        seq.tokens().iter().map(|t| self.id(t)).collect()
    }

    /// Maps ids back to tokens, dropping PAD/BOS/EOS.
    pub fn decode(&self, ids: &[usize]) -> TokenSequence {
        ids.iter()
            .filter(|&&i| !matches!(i, PAD | BOS | EOS))
            .map(|&i| self.token(i).unwrap_or(RESERVED[UNK]).to_owned())
            .collect()
    }

    /// One token per line, index = line number.
    pub fn to_text(&self) -> String {
        let mut out = self.tokens.join("\n");
        out.push('\n');
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(str::to_owned).collect())
    }
}

/// Counts code and comment tokens over `pairs`, keeps tokens seen at least
/// `min_freq` times (most frequent first, ties lexicographic) up to `max_size`
/// entries including the reserved ones.
pub fn build_vocabulary(pairs: &[RawPair], min_freq: usize, max_size: usize) -> Result<Vocabulary> {
    let mut freqs: HashMap<String, usize> = HashMap::new();
    for pair in pairs {
        let comment = tokenize_comment(&pair.comment).unwrap_or_default();
        for token in tokenize_code(&pair.code).into_inner().into_iter().chain(comment.into_inner()) {
            *freqs.entry(token).or_default() += 1;
        }
    }
    vocabulary_from_counts(freqs, min_freq, max_size)
}

pub fn vocabulary_from_counts(
    freqs: HashMap<String, usize>,
    min_freq: usize,
    max_size: usize,
) -> Result<Vocabulary> {
    if max_size < RESERVED.len() {
        return Err(Error::Config(format!(
            "vocabulary max_size must be at least {}, got {max_size}",
            RESERVED.len()
        )));
    }
    let mut ranked: Vec<(String, usize)> = freqs
        .into_iter()
        .filter(|(t, n)| *n >= min_freq && !RESERVED.contains(&t.as_str()))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size - RESERVED.len());
    Vocabulary::from_tokens(ranked.into_iter().map(|(t, _)| t).collect())
}

/// Which side of a pair a sequence comes from; comments get a leading BOS.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Code,
    Comment,
}

/// Padded index matrix with its mask and the unpadded lengths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub rows: usize,
    pub max_len: usize,
    pub ids: Vec<usize>,
    pub mask: Vec<u8>,
    pub lengths: Vec<usize>,
}

impl Batch {
    pub fn row(&self, r: usize) -> &[usize] {
        &self.ids[r * self.max_len..(r + 1) * self.max_len]
    }

    pub fn mask_row(&self, r: usize) -> &[u8] {
        &self.mask[r * self.max_len..(r + 1) * self.max_len]
    }

    /// Ids at position `t` for every row.
    pub fn column(&self, t: usize) -> Vec<usize> {
        (0..self.rows).map(|r| self.ids[r * self.max_len + t]).collect()
    }

    pub fn live(&self, t: usize) -> Vec<bool> {
        (0..self.rows).map(|r| self.mask[r * self.max_len + t] == 1).collect()
    }
}

/// Encodes already-mapped id sequences into a padded batch.
pub fn pad_ids(seqs: &[Vec<usize>], side: Side, max_len: usize) -> Batch {
    let width = max_len.max(1);
    let mut ids = vec![PAD; seqs.len() * width];
    let mut mask = vec![0u8; seqs.len() * width];
    let mut lengths = Vec::with_capacity(seqs.len());
    for (r, seq) in seqs.iter().enumerate() {
        let mut row: Vec<usize> = Vec::with_capacity(width);
        match side {
            Side::Code => {
                row.extend(seq.iter().take(width - 1));
            }
            Side::Comment => {
                if width >= 2 {
                    row.push(BOS);
                }
                row.extend(seq.iter().take(width.saturating_sub(2)));
            }
        }
        row.push(EOS);
        for (t, &id) in row.iter().enumerate() {
            ids[r * width + t] = id;
            mask[r * width + t] = 1;
        }
        lengths.push(row.len());
    }
    Batch {
        rows: seqs.len(),
        max_len: width,
        ids,
        mask,
        lengths,
    }
}

pub fn encode_and_pad(seqs: &[TokenSequence], vocab: &Vocabulary, side: Side, max_len: usize) -> Batch {
    let ids: Vec<Vec<usize>> = seqs.iter().map(|s| vocab.encode(s)).collect();
    pad_ids(&ids, side, max_len)
}
