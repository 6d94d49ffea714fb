//! WordPiece encoding.
//!
//! Text is normalized (NFC, optional lowercasing and accent stripping), split
//! on whitespace and punctuation, and each word is segmented by greedy
//! longest-match-first against a vocabulary file. Sequences are truncated or
//! right-padded with the pad id to a fixed length.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;

pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";
pub const CONTINUATION_PREFIX: &str = "##";

/// Default cap on the padded sequence length.
pub const DEFAULT_MAX_LEN_CAP: usize = 4096;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("cannot read vocabulary {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("duplicate token {token:?} on lines {first} and {second}")]
    DuplicateToken { token: String, first: usize, second: usize },
    #[error("empty token on line {0}")]
    EmptyToken(usize),
    #[error("vocabulary has no {0} token")]
    MissingSpecial(&'static str),
    #[error("{PAD_TOKEN} must have id 0, found on line {line}")]
    PadNotFirst { line: usize },
    #[error("max_len must be at least {min}, got {got}")]
    MaxLenTooSmall { min: usize, got: usize },
    #[error("max_word_chars must be positive")]
    ZeroWordChars,
    #[error("encoded corpus: {0}")]
    Cache(String),
}

/// Token ↔ id mapping loaded from a one-token-per-line file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    unk_id: u32,
}

impl Vocabulary {
    /// Builds a vocabulary where each token's id is its position.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self, TokenizerError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut token_to_id = HashMap::new();
        let mut id_to_token = Vec::new();
        for (i, tok) in tokens.into_iter().enumerate() {
            let tok: String = tok.into();
            if tok.is_empty() {
                return Err(TokenizerError::EmptyToken(i + 1));
            }
            if let Some(&prev) = token_to_id.get(&tok) {
                return Err(TokenizerError::DuplicateToken {
                    token: tok,
                    first: prev as usize + 1,
                    second: i + 1,
                });
            }
            token_to_id.insert(tok.clone(), i as u32);
            id_to_token.push(tok);
        }
        match token_to_id.get(PAD_TOKEN) {
            None => return Err(TokenizerError::MissingSpecial(PAD_TOKEN)),
            Some(&id) if id != 0 => return Err(TokenizerError::PadNotFirst { line: id as usize + 1 }),
            Some(_) => {}
        }
        let unk_id = *token_to_id.get(UNK_TOKEN).ok_or(TokenizerError::MissingSpecial(UNK_TOKEN))?;
        Ok(Vocabulary { token_to_id, id_to_token, unk_id })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn pad_id(&self) -> u32 {
        0
    }

    pub fn unk_id(&self) -> u32 {
        self.unk_id
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }
}

/// Reads a UTF-8 vocabulary file. Line `n` (zero-based) gets id `n`; a
/// trailing `\r` is stripped from each line.
pub fn load_vocab(path: &Path) -> Result<Vocabulary, TokenizerError> {
    let text = fs::read_to_string(path).map_err(|source| TokenizerError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Vocabulary::from_tokens(text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeConfig {
    pub max_len: usize,
    pub lowercase: bool,
    /// Off by default: stripping combining marks mangles Devanagari vowel signs.
    pub strip_accents: bool,
    pub max_word_chars: usize,
}

impl EncodeConfig {
    /// Smallest usable length: one convolution window.
    pub const MIN_MAX_LEN: usize = 5;

    pub fn new(max_len: usize) -> Self {
        EncodeConfig {
            max_len,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), TokenizerError> {
        if self.max_len < Self::MIN_MAX_LEN {
            return Err(TokenizerError::MaxLenTooSmall {
                min: Self::MIN_MAX_LEN,
                got: self.max_len,
            });
        }
        if self.max_word_chars == 0 {
            return Err(TokenizerError::ZeroWordChars);
        }
        Ok(())
    }
}

impl Default for EncodeConfig {
    fn default() -> Self {
        EncodeConfig {
            max_len: DEFAULT_MAX_LEN_CAP,
            lowercase: true,
            strip_accents: false,
            max_word_chars: 100,
        }
    }
}

/// Unicode punctuation (general category P*) plus the ASCII symbol
/// characters that WordPiece pre-tokenizers conventionally split off.
pub fn is_punctuation(c: char) -> bool {
    if c.is_ascii_punctuation() {
        return true;
    }
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

fn is_control(c: char) -> bool {
    if c == '\t' || c == '\n' || c == '\r' {
        return false;
    }
    matches!(
        get_general_category(c),
        GeneralCategory::Control | GeneralCategory::Format | GeneralCategory::Unassigned
    ) && c != '\u{200C}'
        && c != '\u{200D}'
}

fn normalize(text: &str, config: &EncodeConfig) -> String {
    let mut s: String = text.nfc().filter(|&c| c != '\u{FFFD}' && !is_control(c)).collect();
    if config.lowercase {
        s = s.to_lowercase();
    }
    if config.strip_accents {
        s = s
            .nfd()
            .filter(|&c| get_general_category(c) != GeneralCategory::NonspacingMark)
            .collect();
    }
    s
}

/// Whitespace and punctuation pre-split. Each punctuation character becomes
/// its own word.
pub fn basic_tokenize(text: &str, config: &EncodeConfig) -> Vec<String> {
    let text = normalize(text, config);
    let mut words = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_whitespace() {
            if !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
        } else if is_punctuation(c) {
            if !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
            words.push(c.to_string());
        } else {
            current.push(c);
        }
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
}

/// Greedy longest-match-first segmentation of one word into vocabulary ids.
/// Returns `[unk]` when the word is too long or any remainder has no match.
pub fn wordpiece_ids(word: &str, vocab: &Vocabulary, config: &EncodeConfig) -> Vec<u32> {
    let bounds: Vec<usize> = word
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(word.len()))
        .collect();
    let n_chars = bounds.len() - 1;
    if n_chars == 0 {
        return Vec::new();
    }
    if n_chars > config.max_word_chars {
        return vec![vocab.unk_id()];
    }
    let mut pieces = Vec::new();
    let mut candidate = String::new();
    let mut start = 0;
    while start < n_chars {
        let mut found = None;
        for end in (start + 1..=n_chars).rev() {
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION_PREFIX);
            }
            candidate.push_str(&word[bounds[start]..bounds[end]]);
            if let Some(id) = vocab.id(&candidate) {
                found = Some((id, end));
                break;
            }
        }
        match found {
            Some((id, end)) => {
                pieces.push(id);
                start = end;
            }
            None => return vec![vocab.unk_id()],
        }
    }
    pieces
}

/// Same as [`wordpiece_ids`], returning the piece strings.
pub fn wordpiece(word: &str, vocab: &Vocabulary, config: &EncodeConfig) -> Vec<String> {
    wordpiece_ids(word, vocab, config)
        .into_iter()
        .map(|id| vocab.token(id).unwrap_or(UNK_TOKEN).to_string())
        .collect()
}

/// All ids for `text`, without truncation or padding.
pub fn tokenize_ids(text: &str, vocab: &Vocabulary, config: &EncodeConfig) -> Vec<u32> {
    basic_tokenize(text, config)
        .iter()
        .flat_map(|w| wordpiece_ids(w, vocab, config))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub real_length: usize,
    pub truncated: bool,
}

pub fn encode(text: &str, vocab: &Vocabulary, config: &EncodeConfig) -> TokenSequence {
    let mut ids = tokenize_ids(text, vocab, config);
    let truncated = ids.len() > config.max_len;
    ids.truncate(config.max_len);
    let real_length = ids.len();
    ids.resize(config.max_len, vocab.pad_id());
    TokenSequence { ids, real_length, truncated }
}

/// Sequence length for a document set: the longest document, capped.
pub fn pad_length<'a, I>(texts: I, vocab: &Vocabulary, config: &EncodeConfig, cap: usize) -> usize
where
    I: IntoIterator<Item = &'a str>,
{
    let longest = texts
        .into_iter()
        .map(|t| tokenize_ids(t, vocab, config).len())
        .max()
        .unwrap_or(0);
    longest.min(cap)
}

/// Fixed-length encoded documents, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedCorpus {
    pub max_len: usize,
    pub ids: Vec<u32>,
}

impl EncodedCorpus {
    pub fn new(max_len: usize) -> Self {
        EncodedCorpus { max_len, ids: Vec::new() }
    }

    pub fn push(&mut self, seq: &TokenSequence) {
        assert_eq!(seq.ids.len(), self.max_len, "sequence length differs from corpus max_len");
        self.ids.extend_from_slice(&seq.ids);
    }

    pub fn doc_count(&self) -> usize {
        self.ids.len().checked_div(self.max_len).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.ids[i * self.max_len..(i + 1) * self.max_len]
    }

    /// Layout: `u32` doc count, `u32` max_len, then `doc_count * max_len`
    /// `u32` ids; all little-endian.
    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        let count = u32::try_from(self.doc_count()).map_err(|_| io::Error::other("too many documents"))?;
        let len = u32::try_from(self.max_len).map_err(|_| io::Error::other("max_len too large"))?;
        out.write_all(&count.to_le_bytes())?;
        out.write_all(&len.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.ids.len() * 4);
        for id in &self.ids {
            buf.extend_from_slice(&id.to_le_bytes());
        }
        out.write_all(&buf)
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self, TokenizerError> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| TokenizerError::Cache(e.to_string()))?;
        if bytes.len() < 8 {
            return Err(TokenizerError::Cache("file shorter than its 8-byte header".into()));
        }
        let count = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let max_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let expected = count
            .checked_mul(max_len)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| TokenizerError::Cache("header sizes overflow".into()))?;
        if bytes.len() - 8 != expected {
            return Err(TokenizerError::Cache(format!(
                "expected {expected} payload bytes for {count} x {max_len} ids, found {}",
                bytes.len() - 8
            )));
        }
        let ids = bytes[8..]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(EncodedCorpus { max_len, ids })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab(tokens: &[&str]) -> Vocabulary {
        let mut all = vec![PAD_TOKEN, UNK_TOKEN];
        all.extend_from_slice(tokens);
        Vocabulary::from_tokens(all).unwrap()
    }

    #[test]
    fn vocab_line_indexing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.txt");
        fs::write(&p, "[PAD]\n[UNK]\na\nb\nc\n").unwrap();
        let v = load_vocab(&p).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("c"), Some(4));
        assert_eq!(v.pad_id(), 0);
        assert_eq!(v.id(PAD_TOKEN), Some(0));
        assert_eq!(v.unk_id(), 1);
    }

    #[test]
    fn vocab_errors() {
        match Vocabulary::from_tokens(["[PAD]", "[UNK]", "x", "y", "x"]) {
            Err(TokenizerError::DuplicateToken { token, first, second }) => {
                assert_eq!((token.as_str(), first, second), ("x", 3, 5));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            Vocabulary::from_tokens(["[PAD]", "x"]),
            Err(TokenizerError::MissingSpecial(UNK_TOKEN))
        ));
        assert!(matches!(
            Vocabulary::from_tokens(["[UNK]", "[PAD]"]),
            Err(TokenizerError::PadNotFirst { line: 2 })
        ));
        assert!(matches!(
            load_vocab(Path::new("/nonexistent/vocab.txt")),
            Err(TokenizerError::Io { .. })
        ));
    }

    #[test]
    fn basic_splits() {
        let c = EncodeConfig::default();
        assert_eq!(basic_tokenize("Bail granted.", &c), ["bail", "granted", "."]);
        assert!(basic_tokenize("", &c).is_empty());
        assert!(basic_tokenize(" \t\n ", &c).is_empty());
        assert_eq!(basic_tokenize("Rs.15,000/-", &c), ["rs", ".", "15", ",", "000", "/", "-"]);
    }

    #[test]
    fn devanagari_danda_is_split() {
        // U+0964 DEVANAGARI DANDA is category Po; the dependent vowel signs
        // (Mc/Mn) stay attached to their consonants.
        let c = EncodeConfig::default();
        let toks = basic_tokenize("जमानत याचिका खारिज। आदेश॥", &c);
        assert_eq!(toks, ["जमानत", "याचिका", "खारिज", "।", "आदेश", "॥"]);
    }

    #[test]
    fn strip_accents_flag() {
        let mut c = EncodeConfig::default();
        assert_eq!(basic_tokenize("Café", &c), ["café"]);
        c.strip_accents = true;
        assert_eq!(basic_tokenize("Café", &c), ["cafe"]);
        c.lowercase = false;
        assert_eq!(basic_tokenize("Café", &c), ["Cafe"]);
    }

    #[test]
    fn nfc_is_applied() {
        let c = EncodeConfig::default();
        // e + combining acute composes to a single char
        assert_eq!(basic_tokenize("e\u{301}", &c), ["\u{e9}"]);
    }

    #[test]
    fn wordpiece_cases() {
        let v = vocab(&["un", "##able", "able", "bail"]);
        let c = EncodeConfig::default();
        assert_eq!(wordpiece("unable", &v, &c), ["un", "##able"]);
        assert_eq!(wordpiece("bail", &v, &c), ["bail"]);
        assert_eq!(wordpiece("unz", &v, &c), [UNK_TOKEN]);
        let short = EncodeConfig { max_word_chars: 3, ..c };
        assert_eq!(wordpiece("bail", &v, &short), [UNK_TOKEN]);
    }

    #[test]
    fn encode_pads_and_truncates() {
        let v = vocab(&["a", "b", "c"]);
        let c = EncodeConfig::new(10);
        let s = encode("a b c", &v, &c);
        assert_eq!(s.ids, [2, 3, 4, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(s.real_length, 3);
        assert!(!s.truncated);

        let s = encode(&"a ".repeat(12), &v, &c);
        assert_eq!(s.real_length, 10);
        assert!(s.truncated);
        assert_eq!(s.ids.len(), 10);

        let s = encode("", &v, &c);
        assert_eq!(s.real_length, 0);
        assert!(s.ids.iter().all(|&i| i == 0));
    }

    #[test]
    fn encode_config_validation() {
        assert!(EncodeConfig::new(4).validate().is_err());
        assert!(EncodeConfig::new(5).validate().is_ok());
    }

    #[test]
    fn pad_length_rule() {
        let v = vocab(&["a"]);
        let c = EncodeConfig::default();
        let docs = ["a a", "a a a a a", "a"];
        assert_eq!(pad_length(docs, &v, &c, 100), 5);
        assert_eq!(pad_length(docs, &v, &c, 4), 4);
        assert_eq!(pad_length([], &v, &c, 4), 0);
    }

    #[test]
    fn cache_round_trip_and_corruption() {
        let v = vocab(&["a", "b"]);
        let c = EncodeConfig::new(6);
        let mut corpus = EncodedCorpus::new(6);
        corpus.push(&encode("a b", &v, &c));
        corpus.push(&encode("b b b", &v, &c));
        let mut buf = Vec::new();
        corpus.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], &[2, 0, 0, 0, 6, 0, 0, 0]);
        assert_eq!(&buf[8..12], &2u32.to_le_bytes());
        assert_eq!(EncodedCorpus::read_from(buf.as_slice()).unwrap(), corpus);
        assert!(EncodedCorpus::read_from(&buf[..buf.len() - 1]).is_err());
        assert!(EncodedCorpus::read_from(&buf[..4]).is_err());
    }

    proptest! {
        #[test]
        fn encode_length_is_fixed(text in "\\PC{0,200}", max_len in 5usize..64) {
            let v = vocab(&["a", "b", "##a", "##b", "ab", "."]);
            let c = EncodeConfig::new(max_len);
            let s = encode(&text, &v, &c);
            prop_assert_eq!(s.ids.len(), max_len);
            prop_assert!(s.real_length <= max_len);
            prop_assert!(s.ids.iter().all(|&id| (id as usize) < v.len()));
            prop_assert!(s.ids[s.real_length..].iter().all(|&id| id == v.pad_id()));
            prop_assert_eq!(s.clone(), encode(&text, &v, &c));
        }
    }
}
