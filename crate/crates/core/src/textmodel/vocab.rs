//! WordPiece vocabulary and tokenizer.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const CONTINUATION: &str = "##";

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;

const SPECIALS: [&str; 4] = [PAD, UNK, CLS, SEP];

/// Longer words map straight to `[UNK]`.
const MAX_WORD_CHARS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordPieceVocab {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl WordPieceVocab {
    /// Tokens in id order; the four specials must come first as
    /// `[PAD] [UNK] [CLS] [SEP]`.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..4] != SPECIALS {
            return Err(Error::Format(format!(
                "vocabulary must start with {}",
                SPECIALS.join(" ")
            )));
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Format(format!("bad vocabulary token {t:?} at id {i}")));
            }
            if ids.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(WordPieceVocab { tokens, ids })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line; the line number is the id.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(str::to_owned).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn is_punctuation(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace() && !c.is_control()
}

/// Lowercases, splits on whitespace and makes every punctuation character
/// its own token.
pub fn pre_tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.to_lowercase().chars() {
        if c.is_whitespace() || c.is_control() {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
        } else if is_punctuation(c) {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            out.push(c.to_string());
        } else {
            word.push(c);
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

fn by_frequency(counts: HashMap<String, u64>) -> Vec<String> {
    let mut v: Vec<(String, u64)> = counts.into_iter().collect();
    v.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.into_iter().map(|(t, _)| t).collect()
}

/// Specials, then whole words by descending frequency, then `##` suffix
/// fragments by descending frequency, cut at `target_size`. Ties go in
/// lexicographic order.
pub fn build_vocab<S: AsRef<str>>(corpus: &[S], target_size: usize) -> Result<WordPieceVocab> {
    if target_size <= SPECIALS.len() {
        return Err(Error::invalid(format!(
            "vocabulary target size must exceed {}",
            SPECIALS.len()
        )));
    }
    let mut words: HashMap<String, u64> = HashMap::new();
    for doc in corpus {
        for w in pre_tokenize(doc.as_ref()) {
            *words.entry(w).or_default() += 1;
        }
    }
    if words.is_empty() {
        return Err(Error::invalid("cannot build a vocabulary from an empty corpus"));
    }
    let mut fragments: HashMap<String, u64> = HashMap::new();
    for (w, &count) in &words {
        for (i, _) in w.char_indices().skip(1) {
            *fragments.entry(format!("{CONTINUATION}{}", &w[i..])).or_default() += count;
        }
    }

    let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    tokens.extend(
        by_frequency(words)
            .into_iter()
            .chain(by_frequency(fragments))
            .filter(|t| !SPECIALS.contains(&t.as_str()))
            .take(target_size - SPECIALS.len()),
    );
    WordPieceVocab::from_tokens(tokens)
}

/// Greedy longest-match-first split of one pre-tokenized word. A word that
/// cannot be covered becomes a single `[UNK]`.
pub fn wordpiece(vocab: &WordPieceVocab, word: &str) -> Vec<u32> {
    if word.chars().count() > MAX_WORD_CHARS {
        return vec![UNK_ID];
    }
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut candidate = String::new();
    while start < word.len() {
        let mut end = word.len();
        let mut found = None;
        while end > start {
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION);
            }
            candidate.push_str(&word[start..end]);
            if let Some(id) = vocab.id(&candidate) {
                found = Some(id);
                break;
            }
            end = word[..end].char_indices().next_back().map_or(start, |(i, _)| i);
        }
        match found {
            Some(id) => pieces.push(id),
            None => return vec![UNK_ID],
        }
        start = end;
    }
    pieces
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedInput {
    pub input_ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    pub label: Option<u8>,
}

impl TokenizedInput {
    /// Number of positions with mask 1.
    pub fn active_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }
}

/// `[CLS] pieces [SEP]` padded with `[PAD]` to `max_len`. Long inputs keep
/// their head; `[CLS]` and the final `[SEP]` always survive.
pub fn tokenize(vocab: &WordPieceVocab, text: &str, max_len: usize) -> Result<TokenizedInput> {
    if max_len < 2 {
        return Err(Error::invalid("max_len must be at least 2"));
    }
    let mut ids = vec![CLS_ID];
    'words: for w in pre_tokenize(text) {
        for id in wordpiece(vocab, &w) {
            if ids.len() == max_len - 1 {
                break 'words;
            }
            ids.push(id);
        }
    }
    ids.push(SEP_ID);
    let active = ids.len();
    ids.resize(max_len, PAD_ID);
    let mut mask = vec![1u8; active];
    mask.resize(max_len, 0);
    Ok(TokenizedInput {
        input_ids: ids,
        attention_mask: mask,
        label: None,
    })
}

/// Token strings for `ids`, specials included.
pub fn id_tokens<'a>(vocab: &'a WordPieceVocab, ids: &[u32]) -> Vec<&'a str> {
    ids.iter().map(|&id| vocab.token(id).unwrap_or(UNK)).collect()
}

/// Space-joined text with specials dropped and `##` pieces glued to the
/// preceding piece.
pub fn detokenize(vocab: &WordPieceVocab, ids: &[u32]) -> String {
    let mut out = String::new();
    for &id in ids {
        if id <= SEP_ID && id != UNK_ID {
            continue;
        }
        let t = vocab.token(id).unwrap_or(UNK);
        match t.strip_prefix(CONTINUATION) {
            Some(rest) if !out.is_empty() => out.push_str(rest),
            _ => {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(t);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(words: &[&str]) -> WordPieceVocab {
        let mut t: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        t.extend(words.iter().map(|w| w.to_string()));
        WordPieceVocab::from_tokens(t).unwrap()
    }

    #[test]
    fn frequency_order() {
        let v = build_vocab(&["a a a b"], 6).unwrap();
        assert_eq!(v.tokens(), ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "a", "b"]);
        let v = build_vocab(&["b a"], 50).unwrap();
        assert_eq!(&v.tokens()[4..], ["a", "b"]);
        assert!(build_vocab(&["", "  "], 10).is_err());
        assert!(build_vocab(&["a"], 4).is_err());
    }

    #[test]
    fn fragments_follow_words() {
        let v = build_vocab(&["abc abc ab"], 100).unwrap();
        assert_eq!(&v.tokens()[4..], ["abc", "ab", "##bc", "##c", "##b"]);
    }

    #[test]
    fn pre_tokenize_isolates_punctuation() {
        assert_eq!(pre_tokenize("Hi, there!! a-b"), ["hi", ",", "there", "!", "!", "a", "-", "b"]);
        assert_eq!(pre_tokenize(" \t\n"), Vec::<String>::new());
    }

    #[test]
    fn greedy_longest_match() {
        let v = vocab(&["un", "unaff", "##able", "##aff", "##a", "##ble", "want", "##ed"]);
        let ids = |w| id_tokens(&v, &wordpiece(&v, w)).join(" ");
        assert_eq!(ids("unaffable"), "unaff ##able");
        assert_eq!(ids("wanted"), "want ##ed");
        assert_eq!(ids("unwanted"), "[UNK]");
        assert_eq!(ids("xyz"), "[UNK]");
    }

    #[test]
    fn empty_text_and_truncation() {
        let v = vocab(&["a"]);
        let t = tokenize(&v, "", 8).unwrap();
        assert_eq!(t.input_ids, [CLS_ID, SEP_ID, 0, 0, 0, 0, 0, 0]);
        assert_eq!(t.active_len(), 2);
        let t = tokenize(&v, "a a a a a", 4).unwrap();
        assert_eq!(id_tokens(&v, &t.input_ids), ["[CLS]", "a", "a", "[SEP]"]);
        let t = tokenize(&v, "a a a", 2).unwrap();
        assert_eq!(t.input_ids, [CLS_ID, SEP_ID]);
        assert!(tokenize(&v, "a", 1).is_err());
    }

    #[test]
    fn vocab_file_round_trip() {
        let v = build_vocab(&["one two two three three three"], 20).unwrap();
        assert_eq!(WordPieceVocab::from_text(&v.to_text()).unwrap(), v);
        assert!(WordPieceVocab::from_text("[UNK]\n[PAD]\n[CLS]\n[SEP]\n").is_err());
        assert!(WordPieceVocab::from_text("[PAD]\n[UNK]\n[CLS]\n[SEP]\na\na\n").is_err());
    }
}
