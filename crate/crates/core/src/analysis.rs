//! Tokenization and sentence segmentation.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_segmentation::UnicodeSegmentation;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenMode {
    /// Unicode word boundaries (UAX #29).
    UnicodeWord,
    /// Unicode words, with runs of CJK characters re-emitted as overlapping
    /// character bigrams.
    CjkBigram,
}

/// Language-aware analyzer shared by the indexing and query sides.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Analyzer {
    lang: String,
    lowercase: bool,
    stopwords: Option<BTreeSet<String>>,
    mode: TokenMode,
}

impl Analyzer {
    /// Default analyzer for a language: lowercasing on, no stopwords, CJK
    /// bigrams for Chinese, Japanese and Korean.
    pub fn for_lang(lang: &str) -> Self {
        let mode = if is_cjk_lang(lang) {
            TokenMode::CjkBigram
        } else {
            TokenMode::UnicodeWord
        };
        Analyzer {
            lang: lang.to_string(),
            lowercase: true,
            stopwords: None,
            mode,
        }
    }

    pub fn with_lowercase(mut self, lowercase: bool) -> Self {
        self.lowercase = lowercase;
        self
    }

    pub fn with_stopwords<I, S>(mut self, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = words
            .into_iter()
            .map(Into::into)
            .map(|w| if self.lowercase { w.to_lowercase() } else { w })
            .collect();
        self.stopwords = Some(set);
        self
    }

    /// Requested mode; Chinese always tokenizes as bigrams regardless.
    pub fn with_mode(mut self, mode: TokenMode) -> Self {
        self.mode = if primary_subtag(&self.lang) == "zh" {
            TokenMode::CjkBigram
        } else {
            mode
        };
        self
    }

    pub fn lang(&self) -> &str {
        &self.lang
    }

    pub fn mode(&self) -> TokenMode {
        self.mode
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }

    pub fn stopwords(&self) -> Option<&BTreeSet<String>> {
        self.stopwords.as_ref()
    }

    /// Stable digest of the configuration, stored alongside indexes so that
    /// query-side analysis can be checked against index-side analysis.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("analyzer serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex16(&digest)
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let raw = match self.mode {
            TokenMode::UnicodeWord => text.unicode_words().map(str::to_string).collect(),
            TokenMode::CjkBigram => cjk_bigrams(text),
        };
        raw.into_iter()
            .map(|t| if self.lowercase { t.to_lowercase() } else { t })
            .filter(|t| self.stopwords.as_ref().is_none_or(|s| !s.contains(t)))
            .collect()
    }
}

pub(crate) fn hex16(bytes: &[u8]) -> String {
    bytes.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn primary_subtag(lang: &str) -> String {
    lang.split(['-', '_']).next().unwrap_or("").to_ascii_lowercase()
}

fn is_cjk_lang(lang: &str) -> bool {
    matches!(primary_subtag(lang).as_str(), "zh" | "ja" | "ko")
}

pub fn is_cjk_char(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x309F      // Hiragana
        | 0x30A0..=0x30FF    // Katakana
        | 0x3400..=0x4DBF    // CJK Extension A
        | 0x4E00..=0x9FFF    // CJK Unified Ideographs
        | 0xAC00..=0xD7AF    // Hangul syllables
        | 0xF900..=0xFAFF    // CJK Compatibility Ideographs
        | 0x20000..=0x2FA1F  // Extensions B..F, compatibility supplement
    )
}

fn cjk_bigrams(text: &str) -> Vec<String> {
    fn flush(run: &mut Vec<char>, out: &mut Vec<String>) {
        match run.len() {
            0 => {}
            1 => out.push(run[0].to_string()),
            _ => out.extend(run.windows(2).map(|w| w.iter().collect::<String>())),
        }
        run.clear();
    }

    let mut out = Vec::new();
    let mut run: Vec<char> = Vec::new();
    let mut run_end = 0;
    for (start, word) in text.unicode_word_indices() {
        if word.chars().all(is_cjk_char) {
            if start != run_end {
                flush(&mut run, &mut out);
            }
            run.extend(word.chars());
            run_end = start + word.len();
        } else {
            flush(&mut run, &mut out);
            out.push(word.to_string());
        }
    }
    flush(&mut run, &mut out);
    out
}

/// Reads a stopword file: UTF-8, one term per line, `#` starts a comment.
pub fn read_stopwords(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_stopwords(&text))
}

pub fn parse_stopwords(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub doc_id: String,
    pub index: usize,
    pub text: String,
}

pub const DEFAULT_MAX_SENTENCE_CHARS: usize = 2000;

/// Rule-based sentence splitter.
///
/// A terminator from `. ! ? … ؟ ।` closes a sentence when followed (after any
/// closing quotes or brackets) by whitespace or end of text. The full-width
/// terminators `。！？` close immediately, since CJK text does not put spaces
/// between sentences. A blank line always closes. Sentences longer than
/// `max_chars` are cut, at the last whitespace inside the budget if there is
/// one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segmenter {
    pub max_chars: usize,
}

impl Default for Segmenter {
    fn default() -> Self {
        Segmenter {
            max_chars: DEFAULT_MAX_SENTENCE_CHARS,
        }
    }
}

fn is_spaced_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '…' | '؟' | '।' | '॥')
}

fn is_fullwidth_terminator(c: char) -> bool {
    matches!(c, '。' | '！' | '？')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | '”' | '’' | ')' | ']' | '」' | '』' | '）' | '》')
}

impl Segmenter {
    pub fn new(max_chars: usize) -> Self {
        assert!(max_chars > 0, "sentence budget must be positive");
        Segmenter { max_chars }
    }

    /// Splits `text` into trimmed, non-empty sentence strings.
    ///
    /// `lang` is accepted so callers need not special-case languages; the
    /// terminator set already covers Latin, CJK, Arabic and Devanagari text.
    pub fn split_text(&self, _lang: &str, text: &str) -> Vec<String> {
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut pieces = Vec::new();
        let mut start = 0;
        let mut i = 0;
        while i < chars.len() {
            let (_, c) = chars[i];
            let mut cut = None;
            if is_fullwidth_terminator(c) || is_spaced_terminator(c) {
                let mut j = i + 1;
                while j < chars.len() && (is_spaced_terminator(chars[j].1) || is_fullwidth_terminator(chars[j].1)) {
                    j += 1;
                }
                while j < chars.len() && is_closer(chars[j].1) {
                    j += 1;
                }
                let at_boundary = j == chars.len() || chars[j].1.is_whitespace();
                if is_fullwidth_terminator(c) || at_boundary {
                    cut = Some(j);
                } else {
                    i = j;
                    continue;
                }
            } else if c == '\n' {
                let mut j = i + 1;
                while j < chars.len() && chars[j].1.is_whitespace() && chars[j].1 != '\n' {
                    j += 1;
                }
                if j < chars.len() && chars[j].1 == '\n' {
                    cut = Some(j + 1);
                }
            }
            match cut {
                Some(j) => {
                    let end = chars.get(j).map_or(text.len(), |&(b, _)| b);
                    pieces.push(&text[start..end]);
                    start = end;
                    i = j;
                }
                None => i += 1,
            }
        }
        pieces.push(&text[start..]);

        let mut out = Vec::new();
        for piece in pieces {
            let piece = piece.trim();
            if !piece.is_empty() {
                self.enforce_budget(piece, &mut out);
            }
        }
        out
    }

    fn enforce_budget(&self, mut piece: &str, out: &mut Vec<String>) {
        loop {
            let Some((limit, _)) = piece.char_indices().nth(self.max_chars) else {
                out.push(piece.to_string());
                return;
            };
            let head = &piece[..limit];
            let cut = head
                .char_indices()
                .filter(|&(_, c)| c.is_whitespace())
                .map(|(b, _)| b)
                .rfind(|&b| b > 0)
                .unwrap_or(limit);
            let (left, right) = piece.split_at(cut);
            let left = left.trim();
            if !left.is_empty() {
                out.push(left.to_string());
            }
            piece = right.trim_start();
            if piece.is_empty() {
                return;
            }
        }
    }

    pub fn split(&self, doc_id: &str, lang: &str, text: &str) -> Vec<Sentence> {
        self.split_text(lang, text)
            .into_iter()
            .enumerate()
            .map(|(index, text)| Sentence {
                doc_id: doc_id.to_string(),
                index,
                text,
            })
            .collect()
    }
}

/// Splits with the default character budget.
pub fn split_sentences(doc_id: &str, lang: &str, text: &str) -> Vec<Sentence> {
    Segmenter::default().split(doc_id, lang, text)
}
