//! Tokenization and dictionary-driven maximum matching.
//!
//! Whitespace languages split on spaces with punctuation detached. Runs of unsegmented
//! script (Han, kana, Thai, ...) are cut by greedy forward maximum matching against the
//! words known for that language, falling back to single characters.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::lang::{self, is_unsegmented_char, is_unsegmented_lang};
use crate::store::BilingualDictionary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Word,
    Punct,
    Number,
}

/// A token with character offsets into the sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub kind: TokenKind,
}

/// Word list for one language, used to segment unsegmented scripts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Segmenter {
    pub lang: String,
    words: HashSet<String>,
    max_chars: usize,
}

impl Segmenter {
    pub fn new<I, S>(lang: impl Into<String>, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut seg = Self {
            lang: lang.into(),
            ..Self::default()
        };
        for w in words {
            let w: String = w.into();
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                continue;
            }
            seg.max_chars = seg.max_chars.max(w.chars().count());
            seg.words.insert(w);
        }
        seg
    }

    /// Segmenter for `lang`, using headwords when `lang` is the dictionary's source
    /// language and sense texts when it is the target language.
    pub fn for_language(d: &BilingualDictionary, lang: &str) -> Self {
        if d.direction().src == lang {
            Self::new(lang, d.headwords())
        } else if d.direction().tgt == lang {
            Self::new(
                lang,
                d.entries()
                    .flat_map(|e| e.senses.iter().map(|s| s.text.as_str())),
            )
        } else {
            Self::new(lang, std::iter::empty::<String>())
        }
    }

    pub fn contains(&self, w: &str) -> bool {
        self.words.contains(w)
    }

    pub fn tokenize(&self, sentence: &str) -> Vec<TokenSpan> {
        tokenize_with(sentence, &self.lang, &|w| self.words.contains(w), self.max_chars)
    }

    /// Lowercased word tokens only.
    pub fn terms(&self, sentence: &str) -> Vec<String> {
        self.tokenize(sentence)
            .into_iter()
            .filter(|t| t.kind == TokenKind::Word)
            .map(|t| lang::fold_case(&t.text))
            .collect()
    }
}

/// Tokenizes `sentence` in language `lang`, segmenting unsegmented runs with the words
/// `d` knows for that language.
pub fn tokenize(sentence: &str, lang: &str, d: &BilingualDictionary) -> Vec<TokenSpan> {
    Segmenter::for_language(d, lang).tokenize(sentence)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Space,
    Punct,
    Digit,
    Unsegmented,
    Letter,
}

fn classify(c: char, unsegmented_lang: bool) -> CharClass {
    if c.is_whitespace() {
        CharClass::Space
    } else if lang::is_punct_or_symbol(c) {
        CharClass::Punct
    } else if lang::is_decimal_digit(c) {
        CharClass::Digit
    } else if is_unsegmented_char(c) || unsegmented_lang {
        CharClass::Unsegmented
    } else {
        CharClass::Letter
    }
}

/// Apostrophes and hyphens joining two letters stay inside the word (`sw'ciengz`).
fn is_word_joiner(c: char) -> bool {
    matches!(c, '\'' | '’' | '-' | '‐')
}

fn tokenize_with(
    sentence: &str,
    lang_code: &str,
    has: &dyn Fn(&str) -> bool,
    max_chars: usize,
) -> Vec<TokenSpan> {
    let unseg_lang = is_unsegmented_lang(lang_code);
    let chars: Vec<char> = sentence.chars().collect();
    let classes: Vec<CharClass> = chars.iter().map(|&c| classify(c, unseg_lang)).collect();
    let span = |start: usize, end: usize, kind| TokenSpan {
        text: chars[start..end].iter().collect(),
        start,
        end,
        kind,
    };

    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        match classes[i] {
            CharClass::Space => i += 1,
            CharClass::Punct => {
                out.push(span(i, i + 1, TokenKind::Punct));
                i += 1;
            }
            CharClass::Digit => {
                let start = i;
                while i < chars.len() && classes[i] == CharClass::Digit {
                    i += 1;
                }
                out.push(span(start, i, TokenKind::Number));
            }
            CharClass::Letter => {
                let start = i;
                loop {
                    while i < chars.len() && classes[i] == CharClass::Letter {
                        i += 1;
                    }
                    let joins = i + 1 < chars.len()
                        && is_word_joiner(chars[i])
                        && classes[i + 1] == CharClass::Letter;
                    if !joins {
                        break;
                    }
                    i += 1;
                }
                out.push(span(start, i, TokenKind::Word));
            }
            CharClass::Unsegmented => {
                let start = i;
                while i < chars.len() && classes[i] == CharClass::Unsegmented {
                    i += 1;
                }
                let run = &chars[start..i];
                let mut pos = 0;
                while pos < run.len() {
                    let len = longest_prefix(&run[pos..], has, max_chars).unwrap_or(1);
                    out.push(span(start + pos, start + pos + len, TokenKind::Word));
                    pos += len;
                }
            }
        }
    }
    out
}

fn longest_prefix(chars: &[char], has: &dyn Fn(&str) -> bool, max_chars: usize) -> Option<usize> {
    let upper = max_chars.min(chars.len());
    (1..=upper)
        .rev()
        .find(|&l| has(&chars[..l].iter().collect::<String>()))
}

fn longest_suffix(chars: &[char], has: &dyn Fn(&str) -> bool, max_chars: usize) -> Option<usize> {
    let n = chars.len();
    let upper = max_chars.min(n);
    (1..=upper)
        .rev()
        .find(|&l| has(&chars[n - l..].iter().collect::<String>()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchDirection {
    Forward,
    Backward,
}

/// Greedy maximum matching of `word` against a word predicate. Unmatched characters are
/// skipped. Returns `(headword, char length)` in surface order.
pub fn max_match_by(
    word: &str,
    has: &dyn Fn(&str) -> bool,
    max_chars: usize,
    direction: MatchDirection,
) -> Vec<(String, usize)> {
    let chars: Vec<char> = word.chars().collect();
    let mut out = Vec::new();
    match direction {
        MatchDirection::Forward => {
            let mut pos = 0;
            while pos < chars.len() {
                match longest_prefix(&chars[pos..], has, max_chars) {
                    Some(l) => {
                        out.push((chars[pos..pos + l].iter().collect(), l));
                        pos += l;
                    }
                    None => pos += 1,
                }
            }
        }
        MatchDirection::Backward => {
            let mut end = chars.len();
            while end > 0 {
                match longest_suffix(&chars[..end], has, max_chars) {
                    Some(l) => {
                        out.push((chars[end - l..end].iter().collect(), l));
                        end -= l;
                    }
                    None => end -= 1,
                }
            }
            out.reverse();
        }
    }
    out
}

/// Forward or backward maximum matching of an out-of-dictionary word against `d`'s
/// headwords. The caller handles exact headwords with a plain lookup.
pub fn max_match(word: &str, d: &BilingualDictionary, direction: MatchDirection) -> Vec<String> {
    max_match_by(word, &|w| d.contains(w), d.max_headword_chars(), direction)
        .into_iter()
        .map(|(h, _)| h)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuzzyMatch {
    pub headword: String,
    pub direction: MatchDirection,
    /// Length in characters of the matched prefix/suffix.
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuzzyHit {
    pub query: String,
    pub matches: Vec<FuzzyMatch>,
}

/// Maximum number of related headwords a fuzzy lookup returns.
pub const FUZZY_TOP: usize = 2;

/// Pools forward and backward maximum matches and keeps the best two, ranked by matched
/// length (longest first), then forward before backward, then headword.
pub fn fuzzy_lookup_by(word: &str, has: &dyn Fn(&str) -> bool, max_chars: usize) -> FuzzyHit {
    let mut pool: Vec<FuzzyMatch> = Vec::new();
    for direction in [MatchDirection::Forward, MatchDirection::Backward] {
        for (headword, length) in max_match_by(word, has, max_chars, direction) {
            pool.push(FuzzyMatch {
                headword,
                direction,
                length,
            });
        }
    }
    pool.sort_by(|a, b| {
        b.length
            .cmp(&a.length)
            .then(a.direction.cmp(&b.direction))
            .then(a.headword.cmp(&b.headword))
    });
    let mut matches: Vec<FuzzyMatch> = Vec::with_capacity(FUZZY_TOP);
    for m in pool {
        if matches.len() == FUZZY_TOP {
            break;
        }
        if !matches.iter().any(|x| x.headword == m.headword) {
            matches.push(m);
        }
    }
    FuzzyHit {
        query: word.to_string(),
        matches,
    }
}

pub fn fuzzy_lookup(word: &str, d: &BilingualDictionary) -> FuzzyHit {
    fuzzy_lookup_by(word, &|w| d.contains(w), d.max_headword_chars())
}
