//! Language codes, direction pairs and character classes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;

use crate::error::Error;

/// Ordered (source, target) language code pair, written `src-tgt` (e.g. `za-zh`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LangPair {
    pub src: String,
    pub tgt: String,
}

impl LangPair {
    pub fn new(src: impl Into<String>, tgt: impl Into<String>) -> Self {
        Self {
            src: src.into(),
            tgt: tgt.into(),
        }
    }

    pub fn reversed(&self) -> Self {
        Self::new(self.tgt.clone(), self.src.clone())
    }
}

impl fmt::Display for LangPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.src, self.tgt)
    }
}

impl FromStr for LangPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        // accept both `za-zh` and `za2zh`
        let parts: Vec<&str> = if s.contains('-') {
            s.split('-').collect()
        } else {
            s.split('2').collect()
        };
        match parts.as_slice() {
            [a, b] if !a.is_empty() && !b.is_empty() && a != b => Ok(Self::new(*a, *b)),
            _ => Err(Error::Config(format!("invalid language pair `{s}`"))),
        }
    }
}

impl TryFrom<String> for LangPair {
    type Error = Error;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<LangPair> for String {
    fn from(value: LangPair) -> Self {
        value.to_string()
    }
}

/// Languages written without whitespace word boundaries.
pub fn is_unsegmented_lang(code: &str) -> bool {
    matches!(
        code.to_ascii_lowercase().as_str(),
        "zh" | "zho" | "cmn" | "yue" | "ja" | "jpn" | "th" | "tha" | "lo" | "my" | "km" | "bo"
    )
}

/// Display name for a language code, in Chinese and English.
pub fn lang_name(code: &str, chinese: bool) -> String {
    let (zh, en) = match code.to_ascii_lowercase().as_str() {
        "za" | "zha" => ("壮语", "Zhuang"),
        "zh" | "zho" | "cmn" => ("汉语", "Chinese"),
        "en" | "eng" => ("英语", "English"),
        "kgv" => ("卡拉曼语", "Kalamang"),
        _ => return code.to_string(),
    };
    if chinese { zh } else { en }.to_string()
}

pub fn nfc(s: &str) -> String {
    s.nfc().collect()
}

/// Characters from scripts that do not separate words with spaces.
pub fn is_unsegmented_char(c: char) -> bool {
    matches!(c as u32,
        0x3400..=0x4DBF      // CJK ext A
        | 0x4E00..=0x9FFF    // CJK unified
        | 0xF900..=0xFAFF    // compatibility ideographs
        | 0x20000..=0x2FA1F  // ext B..
        | 0x3040..=0x30FF    // kana
        | 0x0E00..=0x0E7F    // Thai
        | 0x0E80..=0x0EFF    // Lao
        | 0x1000..=0x109F    // Myanmar
        | 0x1780..=0x17FF    // Khmer
        | 0x0F00..=0x0FFF    // Tibetan
    )
}

pub fn is_han(c: char) -> bool {
    matches!(c as u32,
        0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x2FA1F)
}

/// Unicode general category P* or S*.
pub fn is_punct_or_symbol(c: char) -> bool {
    use GeneralCategory::*;
    matches!(
        get_general_category(c),
        ConnectorPunctuation
            | DashPunctuation
            | OpenPunctuation
            | ClosePunctuation
            | InitialPunctuation
            | FinalPunctuation
            | OtherPunctuation
            | MathSymbol
            | CurrencySymbol
            | ModifierSymbol
            | OtherSymbol
    )
}

pub fn is_punct(c: char) -> bool {
    use GeneralCategory::*;
    matches!(
        get_general_category(c),
        ConnectorPunctuation
            | DashPunctuation
            | OpenPunctuation
            | ClosePunctuation
            | InitialPunctuation
            | FinalPunctuation
            | OtherPunctuation
    )
}

pub fn is_symbol(c: char) -> bool {
    is_punct_or_symbol(c) && !is_punct(c)
}

/// Unicode general category N* (any number).
pub fn is_number(c: char) -> bool {
    use GeneralCategory::*;
    matches!(
        get_general_category(c),
        DecimalNumber | LetterNumber | OtherNumber
    )
}

/// Unicode general category Nd.
pub fn is_decimal_digit(c: char) -> bool {
    get_general_category(c) == GeneralCategory::DecimalNumber
}

/// Lowercases text for lookup and alignment. Unsegmented scripts have no case, so this only
/// affects alphabetic runs.
pub fn fold_case(s: &str) -> String {
    s.to_lowercase()
}
