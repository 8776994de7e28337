//! Dictionary, parallel corpus, synonym list and monolingual text stores.
//!
//! Everything read from disk is NFC-normalized so Latin-script and Han text compare stably.
//! Stores are immutable once built; the expansion operations return new values.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lang::{nfc, LangPair};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Base,
    Induced,
    Synonym,
}

/// One translation of a headword.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sense {
    pub text: String,
    #[serde(default)]
    pub provenance: Provenance,
    /// Induction confidence; present iff `provenance` is `Induced`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    /// Part-of-speech tag of this translation.
    #[serde(skip)]
    pub pos: Option<String>,
}

impl Sense {
    pub fn base(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            provenance: Provenance::Base,
            score: None,
            pos: None,
        }
    }

    pub fn induced(text: impl Into<String>, score: f64) -> Self {
        Self {
            text: text.into(),
            provenance: Provenance::Induced,
            score: Some(score),
            pos: None,
        }
    }

    pub fn with_pos(mut self, pos: impl Into<String>) -> Self {
        self.pos = Some(pos.into());
        self
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.text.trim().is_empty() {
            return Err("empty sense text".into());
        }
        match (self.provenance, self.score) {
            (Provenance::Induced, None) => Err("induced sense without score".into()),
            (Provenance::Induced, Some(s)) if !(0.0..=1.0).contains(&s) => {
                Err(format!("score {s} outside [0, 1]"))
            }
            (Provenance::Base | Provenance::Synonym, Some(_)) => {
                Err("score is only allowed on induced senses".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DictEntry {
    pub headword: String,
    pub senses: Vec<Sense>,
}

impl DictEntry {
    pub fn new(headword: impl Into<String>, senses: Vec<Sense>) -> Self {
        Self {
            headword: headword.into(),
            senses,
        }
    }

    pub fn has_sense(&self, text: &str) -> bool {
        self.senses.iter().any(|s| s.text == text)
    }

    /// Tag of the first sense, if any.
    pub fn first_pos(&self) -> Option<&str> {
        self.senses.first().and_then(|s| s.pos.as_deref())
    }
}

/// Wire format of one dictionary line.
#[derive(Debug, Serialize, Deserialize)]
struct EntryRecord {
    headword: String,
    senses: Vec<Sense>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pos: Option<Vec<String>>,
}

impl From<&DictEntry> for EntryRecord {
    fn from(e: &DictEntry) -> Self {
        let pos = if e.senses.iter().any(|s| s.pos.is_some()) {
            Some(
                e.senses
                    .iter()
                    .map(|s| s.pos.clone().unwrap_or_default())
                    .collect(),
            )
        } else {
            None
        };
        Self {
            headword: e.headword.clone(),
            senses: e.senses.clone(),
            pos,
        }
    }
}

/// Headword → senses map in one direction. Lookup is exact match on the headword.
#[derive(Debug, Clone, PartialEq)]
pub struct BilingualDictionary {
    direction: LangPair,
    entries: IndexMap<String, DictEntry>,
    max_headword_chars: usize,
}

impl BilingualDictionary {
    pub fn new(direction: LangPair) -> Self {
        Self {
            direction,
            entries: IndexMap::new(),
            max_headword_chars: 0,
        }
    }

    /// Builds a dictionary from `(headword, [senses])` pairs of base senses.
    pub fn from_pairs<'a, I, S>(direction: LangPair, pairs: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, S)>,
        S: IntoIterator<Item = &'a str>,
    {
        let mut d = Self::new(direction);
        for (h, senses) in pairs {
            for s in senses {
                d.add_sense(h, Sense::base(s));
            }
        }
        d
    }

    pub fn direction(&self) -> &LangPair {
        &self.direction
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, headword: &str) -> Option<&DictEntry> {
        self.entries.get(headword)
    }

    pub fn contains(&self, headword: &str) -> bool {
        self.entries.contains_key(headword)
    }

    /// Entries in insertion (file) order.
    pub fn entries(&self) -> impl Iterator<Item = &DictEntry> {
        self.entries.values()
    }

    pub fn headwords(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn max_headword_chars(&self) -> usize {
        self.max_headword_chars
    }

    pub fn sense_count(&self) -> usize {
        self.entries.values().map(|e| e.senses.len()).sum()
    }

    /// Appends `sense` to `headword`, creating the entry if needed. Returns false when the
    /// entry already holds a sense with the same text.
    pub fn add_sense(&mut self, headword: &str, sense: Sense) -> bool {
        if let Some(entry) = self.entries.get_mut(headword) {
            if entry.has_sense(&sense.text) {
                return false;
            }
            entry.senses.push(sense);
            return true;
        }
        self.max_headword_chars = self.max_headword_chars.max(headword.chars().count());
        self.entries
            .insert(headword.to_string(), DictEntry::new(headword, vec![sense]));
        true
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in self.entries.values() {
            out.push_str(&serde_json::to_string(&EntryRecord::from(e)).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    /// Parses dictionary JSONL. Duplicate headwords are merged in file order.
    pub fn parse_jsonl(text: &str, direction: LangPair, path: &Path) -> Result<Self> {
        let mut d = Self::new(direction);
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let rec: EntryRecord =
                serde_json::from_str(raw).map_err(|e| parse_err(lineno, e.to_string()))?;
            let headword = nfc(rec.headword.trim());
            if headword.is_empty() {
                return Err(parse_err(lineno, "empty headword".into()));
            }
            if rec.senses.is_empty() {
                return Err(parse_err(lineno, format!("`{headword}` has no senses")));
            }
            if let Some(pos) = &rec.pos {
                if pos.len() > rec.senses.len() {
                    return Err(parse_err(lineno, "more POS tags than senses".into()));
                }
            }
            if d.contains(&headword) {
                warn!(
                    "{}:{lineno}: duplicate headword `{headword}`, merging senses",
                    path.display()
                );
            }
            for (j, mut sense) in rec.senses.into_iter().enumerate() {
                sense.text = nfc(sense.text.trim());
                sense.validate().map_err(|m| parse_err(lineno, m))?;
                sense.pos = rec
                    .pos
                    .as_ref()
                    .and_then(|p| p.get(j))
                    .filter(|t| !t.is_empty())
                    .map(|t| nfc(t));
                d.add_sense(&headword, sense);
            }
        }
        Ok(d)
    }
}

pub fn load_dictionary(path: &Path, direction: LangPair) -> Result<BilingualDictionary> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let d = BilingualDictionary::parse_jsonl(&text, direction, path)?;
    log::info!("{}: {} dictionary entries", path.display(), d.len());
    Ok(d)
}

/// Inverts the base senses of `d`: every base sense becomes a headword whose senses are the
/// original headwords, in order of first appearance.
pub fn reverse_dictionary(d: &BilingualDictionary) -> BilingualDictionary {
    let mut out = BilingualDictionary::new(d.direction().reversed());
    for entry in d.entries() {
        for sense in entry.senses.iter().filter(|s| s.provenance == Provenance::Base) {
            // the sense's POS tag describes the new headword
            let mut rev = Sense::base(entry.headword.clone());
            rev.pos = sense.pos.clone();
            out.add_sense(&sense.text, rev);
        }
    }
    out
}

/// Same-language synonym rows: `word → [synonyms]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynonymList {
    rows: IndexMap<String, Vec<String>>,
}

impl SynonymList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, word: &str, synonyms: &[&str]) {
        let row = self.rows.entry(word.to_string()).or_default();
        for s in synonyms {
            if *s != word && !row.iter().any(|r| r == s) {
                row.push(s.to_string());
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.rows.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Parses `word<TAB>syn1<TAB>syn2...` lines.
    pub fn parse_tsv(text: &str) -> Self {
        let mut list = Self::new();
        for line in text.lines() {
            let mut fields = line.split('\t').map(|f| nfc(f.trim())).filter(|f| !f.is_empty());
            let Some(word) = fields.next() else { continue };
            let syns: Vec<String> = fields.collect();
            let refs: Vec<&str> = syns.iter().map(String::as_str).collect();
            list.insert(&word, &refs);
        }
        list
    }
}

pub fn load_synonyms(path: &Path) -> Result<SynonymList> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(SynonymList::parse_tsv(&text))
}

/// Adds an entry for every synonym that has no entry yet, copying the senses of the
/// existing headwords it shares a synonym row with. Returns the new dictionary and the
/// number of added entries.
///
/// Only entries holding at least one non-synonym sense act as sources, and only their
/// non-synonym senses are copied, so a second application adds nothing.
pub fn expand_with_synonyms(
    d: &BilingualDictionary,
    syn: &SynonymList,
) -> (BilingualDictionary, usize) {
    let is_source = |w: &str| {
        d.get(w)
            .is_some_and(|e| e.senses.iter().any(|s| s.provenance != Provenance::Synonym))
    };

    // missing word -> related source headwords
    let mut related: IndexMap<&str, HashSet<&str>> = IndexMap::new();
    for (word, syns) in syn.rows() {
        let group: Vec<&str> = std::iter::once(word)
            .chain(syns.iter().map(String::as_str))
            .collect();
        for &w in &group {
            if d.contains(w) {
                continue;
            }
            for &h in &group {
                if h != w && is_source(h) {
                    related.entry(w).or_default().insert(h);
                }
            }
        }
    }

    let order: HashMap<&str, usize> = d.headwords().enumerate().map(|(i, h)| (h, i)).collect();
    let mut out = d.clone();
    let mut added = 0;
    for (w, sources) in related {
        let mut sources: Vec<&str> = sources.into_iter().collect();
        sources.sort_by_key(|h| order[h]);
        let mut any = false;
        for h in sources {
            for s in &d.get(h).expect("source exists").senses {
                if s.provenance == Provenance::Synonym {
                    continue;
                }
                let copy = Sense {
                    text: s.text.clone(),
                    provenance: Provenance::Synonym,
                    score: None,
                    pos: s.pos.clone(),
                };
                any |= out.add_sense(w, copy);
            }
        }
        if any {
            added += 1;
        }
    }
    (out, added)
}

/// One aligned sentence pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePair {
    pub id: u64,
    pub src: String,
    pub tgt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

impl SentencePair {
    pub fn new(id: u64, src: impl Into<String>, tgt: impl Into<String>) -> Self {
        Self {
            id,
            src: src.into(),
            tgt: tgt.into(),
            tag: None,
        }
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }

    pub fn swapped(&self) -> Self {
        Self {
            id: self.id,
            src: self.tgt.clone(),
            tgt: self.src.clone(),
            tag: self.tag.clone(),
        }
    }
}

/// Which side of a sentence pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Src,
    Tgt,
}

impl Side {
    pub fn of<'a>(&self, pair: &'a SentencePair) -> &'a str {
        match self {
            Side::Src => &pair.src,
            Side::Tgt => &pair.tgt,
        }
    }

    pub fn lang<'a>(&self, dir: &'a LangPair) -> &'a str {
        match self {
            Side::Src => &dir.src,
            Side::Tgt => &dir.tgt,
        }
    }
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "src" | "source" => Ok(Side::Src),
            "tgt" | "target" => Ok(Side::Tgt),
            _ => Err(Error::Config(format!("unknown side `{s}` (expected src|tgt)"))),
        }
    }
}

/// Sentence-aligned bilingual text with stable ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelCorpus {
    direction: LangPair,
    pairs: Vec<SentencePair>,
    by_id: HashMap<u64, usize>,
}

impl ParallelCorpus {
    pub fn new(direction: LangPair, pairs: Vec<SentencePair>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(pairs.len());
        for (i, p) in pairs.iter().enumerate() {
            if p.src.trim().is_empty() || p.tgt.trim().is_empty() {
                return Err(Error::Data(format!("sentence pair {} has an empty side", p.id)));
            }
            if by_id.insert(p.id, i).is_some() {
                return Err(Error::Data(format!("duplicate sentence id {}", p.id)));
            }
        }
        Ok(Self {
            direction,
            pairs,
            by_id,
        })
    }

    pub fn direction(&self) -> &LangPair {
        &self.direction
    }

    pub fn pairs(&self) -> &[SentencePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&SentencePair> {
        self.by_id.get(&id).map(|&i| &self.pairs[i])
    }

    /// The same corpus with sides exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            direction: self.direction.reversed(),
            pairs: self.pairs.iter().map(SentencePair::swapped).collect(),
            by_id: self.by_id.clone(),
        }
    }

    /// Returns the corpus oriented as `dir`, swapping sides if necessary.
    pub fn oriented(&self, dir: &LangPair) -> Result<Self> {
        if &self.direction == dir {
            Ok(self.clone())
        } else if self.direction.reversed() == *dir {
            Ok(self.swapped())
        } else {
            Err(Error::Config(format!(
                "corpus direction {} does not match {dir}",
                self.direction
            )))
        }
    }

    pub fn to_jsonl(&self) -> String {
        self.pairs
            .iter()
            .map(|p| serde_json::to_string(p).expect("pair serializes") + "\n")
            .collect()
    }

    pub fn parse_jsonl(text: &str, direction: LangPair, path: &Path) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let mut p: SentencePair = serde_json::from_str(raw).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            p.src = nfc(p.src.trim());
            p.tgt = nfc(p.tgt.trim());
            p.tag = p.tag.map(|t| nfc(t.trim())).filter(|t| !t.is_empty());
            pairs.push(p);
        }
        Self::new(direction, pairs).map_err(|e| match e {
            Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

pub fn load_corpus(path: &Path, direction: LangPair) -> Result<ParallelCorpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ParallelCorpus::parse_jsonl(&text, direction, path)
}

/// Reads a plain text file, one sentence per line, skipping blank lines.
pub fn load_monolingual(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| nfc(l.trim()))
        .filter(|l| !l.is_empty())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zaz() -> LangPair {
        LangPair::new("za", "zh")
    }

    fn parse(text: &str) -> Result<BilingualDictionary> {
        BilingualDictionary::parse_jsonl(text, zaz(), Path::new("dict.jsonl"))
    }

    #[test]
    fn loads_two_entries() {
        let d = parse(
            r#"{"headword": "mbanj", "senses": [{"text": "村", "provenance": "base"}]}
{"headword": "dou", "senses": [{"text": "我们", "provenance": "base"}], "pos": ["PRON"]}
"#,
        )
        .unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.get("dou").unwrap().first_pos(), Some("PRON"));
    }

    #[test]
    fn merges_duplicate_headwords_in_file_order() {
        let d = parse(
            r#"{"headword": "ndei", "senses": [{"text": "好", "provenance": "base"}]}
{"headword": "ndei", "senses": [{"text": "成", "provenance": "base"}, {"text": "好", "provenance": "base"}]}"#,
        )
        .unwrap();
        assert_eq!(d.len(), 1);
        let texts: Vec<_> = d.get("ndei").unwrap().senses.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts, ["好", "成"]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse("{\"headword\": \"a\", \"senses\": [{\"text\": \"x\", \"provenance\": \"base\"}]}\n\nnot json\n")
            .unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_invariant_violations() {
        assert!(parse(r#"{"headword": "", "senses": [{"text": "x", "provenance": "base"}]}"#).is_err());
        assert!(parse(r#"{"headword": "a", "senses": []}"#).is_err());
        assert!(parse(r#"{"headword": "a", "senses": [{"text": "x", "provenance": "induced"}]}"#).is_err());
        assert!(parse(r#"{"headword": "a", "senses": [{"text": "x", "provenance": "base", "score": 0.5}]}"#).is_err());
        assert!(parse(r#"{"headword": "a", "senses": [{"text": "x", "provenance": "induced", "score": 1.5}]}"#).is_err());
    }

    #[test]
    fn normalizes_to_nfc() {
        // "e" + combining acute
        let d = parse("{\"headword\": \"cafe\u{301}\", \"senses\": [{\"text\": \"x\", \"provenance\": \"base\"}]}").unwrap();
        assert!(d.contains("caf\u{e9}"));
    }

    #[test]
    fn reverse_single_and_fan_in() {
        let d = BilingualDictionary::from_pairs(zaz(), [("a", ["x"])]);
        let r = reverse_dictionary(&d);
        assert_eq!(r.direction(), &LangPair::new("zh", "za"));
        assert_eq!(r.get("x").unwrap().senses, vec![Sense::base("a")]);

        let d = BilingualDictionary::from_pairs(zaz(), [("a", ["x"]), ("b", ["x"])]);
        let r = reverse_dictionary(&d);
        let texts: Vec<_> = r.get("x").unwrap().senses.iter().map(|s| s.text.clone()).collect();
        assert_eq!(texts, ["a", "b"]);
    }

    #[test]
    fn reverse_ignores_non_base_senses() {
        let mut d = BilingualDictionary::from_pairs(zaz(), [("a", ["x"])]);
        d.add_sense("a", Sense::induced("y", 0.9));
        let r = reverse_dictionary(&d);
        assert!(!r.contains("y"));
    }

    #[test]
    fn synonym_expansion_adds_missing_word() {
        let d = BilingualDictionary::from_pairs(LangPair::new("zh", "za"), [("快", ["vaiq"])]);
        let mut syn = SynonymList::new();
        syn.insert("迅速", &["快"]);
        let (e, added) = expand_with_synonyms(&d, &syn);
        assert_eq!(added, 1);
        let s = &e.get("迅速").unwrap().senses[0];
        assert_eq!(s.text, "vaiq");
        assert_eq!(s.provenance, Provenance::Synonym);
        assert_eq!(s.score, None);
    }

    #[test]
    fn synonym_expansion_never_overwrites() {
        let d = BilingualDictionary::from_pairs(
            LangPair::new("zh", "za"),
            [("快", ["vaiq"]), ("迅速", ["riengj"])],
        );
        let mut syn = SynonymList::new();
        syn.insert("迅速", &["快"]);
        let (e, added) = expand_with_synonyms(&d, &syn);
        assert_eq!(added, 0);
        assert_eq!(e, d);
    }

    #[test]
    fn synonym_expansion_unions_sources_in_file_order() {
        let d = BilingualDictionary::from_pairs(
            LangPair::new("zh", "za"),
            [("快", ["vaiq", "riengj"]), ("急", ["gip", "vaiq"])],
        );
        let mut syn = SynonymList::new();
        syn.insert("迅速", &["急", "快"]);
        let (e, _) = expand_with_synonyms(&d, &syn);
        let texts: Vec<_> = e.get("迅速").unwrap().senses.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts, ["vaiq", "riengj", "gip"]);
    }

    #[test]
    fn empty_synonym_list_is_identity() {
        let d = BilingualDictionary::from_pairs(zaz(), [("a", ["x"])]);
        let (e, added) = expand_with_synonyms(&d, &SynonymList::new());
        assert_eq!((e, added), (d, 0));
    }

    #[test]
    fn synonym_tsv_skips_self_and_blank() {
        let s = SynonymList::parse_tsv("快\t快\t迅速\n\n急\t\n");
        assert_eq!(s.rows().next().unwrap().1, ["迅速".to_string()]);
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn corpus_rejects_duplicates_and_empty_sides() {
        let dup = vec![SentencePair::new(1, "a", "x"), SentencePair::new(1, "b", "y")];
        assert!(ParallelCorpus::new(zaz(), dup).is_err());
        assert!(ParallelCorpus::new(zaz(), vec![SentencePair::new(1, " ", "x")]).is_err());
    }

    #[test]
    fn corpus_orientation() {
        let c = ParallelCorpus::new(zaz(), vec![SentencePair::new(7, "a", "x").with_tag("easy")]).unwrap();
        let r = c.oriented(&zaz().reversed()).unwrap();
        assert_eq!(r.get(7).unwrap().src, "x");
        assert!(c.oriented(&LangPair::new("en", "zh")).is_err());
    }
}
