//! Bilingual lexicon induction with IBM Model 1.
//!
//! EM estimates `t(target | source)` over co-occurring word pairs. Pairs above a confidence
//! threshold become induced dictionary senses. Both directions are trained and a pair is
//! kept when either direction clears the threshold.

use std::collections::HashMap;
use std::fmt::Write as _;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment::Segmenter;
use crate::store::{BilingualDictionary, ParallelCorpus, Provenance, Sense};

pub const NULL_WORD: &str = "<null>";
pub const DEFAULT_ITERATIONS: usize = 10;
pub const DEFAULT_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignOptions {
    pub iterations: usize,
    pub null_word: bool,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            null_word: true,
        }
    }
}

/// Translation probabilities `t(target | source)`; each source row sums to one.
#[derive(Debug, Clone)]
pub struct AlignmentTable {
    src_vocab: Vec<String>,
    tgt_vocab: Vec<String>,
    src_index: HashMap<String, u32>,
    tgt_index: HashMap<String, u32>,
    rows: Vec<HashMap<u32, f64>>,
    null_word: bool,
    iterations: usize,
    log_likelihood: Vec<f64>,
}

impl AlignmentTable {
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Corpus log-likelihood before the first update and after each iteration.
    pub fn log_likelihood(&self) -> &[f64] {
        &self.log_likelihood
    }

    pub fn source_vocab(&self) -> &[String] {
        &self.src_vocab
    }

    pub fn target_vocab(&self) -> &[String] {
        &self.tgt_vocab
    }

    pub fn has_null(&self) -> bool {
        self.null_word
    }

    pub fn prob(&self, source: &str, target: &str) -> f64 {
        let (Some(&s), Some(&t)) = (self.src_index.get(source), self.tgt_index.get(target)) else {
            return 0.0;
        };
        self.rows[s as usize].get(&t).copied().unwrap_or(0.0)
    }

    /// Sum of `t(· | source)`.
    pub fn row_sum(&self, source: &str) -> f64 {
        self.src_index
            .get(source)
            .map(|&s| self.rows[s as usize].values().sum())
            .unwrap_or(0.0)
    }

    /// All `(source, target, probability)` entries, the null row included.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.rows.iter().enumerate().flat_map(move |(s, row)| {
            row.iter().map(move |(&t, &p)| {
                (
                    self.src_vocab[s].as_str(),
                    self.tgt_vocab[t as usize].as_str(),
                    p,
                )
            })
        })
    }

    /// Builds a table directly from probabilities; rows are used as given.
    pub fn from_probabilities<'a>(entries: impl IntoIterator<Item = (&'a str, &'a str, f64)>) -> Self {
        let mut table = Self {
            src_vocab: Vec::new(),
            tgt_vocab: Vec::new(),
            src_index: HashMap::new(),
            tgt_index: HashMap::new(),
            rows: Vec::new(),
            null_word: false,
            iterations: 0,
            log_likelihood: Vec::new(),
        };
        for (s, t, p) in entries {
            let si = intern(&mut table.src_vocab, &mut table.src_index, s);
            let ti = intern(&mut table.tgt_vocab, &mut table.tgt_index, t);
            if table.rows.len() <= si as usize {
                table.rows.resize_with(si as usize + 1, HashMap::new);
            }
            table.rows[si as usize].insert(ti, p);
        }
        table
    }
}

fn intern(vocab: &mut Vec<String>, index: &mut HashMap<String, u32>, w: &str) -> u32 {
    if let Some(&i) = index.get(w) {
        return i;
    }
    let i = vocab.len() as u32;
    vocab.push(w.to_string());
    index.insert(w.to_string(), i);
    i
}

/// Tokenizes both sides of the corpus into lowercased word lists.
pub fn tokenize_corpus(
    corpus: &ParallelCorpus,
    src: &Segmenter,
    tgt: &Segmenter,
) -> Vec<(Vec<String>, Vec<String>)> {
    corpus
        .pairs()
        .iter()
        .map(|p| (src.terms(&p.src), tgt.terms(&p.tgt)))
        .collect()
}

/// Runs Model 1 EM over tokenized sentence pairs. Initialization is uniform over the
/// targets that co-occur with each source word, so training is deterministic.
pub fn train_model1(pairs: &[(Vec<String>, Vec<String>)], opts: AlignOptions) -> Result<AlignmentTable> {
    if opts.iterations == 0 {
        return Err(Error::Config("alignment needs at least one iteration".into()));
    }
    let mut table = AlignmentTable {
        src_vocab: Vec::new(),
        tgt_vocab: Vec::new(),
        src_index: HashMap::new(),
        tgt_index: HashMap::new(),
        rows: Vec::new(),
        null_word: opts.null_word,
        iterations: opts.iterations,
        log_likelihood: Vec::new(),
    };
    if opts.null_word {
        intern(&mut table.src_vocab, &mut table.src_index, NULL_WORD);
    }

    let mut sentences: Vec<(Vec<u32>, Vec<u32>)> = Vec::with_capacity(pairs.len());
    for (i, (s, t)) in pairs.iter().enumerate() {
        if s.is_empty() || t.is_empty() {
            warn!("sentence pair #{i} has an empty side after tokenization, skipping");
            continue;
        }
        let mut src: Vec<u32> = Vec::with_capacity(s.len() + 1);
        if opts.null_word {
            src.push(0);
        }
        src.extend(s.iter().map(|w| intern(&mut table.src_vocab, &mut table.src_index, w)));
        let tgt = t
            .iter()
            .map(|w| intern(&mut table.tgt_vocab, &mut table.tgt_index, w))
            .collect();
        sentences.push((src, tgt));
    }
    if sentences.is_empty() {
        return Err(Error::Data("alignment corpus is empty".into()));
    }

    // uniform over co-occurring targets
    let mut rows: Vec<HashMap<u32, f64>> = vec![HashMap::new(); table.src_vocab.len()];
    for (src, tgt) in &sentences {
        for &s in src {
            for &t in tgt {
                rows[s as usize].insert(t, 0.0);
            }
        }
    }
    for row in &mut rows {
        let u = 1.0 / row.len() as f64;
        row.values_mut().for_each(|p| *p = u);
    }

    for _ in 0..opts.iterations {
        let mut counts: Vec<HashMap<u32, f64>> = vec![HashMap::new(); rows.len()];
        let mut totals = vec![0.0f64; rows.len()];
        let ll = expectation(&sentences, &rows, Some((&mut counts, &mut totals)));
        table.log_likelihood.push(ll);
        for (s, row) in rows.iter_mut().enumerate() {
            let total = totals[s];
            for (t, p) in row.iter_mut() {
                *p = counts[s].get(t).copied().unwrap_or(0.0) / total;
            }
        }
    }
    table
        .log_likelihood
        .push(expectation(&sentences, &rows, None));
    table.rows = rows;
    Ok(table)
}

type Accumulators<'a> = (&'a mut Vec<HashMap<u32, f64>>, &'a mut Vec<f64>);

/// One E-step. Returns the corpus log-likelihood under `rows` (up to the constant
/// sentence-length term) and, if given, accumulates expected counts.
fn expectation(
    sentences: &[(Vec<u32>, Vec<u32>)],
    rows: &[HashMap<u32, f64>],
    mut acc: Option<Accumulators<'_>>,
) -> f64 {
    let mut ll = 0.0;
    for (src, tgt) in sentences {
        let norm = (src.len() as f64).ln();
        for &t in tgt {
            let z: f64 = src.iter().map(|&s| rows[s as usize][&t]).sum();
            ll += z.ln() - norm;
            if let Some((counts, totals)) = acc.as_mut() {
                for &s in src {
                    let c = rows[s as usize][&t] / z;
                    *counts[s as usize].entry(t).or_insert(0.0) += c;
                    totals[s as usize] += c;
                }
            }
        }
    }
    ll
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub source: String,
    pub target: String,
    pub score: f64,
}

/// Thresholded word pairs, sorted by score descending then source word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InducedLexicon {
    pub entries: Vec<LexiconEntry>,
    pub threshold: f64,
}

impl InducedLexicon {
    pub fn new(mut entries: Vec<LexiconEntry>, threshold: f64) -> Self {
        entries.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.source.cmp(&b.source))
                .then_with(|| a.target.cmp(&b.target))
        });
        Self { entries, threshold }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, source: &str, target: &str) -> bool {
        self.entries
            .iter()
            .any(|e| e.source == source && e.target == target)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(out, "{}\t{}\t{}", e.source, e.target, e.score);
        }
        out
    }

    pub fn parse_tsv(text: &str, threshold: f64) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let [source, target, score] = f.as_slice() else {
                return Err(Error::Data(format!("lexicon line {}: expected 3 fields", i + 1)));
            };
            let score: f64 = score
                .parse()
                .map_err(|_| Error::Data(format!("lexicon line {}: bad score", i + 1)))?;
            entries.push(LexiconEntry {
                source: source.to_string(),
                target: target.to_string(),
                score,
            });
        }
        Ok(Self::new(entries, threshold))
    }
}

fn is_base_pair(d: Option<&BilingualDictionary>, source: &str, target: &str) -> bool {
    d.and_then(|d| d.get(source)).is_some_and(|e| {
        e.senses
            .iter()
            .any(|s| s.provenance == Provenance::Base && s.text == target)
    })
}

/// Pairs with `t(target | source) >= threshold`, excluding the null word and pairs already
/// present as base senses of `known`.
pub fn extract_lexicon(
    table: &AlignmentTable,
    threshold: f64,
    known: Option<&BilingualDictionary>,
) -> Result<InducedLexicon> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Config(format!("threshold {threshold} outside (0, 1]")));
    }
    let entries = table
        .iter()
        .filter(|&(s, _, p)| p >= threshold && !(table.has_null() && s == NULL_WORD))
        .filter(|&(s, t, _)| !is_base_pair(known, s, t))
        .map(|(s, t, p)| LexiconEntry {
            source: s.to_string(),
            target: t.to_string(),
            score: p,
        })
        .collect();
    Ok(InducedLexicon::new(entries, threshold))
}

/// Trains both directions and keeps a pair when either clears the threshold. The score is
/// the larger of the two directional probabilities.
pub fn induce_symmetric(
    pairs: &[(Vec<String>, Vec<String>)],
    opts: AlignOptions,
    threshold: f64,
    known: Option<&BilingualDictionary>,
) -> Result<InducedLexicon> {
    let forward = train_model1(pairs, opts)?;
    let flipped: Vec<(Vec<String>, Vec<String>)> =
        pairs.iter().map(|(s, t)| (t.clone(), s.clone())).collect();
    let backward = train_model1(&flipped, opts)?;

    let mut best: indexmap::IndexMap<(String, String), f64> = indexmap::IndexMap::new();
    for e in extract_lexicon(&forward, threshold, known)?.entries {
        best.insert((e.source, e.target), e.score);
    }
    for e in extract_lexicon(&backward, threshold, None)?.entries {
        // backward entries are (target-language word, source-language word)
        if is_base_pair(known, &e.target, &e.source) {
            continue;
        }
        let slot = best.entry((e.target, e.source)).or_insert(0.0);
        *slot = slot.max(e.score);
    }
    let entries = best
        .into_iter()
        .map(|((source, target), score)| LexiconEntry {
            source,
            target,
            score,
        })
        .collect();
    Ok(InducedLexicon::new(entries, threshold))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeReport {
    pub new_headwords: usize,
    pub new_senses: usize,
}

/// Appends each induced pair as an `induced` sense. Pairs whose text already exists under
/// the headword are skipped.
pub fn merge_into_dictionary(
    lex: &InducedLexicon,
    d: &BilingualDictionary,
) -> (BilingualDictionary, MergeReport) {
    let mut out = d.clone();
    let mut report = MergeReport::default();
    for e in &lex.entries {
        let existed = out.contains(&e.source);
        if out.add_sense(&e.source, Sense::induced(e.target.clone(), e.score.clamp(0.0, 1.0))) {
            report.new_senses += 1;
            if !existed {
                report.new_headwords += 1;
            }
        }
    }
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::LangPair;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn single_pair_is_certain() {
        let pairs = vec![(toks("a"), toks("x"))];
        for null_word in [true, false] {
            let t = train_model1(&pairs, AlignOptions { iterations: 1, null_word }).unwrap();
            assert_eq!(t.prob("a", "x"), 1.0);
        }
    }

    /// Two EM iterations by hand (no null word) on {("a b","x y"), ("a","x")}.
    #[test]
    fn shared_pair_disambiguates() {
        let pairs = vec![(toks("a b"), toks("x y")), (toks("a"), toks("x"))];
        // init: t(x|a)=t(y|a)=1/2, t(x|b)=t(y|b)=1/2
        // iter 1, sentence 1: each target splits 1/2 between a and b
        //   c(a,x)=.5 c(b,x)=.5 c(a,y)=.5 c(b,y)=.5 ; sentence 2: c(a,x)+=1
        //   t(x|a)=1.5/2=.75 t(y|a)=.25 t(x|b)=.5 t(y|b)=.5
        // iter 2, sentence 1: x: z=.75+.5 -> a:.6 b:.4 ; y: z=.25+.5 -> a:1/3 b:2/3
        //   sentence 2: c(a,x)+=1
        //   t(x|a)=1.6/(1.6+1/3)  t(b,y)=(2/3)/(2/3+.4)
        let t = train_model1(&pairs, AlignOptions { iterations: 2, null_word: false }).unwrap();
        let txa = 1.6 / (1.6 + 1.0 / 3.0);
        let tyb = (2.0 / 3.0) / (2.0 / 3.0 + 0.4);
        assert!((t.prob("a", "x") - txa).abs() < 1e-12);
        assert!((t.prob("a", "y") - (1.0 - txa)).abs() < 1e-12);
        assert!((t.prob("b", "y") - tyb).abs() < 1e-12);
        assert!((t.prob("b", "x") - (1.0 - tyb)).abs() < 1e-12);
        let t = train_model1(&pairs, AlignOptions { iterations: 30, null_word: false }).unwrap();
        assert!(t.prob("a", "x") > t.prob("a", "y"));
        assert!(t.prob("b", "y") > t.prob("b", "x"));
    }

    #[test]
    fn empty_corpus_and_empty_sides() {
        assert!(train_model1(&[], AlignOptions::default()).is_err());
        let only_empty = vec![(toks(""), toks("x"))];
        assert!(train_model1(&only_empty, AlignOptions::default()).is_err());
        let mixed = vec![(toks(""), toks("x")), (toks("a"), toks("y"))];
        let t = train_model1(&mixed, AlignOptions::default()).unwrap();
        assert_eq!(t.prob("a", "x"), 0.0);
    }

    #[test]
    fn zero_iterations_rejected() {
        let pairs = vec![(toks("a"), toks("x"))];
        assert!(train_model1(&pairs, AlignOptions { iterations: 0, null_word: true }).is_err());
    }

    #[test]
    fn extract_filters_by_threshold() {
        let table = AlignmentTable::from_probabilities([("a", "x", 0.9), ("a", "y", 0.1)]);
        let lex = extract_lexicon(&table, 0.6, None).unwrap();
        assert_eq!(
            lex.entries,
            vec![LexiconEntry { source: "a".into(), target: "x".into(), score: 0.9 }]
        );
        let table = AlignmentTable::from_probabilities([("a", "x", 0.7), ("a", "y", 0.3)]);
        assert!(extract_lexicon(&table, 1.0, None).unwrap().is_empty());
        assert!(extract_lexicon(&table, 0.0, None).is_err());
    }

    #[test]
    fn extract_skips_known_base_pairs() {
        let table = AlignmentTable::from_probabilities([("a", "x", 0.9), ("b", "y", 0.8)]);
        let d = BilingualDictionary::from_pairs(LangPair::new("za", "zh"), [("a", ["x"])]);
        let lex = extract_lexicon(&table, 0.6, Some(&d)).unwrap();
        assert_eq!(lex.len(), 1);
        assert!(lex.contains("b", "y"));
    }

    #[test]
    fn merge_creates_and_skips() {
        let d = BilingualDictionary::from_pairs(LangPair::new("za", "zh"), [("mbanj", ["村"])]);
        let lex = InducedLexicon::new(
            vec![
                LexiconEntry { source: "soujgih".into(), target: "手机".into(), score: 0.8 },
                LexiconEntry { source: "mbanj".into(), target: "村".into(), score: 0.9 },
            ],
            0.6,
        );
        let (m, report) = merge_into_dictionary(&lex, &d);
        assert_eq!(report, MergeReport { new_headwords: 1, new_senses: 1 });
        let s = &m.get("soujgih").unwrap().senses[0];
        assert_eq!((s.provenance, s.score), (Provenance::Induced, Some(0.8)));
        assert_eq!(m.get("mbanj").unwrap().senses.len(), 1);

        let (same, r) = merge_into_dictionary(&InducedLexicon::new(vec![], 0.6), &d);
        assert_eq!((same, r), (d, MergeReport::default()));
    }

    #[test]
    fn lexicon_tsv_round_trip() {
        let lex = InducedLexicon::new(
            vec![
                LexiconEntry { source: "b".into(), target: "y".into(), score: 0.7 },
                LexiconEntry { source: "a".into(), target: "x".into(), score: 0.7 },
                LexiconEntry { source: "c".into(), target: "z".into(), score: 0.95 },
            ],
            0.6,
        );
        assert_eq!(lex.entries[0].source, "c");
        assert_eq!(lex.entries[1].source, "a");
        assert_eq!(InducedLexicon::parse_tsv(&lex.to_tsv(), 0.6).unwrap(), lex);
    }
}
