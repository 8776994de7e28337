//! Exemplar retrieval: Okapi BM25, seeded random sampling, POS-sequence edit distance and
//! fixed (first-k) exemplars, plus free-text corpus search.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lang::{fold_case, nfc};
use crate::segment::{Segmenter, TokenKind};
use crate::store::{BilingualDictionary, ParallelCorpus, SentencePair, Side};

pub const DEFAULT_K1: f64 = 1.5;
pub const DEFAULT_B: f64 = 0.75;
pub const UNKNOWN_POS: &str = "X";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Bm25,
    Random,
    Pos,
    /// The first k corpus pairs, as in the original fixed-exemplar setup.
    Fixed,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bm25" => Ok(Strategy::Bm25),
            "random" => Ok(Strategy::Random),
            "pos" => Ok(Strategy::Pos),
            "fixed" => Ok(Strategy::Fixed),
            _ => Err(Error::Config(format!("unknown retrieval strategy `{s}`"))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Bm25 => "bm25",
            Strategy::Random => "random",
            Strategy::Pos => "pos",
            Strategy::Fixed => "fixed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub pair: SentencePair,
    /// BM25 score, POS edit distance, or 0 for random/fixed.
    pub score: f64,
}

/// Retrieved exemplars in rank order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarSet {
    pub exemplars: Vec<Exemplar>,
    pub strategy: Strategy,
    pub k: usize,
}

impl ExemplarSet {
    pub fn empty(strategy: Strategy, k: usize) -> Self {
        Self {
            exemplars: Vec::new(),
            strategy,
            k,
        }
    }

    pub fn ids(&self) -> Vec<u64> {
        self.exemplars.iter().map(|e| e.pair.id).collect()
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }
}

/// Documents never to return for a query.
#[derive(Debug, Clone, Default)]
pub struct Exclusion {
    /// Text (on the indexed side) that must not be returned.
    pub text: Option<String>,
    pub ids: HashSet<u64>,
}

impl Exclusion {
    pub fn none() -> Self {
        Self::default()
    }

    /// Excludes documents whose indexed side equals `query`.
    pub fn identical(query: &str) -> Self {
        Self {
            text: Some(normalize_text(query)),
            ids: HashSet::new(),
        }
    }

    fn excludes(&self, pair: &SentencePair, text: &str) -> bool {
        self.ids.contains(&pair.id) || self.text.as_deref().is_some_and(|q| q == normalize_text(text))
    }
}

fn normalize_text(s: &str) -> String {
    nfc(s.trim())
}

/// Inverted index over one side of a parallel corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bm25Index {
    pub side: Side,
    pub k1: f64,
    pub b: f64,
    segmenter: Segmenter,
    docs: Vec<SentencePair>,
    doc_lens: Vec<u32>,
    avg_doc_len: f64,
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

/// Lowercased word and number tokens.
pub fn index_terms(seg: &Segmenter, text: &str) -> Vec<String> {
    seg.tokenize(text)
        .into_iter()
        .filter(|t| t.kind != TokenKind::Punct)
        .map(|t| fold_case(&t.text))
        .collect()
}

/// `ln((N - df + 0.5) / (df + 0.5) + 1)`.
pub fn bm25_idf(n_docs: usize, df: usize) -> f64 {
    let (n, df) = (n_docs as f64, df as f64);
    ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
}

pub fn bm25_term_weight(tf: f64, doc_len: f64, avg_doc_len: f64, k1: f64, b: f64) -> f64 {
    tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * doc_len / avg_doc_len))
}

fn distinct(terms: Vec<String>) -> Vec<String> {
    let mut seen = HashSet::new();
    terms.into_iter().filter(|t| seen.insert(t.clone())).collect()
}

impl Bm25Index {
    /// Indexes `side` of `corpus`, segmenting with the words `d` knows for that side's language.
    pub fn build(
        corpus: &ParallelCorpus,
        side: Side,
        k1: f64,
        b: f64,
        d: &BilingualDictionary,
    ) -> Result<Self> {
        let seg = Segmenter::for_language(d, side.lang(corpus.direction()));
        Self::build_with(corpus, side, k1, b, seg)
    }

    pub fn build_with(
        corpus: &ParallelCorpus,
        side: Side,
        k1: f64,
        b: f64,
        segmenter: Segmenter,
    ) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Data("cannot index an empty corpus".into()));
        }
        if !(k1 > 0.0) || !(0.0..=1.0).contains(&b) {
            return Err(Error::Config(format!("invalid BM25 parameters k1={k1} b={b}")));
        }
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut doc_lens = Vec::with_capacity(corpus.len());
        for (i, pair) in corpus.pairs().iter().enumerate() {
            let terms = index_terms(&segmenter, side.of(pair));
            doc_lens.push(terms.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in terms {
                *tf.entry(t).or_insert(0) += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push((i as u32, n));
            }
        }
        let avg_doc_len = doc_lens.iter().map(|&l| l as f64).sum::<f64>() / doc_lens.len() as f64;
        Ok(Self {
            side,
            k1,
            b,
            segmenter,
            docs: corpus.pairs().to_vec(),
            doc_lens,
            avg_doc_len,
            postings,
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn doc_lens(&self) -> &[u32] {
        &self.doc_lens
    }

    pub fn docs(&self) -> &[SentencePair] {
        &self.docs
    }

    pub fn segmenter(&self) -> &Segmenter {
        &self.segmenter
    }

    /// `(doc id, tf)` postings for a term.
    pub fn postings(&self, term: &str) -> Vec<(u64, u32)> {
        self.postings
            .get(term)
            .map(|p| p.iter().map(|&(i, tf)| (self.docs[i as usize].id, tf)).collect())
            .unwrap_or_default()
    }

    pub fn query_terms(&self, query: &str) -> Vec<String> {
        distinct(index_terms(&self.segmenter, query))
    }

    /// Scores every document sharing a term with `query`; each distinct query term counts once.
    pub fn scores(&self, query: &str) -> Vec<(usize, f64)> {
        let n = self.docs.len();
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for term in self.query_terms(query) {
            let Some(posting) = self.postings.get(&term) else { continue };
            let idf = bm25_idf(n, posting.len());
            for &(doc, tf) in posting {
                let w = bm25_term_weight(
                    tf as f64,
                    self.doc_lens[doc as usize] as f64,
                    self.avg_doc_len,
                    self.k1,
                    self.b,
                );
                *acc.entry(doc).or_insert(0.0) += idf * w;
            }
        }
        acc.into_iter().map(|(d, s)| (d as usize, s)).collect()
    }

    /// Top `k` documents by BM25 with ties broken by ascending id. Zero-score documents and
    /// excluded documents are never returned.
    pub fn topk(&self, query: &str, k: usize, exclude: &Exclusion) -> ExemplarSet {
        let mut scored: Vec<(usize, f64)> = self
            .scores(query)
            .into_iter()
            .filter(|&(d, s)| {
                let pair = &self.docs[d];
                s > 0.0 && !exclude.excludes(pair, self.side.of(pair))
            })
            .collect();
        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.docs[a.0].id.cmp(&self.docs[b.0].id))
        });
        scored.truncate(k);
        ExemplarSet {
            exemplars: scored
                .into_iter()
                .map(|(d, score)| Exemplar {
                    pair: self.docs[d].clone(),
                    score,
                })
                .collect(),
            strategy: Strategy::Bm25,
            k,
        }
    }

    /// Free-text search: BM25 without self-exclusion, falling back to substring matches
    /// (ascending id) when nothing scores.
    pub fn search(&self, query: &str, k: usize) -> ExemplarSet {
        let query = query.trim();
        if query.is_empty() || k == 0 {
            return ExemplarSet::empty(Strategy::Bm25, k);
        }
        let hits = self.topk(query, k, &Exclusion::none());
        if !hits.is_empty() {
            return hits;
        }
        let needle = fold_case(&nfc(query));
        let exemplars = self
            .docs
            .iter()
            .filter(|p| fold_case(self.side.of(p)).contains(&needle))
            .take(k)
            .map(|p| Exemplar {
                pair: p.clone(),
                score: 0.0,
            })
            .collect();
        ExemplarSet {
            exemplars,
            strategy: Strategy::Bm25,
            k,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn build_bm25(
    corpus: &ParallelCorpus,
    side: Side,
    k1: f64,
    b: f64,
    d: &BilingualDictionary,
) -> Result<Bm25Index> {
    Bm25Index::build(corpus, side, k1, b, d)
}

/// BM25 top-k excluding documents identical to the query.
pub fn bm25_topk(index: &Bm25Index, query: &str, k: usize) -> ExemplarSet {
    index.topk(query, k, &Exclusion::identical(query))
}

/// Uniform sample without replacement, reproducible from `seed`. Asking for more than the
/// corpus holds returns the whole (filtered) corpus shuffled.
pub fn random_topk(corpus: &ParallelCorpus, k: usize, seed: u64, exclude: &Exclusion) -> ExemplarSet {
    let candidates: Vec<&SentencePair> = corpus
        .pairs()
        .iter()
        .filter(|p| !exclude.excludes(p, &p.src))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let exemplars = candidates
        .choose_multiple(&mut rng, k)
        .map(|p| Exemplar {
            pair: (*p).clone(),
            score: 0.0,
        })
        .collect();
    ExemplarSet {
        exemplars,
        strategy: Strategy::Random,
        k,
    }
}

/// The first `k` pairs in ascending id order.
pub fn fixed_topk(corpus: &ParallelCorpus, k: usize, exclude: &Exclusion) -> ExemplarSet {
    let mut pairs: Vec<&SentencePair> = corpus
        .pairs()
        .iter()
        .filter(|p| !exclude.excludes(p, &p.src))
        .collect();
    pairs.sort_by_key(|p| p.id);
    ExemplarSet {
        exemplars: pairs
            .into_iter()
            .take(k)
            .map(|p| Exemplar {
                pair: p.clone(),
                score: 0.0,
            })
            .collect(),
        strategy: Strategy::Fixed,
        k,
    }
}

/// Tags each word token with the POS of its entry's first sense, or `X`.
pub fn pos_sequence(sentence: &str, seg: &Segmenter, d: &BilingualDictionary) -> Vec<String> {
    seg.tokenize(sentence)
        .into_iter()
        .filter(|t| t.kind == TokenKind::Word)
        .map(|t| {
            d.get(&t.text)
                .or_else(|| d.get(&fold_case(&t.text)))
                .and_then(|e| e.first_pos())
                .unwrap_or(UNKNOWN_POS)
                .to_string()
        })
        .collect()
}

/// Token-level edit distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// POS sequences of the source side, for documents with at least one known tag.
#[derive(Debug, Clone, Default)]
pub struct PosIndex {
    docs: Vec<(SentencePair, Vec<String>)>,
}

impl PosIndex {
    pub fn build(corpus: &ParallelCorpus, seg: &Segmenter, d: &BilingualDictionary) -> Self {
        let mut docs: Vec<(SentencePair, Vec<String>)> = corpus
            .pairs()
            .iter()
            .filter_map(|p| {
                let tags = pos_sequence(&p.src, seg, d);
                tags.iter()
                    .any(|t| t != UNKNOWN_POS)
                    .then(|| (p.clone(), tags))
            })
            .collect();
        docs.sort_by_key(|(p, _)| p.id);
        Self { docs }
    }

    pub fn from_sequences(docs: Vec<(SentencePair, Vec<String>)>) -> Self {
        let mut docs = docs;
        docs.sort_by_key(|(p, _)| p.id);
        Self { docs }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&[String]> {
        self.docs
            .iter()
            .find(|(p, _)| p.id == id)
            .map(|(_, t)| t.as_slice())
    }

    /// Nearest documents by POS edit distance; ties by ascending id. The score is the distance.
    pub fn topk(&self, query_pos: &[String], k: usize, exclude: &Exclusion) -> ExemplarSet {
        let mut ranked: Vec<(usize, &SentencePair)> = self
            .docs
            .iter()
            .filter(|(p, _)| !exclude.excludes(p, &p.src))
            .map(|(p, tags)| (levenshtein(query_pos, tags), p))
            .collect();
        ranked.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.id.cmp(&b.1.id)));
        ExemplarSet {
            exemplars: ranked
                .into_iter()
                .take(k)
                .map(|(dist, p)| Exemplar {
                    pair: p.clone(),
                    score: dist as f64,
                })
                .collect(),
            strategy: Strategy::Pos,
            k,
        }
    }
}

pub fn pos_topk(index: &PosIndex, query_pos: &[String], k: usize) -> ExemplarSet {
    index.topk(query_pos, k, &Exclusion::none())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::LangPair;
    use crate::store::Sense;

    fn corpus(srcs: &[&str]) -> ParallelCorpus {
        ParallelCorpus::new(
            LangPair::new("za", "zh"),
            srcs.iter()
                .enumerate()
                .map(|(i, s)| SentencePair::new(i as u64, *s, format!("t{i}")))
                .collect(),
        )
        .unwrap()
    }

    fn empty_dict() -> BilingualDictionary {
        BilingualDictionary::new(LangPair::new("za", "zh"))
    }

    fn index(srcs: &[&str]) -> Bm25Index {
        build_bm25(&corpus(srcs), Side::Src, DEFAULT_K1, DEFAULT_B, &empty_dict()).unwrap()
    }

    #[test]
    fn postings_match_hand_count() {
        let idx = index(&["a b", "b c c", "c d."]);
        assert_eq!(idx.postings("a"), vec![(0, 1)]);
        assert_eq!(idx.postings("b"), vec![(0, 1), (1, 1)]);
        assert_eq!(idx.postings("c"), vec![(1, 2), (2, 1)]);
        assert_eq!(idx.doc_lens(), &[2, 3, 2]);
        assert!((idx.avg_doc_len() - 7.0 / 3.0).abs() < 1e-12);
        assert!(idx.postings(".").is_empty());
    }

    #[test]
    fn unique_term_ranks_first() {
        let idx = index(&["a b", "b c", "zebra b"]);
        let hits = bm25_topk(&idx, "zebra", 3);
        assert_eq!(hits.ids(), vec![2]);
    }

    #[test]
    fn unknown_terms_give_empty_set() {
        let idx = index(&["a b", "b c"]);
        assert!(bm25_topk(&idx, "qqq", 3).is_empty());
    }

    #[test]
    fn identical_document_is_excluded() {
        let idx = index(&["a b", "a b c"]);
        assert_eq!(bm25_topk(&idx, "a b", 3).ids(), vec![1]);
        // search keeps self-hits
        assert_eq!(idx.search("a b", 3).ids()[0], 0);
    }

    #[test]
    fn search_falls_back_to_substrings() {
        let c = ParallelCorpus::new(
            LangPair::new("za", "zh"),
            vec![
                SentencePair::new(0, "x", "你有多少种颜色"),
                SentencePair::new(1, "y", "我们村"),
            ],
        )
        .unwrap();
        let idx = build_bm25(&c, Side::Tgt, DEFAULT_K1, DEFAULT_B, &empty_dict()).unwrap();
        assert_eq!(idx.search("多少种", 5).ids(), vec![0]);
        assert!(idx.search("猫", 5).is_empty());
    }

    #[test]
    fn rejects_bad_inputs() {
        let empty = ParallelCorpus::new(LangPair::new("za", "zh"), vec![]).unwrap();
        assert!(build_bm25(&empty, Side::Src, 1.5, 0.75, &empty_dict()).is_err());
        let c = corpus(&["a"]);
        assert!(build_bm25(&c, Side::Src, 0.0, 0.75, &empty_dict()).is_err());
        assert!(build_bm25(&c, Side::Src, 1.2, 1.5, &empty_dict()).is_err());
    }

    #[test]
    fn random_is_seeded() {
        let c = corpus(&["a", "b", "c", "d", "e", "f"]);
        let a = random_topk(&c, 3, 7, &Exclusion::none());
        let b = random_topk(&c, 3, 7, &Exclusion::none());
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        let all = random_topk(&c, 10, 7, &Exclusion::none());
        let mut ids = all.ids();
        ids.sort();
        assert_eq!(ids, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn random_respects_exclusion() {
        let c = corpus(&["a", "b"]);
        let s = random_topk(&c, 5, 1, &Exclusion::identical("a"));
        assert_eq!(s.ids(), vec![1]);
    }

    #[test]
    fn levenshtein_small_cases() {
        let nvn = ["N", "V", "N"];
        assert_eq!(levenshtein(&nvn, &["N", "N"]), 1);
        assert_eq!(levenshtein(&nvn, &nvn), 0);
        assert_eq!(levenshtein::<&str>(&[], &nvn), 3);
    }

    fn tags(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn pos_ranking() {
        let c = corpus(&["a", "b", "c"]);
        let idx = PosIndex::from_sequences(vec![
            (c.pairs()[0].clone(), tags(&["N", "V"])),
            (c.pairs()[1].clone(), tags(&["N", "V", "N"])),
            (c.pairs()[2].clone(), tags(&["V"])),
        ]);
        let hits = pos_topk(&idx, &tags(&["N", "V", "N"]), 2);
        assert_eq!(hits.ids(), vec![1, 0]);
        assert_eq!(hits.exemplars[0].score, 0.0);
        assert!(pos_topk(&PosIndex::default(), &tags(&["N"]), 2).is_empty());
    }

    #[test]
    fn pos_sequence_tags_and_holes() {
        let mut d = empty_dict();
        d.add_sense("mbanj", Sense::base("村").with_pos("NOUN"));
        d.add_sense("miz", Sense::base("有").with_pos("VERB"));
        d.add_sense("dah", Sense::base("河"));
        let seg = Segmenter::for_language(&d, "za");
        assert_eq!(pos_sequence("Mbanj miz", &seg, &d), tags(&["NOUN", "VERB"]));
        assert_eq!(pos_sequence("dah foo", &seg, &d), tags(&["X", "X"]));
        assert_eq!(pos_sequence("mbanj dou miz", &seg, &d), tags(&["NOUN", "X", "VERB"]));

        let c = corpus(&["dah foo", "mbanj dah"]);
        let idx = PosIndex::build(&c, &seg, &d);
        assert_eq!(idx.len(), 1);
        assert!(idx.get(0).is_none());
    }

    #[test]
    fn fixed_takes_first_ids() {
        let c = corpus(&["a", "b", "c", "d"]);
        assert_eq!(fixed_topk(&c, 2, &Exclusion::identical("a")).ids(), vec![1, 2]);
    }
}
