mod common;

use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use glossmt_core::metrics::{bleu, chrf, tokenize, Tokenization};
use glossmt_core::pipeline::{prepare, Resources};
use glossmt_core::prompt::{coverage, Glosser, PromptConfig, Strategies};
use glossmt_core::retrieve::{levenshtein, Bm25Index};
use glossmt_core::segment::{max_match_by, MatchDirection, Segmenter};
use glossmt_core::store::{expand_with_synonyms, BilingualDictionary, ParallelCorpus, SentencePair, Side, SynonymList};
use glossmt_core::LangPair;

use common::*;

fn word() -> impl Strategy<Value = String> {
    "[a-f]{1,4}"
}

fn sentence() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[a-e]{1,2}", 0..10)
}

fn prepared(direction: &str) -> &'static Resources {
    static ZA: OnceLock<Resources> = OnceLock::new();
    static ZH: OnceLock<Resources> = OnceLock::new();
    let cell = if direction == "za2zh" { &ZA } else { &ZH };
    cell.get_or_init(|| {
        let out = std::env::temp_dir().join(format!("glossmt-props-{direction}-{}", std::process::id()));
        prepare(&toy_config(direction, &out)).unwrap()
    })
}

fn all_flag_sets() -> Vec<Strategies> {
    let mut v = Vec::new();
    for m in 0..8u8 {
        v.push(Strategies {
            fuzzy: m & 1 != 0,
            bli: m & 2 != 0,
            synonym: m & 4 != 0,
        });
    }
    v
}

fn subset(a: Strategies, b: Strategies) -> bool {
    (!a.fuzzy || b.fuzzy) && (!a.bli || b.bli) && (!a.synonym || b.synonym)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dictionary_jsonl_round_trips(pairs in prop::collection::vec((word(), prop::collection::vec("[g-k]{1,3}", 1..3)), 0..12)) {
        let dir = LangPair::new("za", "zh");
        let d = BilingualDictionary::from_pairs(dir.clone(), pairs.iter().map(|(w, s)| (w.as_str(), s.iter().map(String::as_str).collect::<Vec<_>>())));
        let back = BilingualDictionary::parse_jsonl(&d.to_jsonl(), dir, Path::new("mem")).unwrap();
        prop_assert_eq!(back, d);
    }

    #[test]
    fn synonym_expansion_is_idempotent(
        pairs in prop::collection::vec((word(), "[g-k]{1,3}"), 1..8),
        rows in prop::collection::vec(prop::collection::vec(word(), 2..4), 0..5),
    ) {
        let d = BilingualDictionary::from_pairs(LangPair::new("zh", "za"), pairs.iter().map(|(w, s)| (w.as_str(), [s.as_str()])));
        let mut syn = SynonymList::new();
        for r in &rows {
            let rest: Vec<&str> = r[1..].iter().map(String::as_str).collect();
            syn.insert(&r[0], &rest);
        }
        let (once, _) = expand_with_synonyms(&d, &syn);
        let (twice, added) = expand_with_synonyms(&once, &syn);
        prop_assert_eq!(added, 0);
        prop_assert_eq!(twice, once.clone());
        for e in d.entries() {
            prop_assert_eq!(once.get(&e.headword), Some(e));
        }
    }

    #[test]
    fn max_match_tiles_when_every_char_is_known(
        extra in prop::collection::vec("[a-d]{2,4}", 0..6),
        w in "[a-d]{0,12}",
    ) {
        let mut known: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        known.extend(extra);
        let has = |s: &str| known.iter().any(|k| k == s);
        for dir in [MatchDirection::Forward, MatchDirection::Backward] {
            let pieces = max_match_by(&w, &has, 4, dir);
            let joined: String = pieces.iter().map(|(h, _)| h.as_str()).collect();
            prop_assert_eq!(&joined, &w);
            for (h, l) in &pieces {
                prop_assert!(has(h));
                prop_assert_eq!(h.chars().count(), *l);
            }
        }
    }

    #[test]
    fn max_match_pieces_are_ordered_substrings(
        known in prop::collection::vec("[a-d]{1,3}", 0..6),
        w in "[a-e]{0,12}",
    ) {
        let has = |s: &str| known.iter().any(|k| k == s);
        for dir in [MatchDirection::Forward, MatchDirection::Backward] {
            let mut rest = w.as_str();
            for (h, _) in max_match_by(&w, &has, 3, dir) {
                let at = rest.find(h.as_str());
                prop_assert!(at.is_some(), "{} not found in {}", h, rest);
                rest = &rest[at.unwrap() + h.len()..];
            }
        }
    }

    #[test]
    fn bm25_matches_brute_force(docs in prop::collection::vec(prop::collection::vec("w[a-e]", 1..8), 1..12), query in prop::collection::vec("w[a-f]", 1..4)) {
        let pairs: Vec<SentencePair> = docs.iter().enumerate().map(|(i, d)| SentencePair::new(i as u64 + 1, d.join(" "), "x")).collect();
        let corpus = ParallelCorpus::new(LangPair::new("za", "zh"), pairs).unwrap();
        let index = Bm25Index::build_with(&corpus, Side::Src, 1.5, 0.75, Segmenter::new("za", Vec::<String>::new())).unwrap();
        let got: HashMap<usize, f64> = index.scores(&query.join(" ")).into_iter().filter(|&(_, s)| s > 0.0).collect();
        let want = oracle_bm25(&docs, &query, 1.5, 0.75);
        prop_assert_eq!(got.len(), want.len());
        for (i, s) in want {
            assert_abs_diff_eq!(got[&i], s, epsilon = 1e-9);
        }
    }

    #[test]
    fn levenshtein_is_a_metric(a in sentence(), b in sentence(), c in sentence()) {
        let ab = levenshtein(&a, &b);
        prop_assert_eq!(levenshtein(&a, &a), 0);
        prop_assert_eq!(ab, levenshtein(&b, &a));
        prop_assert!(ab <= a.len().max(b.len()));
        prop_assert!(ab >= a.len().abs_diff(b.len()));
        prop_assert!(levenshtein(&a, &c) <= ab + levenshtein(&b, &c));
        prop_assert_eq!(ab == 0, a == b);
    }

    #[test]
    fn corpus_scores_ignore_pair_order_and_stay_bounded(
        pairs in prop::collection::vec((sentence(), sentence()), 1..8),
        rot in 0usize..8,
    ) {
        let hyps: Vec<String> = pairs.iter().map(|p| p.0.join(" ")).collect();
        let refs: Vec<String> = pairs.iter().map(|p| p.1.join(" ")).collect();
        let b = bleu(&hyps, &refs, Tokenization::Intl).unwrap();
        let c = chrf(&hyps, &refs).unwrap();
        prop_assert!((0.0..=100.0).contains(&b));
        prop_assert!((0.0..=100.0 + 1e-9).contains(&c));

        let k = rot % pairs.len();
        let mut h2 = hyps.clone();
        let mut r2 = refs.clone();
        h2.rotate_left(k);
        r2.rotate_left(k);
        h2.reverse();
        r2.reverse();
        assert_abs_diff_eq!(bleu(&h2, &r2, Tokenization::Intl).unwrap(), b, epsilon = 1e-9);
        assert_abs_diff_eq!(chrf(&h2, &r2).unwrap(), c, epsilon = 1e-9);

        let toks = |v: &[String]| v.iter().map(|s| tokenize(s, Tokenization::Intl)).collect::<Vec<_>>();
        assert_abs_diff_eq!(b, oracle_bleu(&toks(&hyps), &toks(&refs)), epsilon = 1e-6);
        let hs: Vec<&str> = hyps.iter().map(String::as_str).collect();
        let rs: Vec<&str> = refs.iter().map(String::as_str).collect();
        assert_abs_diff_eq!(c, oracle_chrf(&hs, &rs), epsilon = 1e-6);
    }

    #[test]
    fn identical_output_scores_full_marks(s in prop::collection::vec("[a-e]{1,3}", 4..10)) {
        let line = vec![s.join(" ")];
        assert_abs_diff_eq!(bleu(&line, &line, Tokenization::Intl).unwrap(), 100.0, epsilon = 1e-9);
        assert_abs_diff_eq!(chrf(&line, &line).unwrap(), 100.0, epsilon = 1e-9);
    }

    #[test]
    fn za_coverage_grows_with_strategies(
        words in prop::collection::vec(prop::sample::select(vec![
            "Gou", "gwn", "haeux", "bya", "gaeq", "Vunzlai", "Ngoenzcog", "mbanj", "raemx", "lai", "xyz", "dou", "miz",
        ]), 1..8),
    ) {
        let res = prepared("za2zh");
        let sent = format!("{}.", words.join(" "));
        let mut cov = Vec::new();
        for s in all_flag_sets() {
            let mut cfg = PromptConfig::new(res.direction.clone());
            cfg.strategies = s;
            cov.push((s, coverage(&Glosser::with_segmenter(&res.dictionary, &res.segmenter, &cfg).gloss(&sent))));
        }
        for &(a, ca) in &cov {
            for &(b, cb) in &cov {
                if subset(a, b) {
                    prop_assert!(ca <= cb + 1e-12, "{:?} {} > {:?} {}", a, ca, b, cb);
                }
            }
        }
    }

    #[test]
    fn zh_coverage_grows_with_strategies(
        chars in prop::collection::vec(prop::sample::select(vec![
            "我", "们", "村", "大", "母亲", "父亲", "小孩", "吃", "饭", "鱼", "鸡", "喝", "水", "天",
        ]), 1..8),
    ) {
        let res = prepared("zh2za");
        let sent = format!("{}。", chars.concat());
        let full = PromptConfig::new(res.direction.clone());
        let top = coverage(&Glosser::with_segmenter(&res.dictionary, &res.segmenter, &full).gloss(&sent));
        for s in all_flag_sets() {
            let mut cfg = full.clone();
            cfg.strategies = s;
            let c = coverage(&Glosser::with_segmenter(&res.dictionary, &res.segmenter, &cfg).gloss(&sent));
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert!(c <= top + 1e-12);
        }
    }
}

#[test]
fn pooled_bleu_differs_from_sentence_mean() {
    let hyps = ["a b c d e f", "x y"];
    let refs = ["a b c d e f", "x z"];
    let pooled = bleu(&hyps, &refs, Tokenization::Intl).unwrap();
    let mean = hyps
        .iter()
        .zip(&refs)
        .map(|(h, r)| bleu(&[*h], &[*r], Tokenization::Intl).unwrap())
        .sum::<f64>()
        / 2.0;
    // the second sentence has no 4-gram at all, so its sentence score is 0
    assert_abs_diff_eq!(mean, 50.0, epsilon = 1e-9);
    let toks = |v: &[&str]| v.iter().map(|s| tokenize(s, Tokenization::Intl)).collect::<Vec<_>>();
    assert_abs_diff_eq!(pooled, oracle_bleu(&toks(&hyps), &toks(&refs)), epsilon = 1e-9);
    assert!((pooled - mean).abs() > 1.0, "pooled {pooled} mean {mean}");
}
