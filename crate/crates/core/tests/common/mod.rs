//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use glossmt_core::pipeline::RunConfig;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Toy run config rooted at the fixture directory, writing into `out`.
pub fn toy_config(direction: &str, out: &Path) -> RunConfig {
    let text = format!(
        r#"
direction = "{direction}"
seed = 7
output_dir = "{}"

[paths]
dictionary = "dict_za_zh.jsonl"
dictionary_direction = "za-zh"
corpus = "corpus.jsonl"
synonyms = "synonyms_zh.tsv"
synonyms_lang = "zh"
monolingual = "mono_za.txt"
test = "test.jsonl"

[backend]
kind = "mock"
parallelism = 3
"#,
        out.display()
    );
    RunConfig::from_toml(&text, &fixture_dir()).expect("toy config parses")
}

/// Every n-gram of `items`, listed position by position.
fn all_ngrams<T: Clone>(items: &[T], n: usize) -> Vec<Vec<T>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i + n <= items.len() {
        out.push(items[i..i + n].to_vec());
        i += 1;
    }
    out
}

fn count<T: PartialEq>(list: &[Vec<T>], g: &[T]) -> usize {
    list.iter().filter(|x| x.as_slice() == g).count()
}

/// Clipped matches, hypothesis total and reference total for order `n`, by enumerating
/// each distinct hypothesis n-gram and counting it on both sides with linear scans.
pub fn brute_clip<T: PartialEq + Clone>(hyp: &[T], reference: &[T], n: usize) -> (usize, usize, usize) {
    let hg = all_ngrams(hyp, n);
    let rg = all_ngrams(reference, n);
    let mut seen: Vec<Vec<T>> = Vec::new();
    let mut matches = 0;
    for g in &hg {
        if seen.iter().any(|s| s == g) {
            continue;
        }
        seen.push(g.clone());
        matches += count(&hg, g).min(count(&rg, g));
    }
    (matches, hg.len(), rg.len())
}

/// Corpus BLEU-4 (x100) from pre-tokenized sentences: pooled clipped precisions, no
/// smoothing, brevity penalty exp(1 - r/c) when c < r.
pub fn oracle_bleu(hyps: &[Vec<String>], refs: &[Vec<String>]) -> f64 {
    let mut m = [0usize; 4];
    let mut t = [0usize; 4];
    let (mut c, mut r) = (0usize, 0usize);
    for (h, rf) in hyps.iter().zip(refs) {
        c += h.len();
        r += rf.len();
        for n in 1..=4 {
            let (mm, th, _) = brute_clip(h, rf, n);
            m[n - 1] += mm;
            t[n - 1] += th;
        }
    }
    if (0..4).any(|i| m[i] == 0 || t[i] == 0) {
        return 0.0;
    }
    let log_p: f64 = (0..4).map(|i| (m[i] as f64 / t[i] as f64).ln()).sum::<f64>() / 4.0;
    let bp = if c == 0 {
        0.0
    } else if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    };
    100.0 * bp * log_p.exp()
}

/// Corpus chrF (x100): character 1..6-grams without whitespace, precision and recall
/// averaged over orders with n-grams on both sides, beta = 2.
pub fn oracle_chrf(hyps: &[&str], refs: &[&str]) -> f64 {
    let mut m = [0usize; 6];
    let mut th = [0usize; 6];
    let mut tr = [0usize; 6];
    for (h, r) in hyps.iter().zip(refs) {
        let hc: Vec<char> = h.chars().filter(|c| !c.is_whitespace()).collect();
        let rc: Vec<char> = r.chars().filter(|c| !c.is_whitespace()).collect();
        for n in 1..=6 {
            let (mm, a, b) = brute_clip(&hc, &rc, n);
            m[n - 1] += mm;
            th[n - 1] += a;
            tr[n - 1] += b;
        }
    }
    let mut p = 0.0;
    let mut rec = 0.0;
    let mut k = 0.0;
    for n in 0..6 {
        if th[n] > 0 && tr[n] > 0 {
            p += m[n] as f64 / th[n] as f64;
            rec += m[n] as f64 / tr[n] as f64;
            k += 1.0;
        }
    }
    if k == 0.0 {
        return 0.0;
    }
    p /= k;
    rec /= k;
    if p + rec == 0.0 {
        return 0.0;
    }
    100.0 * 5.0 * p * rec / (4.0 * p + rec)
}

/// Okapi BM25 by scoring every document against the raw term lists.
/// Returns `(doc index, score)` for positive scores, best first, ties by index.
pub fn oracle_bm25(docs: &[Vec<String>], query: &[String], k1: f64, b: f64) -> Vec<(usize, f64)> {
    let n = docs.len() as f64;
    let avg = docs.iter().map(|d| d.len() as f64).sum::<f64>() / n;
    let mut terms: Vec<&String> = Vec::new();
    for q in query {
        if !terms.contains(&q) {
            terms.push(q);
        }
    }
    let mut scored: Vec<(usize, f64)> = docs
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let dl = d.len() as f64;
            let s: f64 = terms
                .iter()
                .map(|t| {
                    let df = docs.iter().filter(|x| x.contains(t)).count() as f64;
                    let tf = d.iter().filter(|x| x == t).count() as f64;
                    if tf == 0.0 {
                        return 0.0;
                    }
                    let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
                    idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avg))
                })
                .sum();
            (i, s)
        })
        .filter(|&(_, s)| s > 0.0)
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored
}
