//! Corpus BLEU and chrF.
//!
//! BLEU is BLEU-4 over pooled clipped n-gram counts with the exponential brevity penalty and
//! no smoothing: any order with zero matches (or no hypothesis n-grams) scores 0. chrF uses
//! character 1..6-grams with whitespace removed, averages precision and recall over the
//! orders present in both hypothesis and reference, and combines them with beta = 2.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lang::{is_han, is_number, is_punct, is_symbol};

pub const BLEU_ORDER: usize = 4;
pub const CHRF_ORDER: usize = 6;
pub const CHRF_BETA: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tokenization {
    /// Punctuation split from words unless inside a number; symbols always split.
    #[default]
    Intl,
    /// Every Han character is a token; other runs as `Intl`.
    HanAware,
}

impl std::str::FromStr for Tokenization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intl" => Ok(Self::Intl),
            "han-aware" | "han" | "zh" => Ok(Self::HanAware),
            _ => Err(Error::Config(format!("unknown tokenization `{s}`"))),
        }
    }
}

pub fn tokenize_intl(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len() + 8);
    for (i, &c) in chars.iter().enumerate() {
        let split = if is_symbol(c) {
            true
        } else if is_punct(c) {
            let prev_non_num = i > 0 && !is_number(chars[i - 1]);
            let next_non_num = i + 1 < chars.len() && !is_number(chars[i + 1]);
            prev_non_num || next_non_num
        } else {
            false
        };
        if split {
            out.push(' ');
            out.push(c);
            out.push(' ');
        } else {
            out.push(c);
        }
    }
    out.split_whitespace().map(String::from).collect()
}

pub fn tokenize_han_aware(text: &str) -> Vec<String> {
    let mut spaced = String::with_capacity(text.len() * 2);
    for c in text.chars() {
        if is_han(c) {
            spaced.push(' ');
            spaced.push(c);
            spaced.push(' ');
        } else {
            spaced.push(c);
        }
    }
    tokenize_intl(&spaced)
}

pub fn tokenize(text: &str, mode: Tokenization) -> Vec<String> {
    match mode {
        Tokenization::Intl => tokenize_intl(text),
        Tokenization::HanAware => tokenize_han_aware(text),
    }
}

fn ngram_counts<T: std::hash::Hash + Eq + Clone>(items: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut m = HashMap::new();
    if items.len() >= n {
        for w in items.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

fn clipped_matches<T: std::hash::Hash + Eq + Clone>(hyp: &[T], reference: &[T], n: usize) -> (usize, usize, usize) {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    let matches = h
        .iter()
        .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    (
        matches,
        hyp.len().saturating_sub(n - 1),
        reference.len().saturating_sub(n - 1),
    )
}

/// Sufficient statistics for BLEU; summing them pools a corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuStats {
    pub matches: [usize; BLEU_ORDER],
    pub totals: [usize; BLEU_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn from_tokens(hyp: &[String], reference: &[String]) -> Self {
        let mut s = Self {
            hyp_len: hyp.len(),
            ref_len: reference.len(),
            ..Self::default()
        };
        for n in 1..=BLEU_ORDER {
            let (m, t, _) = clipped_matches(hyp, reference, n);
            s.matches[n - 1] = m;
            s.totals[n - 1] = t;
        }
        s
    }

    pub fn from_pair(hyp: &str, reference: &str, tok: Tokenization) -> Self {
        Self::from_tokens(&tokenize(hyp, tok), &tokenize(reference, tok))
    }

    pub fn add(&mut self, other: &Self) {
        for n in 0..BLEU_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len >= self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        }
    }

    /// BLEU in [0, 100].
    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 || self.matches.iter().any(|&m| m == 0) {
            return 0.0;
        }
        let log_mean = (0..BLEU_ORDER)
            .map(|n| (self.matches[n] as f64 / self.totals[n] as f64).ln())
            .sum::<f64>()
            / BLEU_ORDER as f64;
        100.0 * self.brevity_penalty() * log_mean.exp()
    }
}

fn check_lengths(hyps: usize, refs: usize) -> Result<()> {
    if hyps != refs {
        return Err(Error::Data(format!(
            "{hyps} hypotheses but {refs} references"
        )));
    }
    if hyps == 0 {
        return Err(Error::Data("no instances to score".into()));
    }
    Ok(())
}

pub fn bleu_stats<S: AsRef<str>>(hyps: &[S], refs: &[S], tok: Tokenization) -> Result<BleuStats> {
    check_lengths(hyps.len(), refs.len())?;
    let mut total = BleuStats::default();
    for (h, r) in hyps.iter().zip(refs) {
        total.add(&BleuStats::from_pair(h.as_ref(), r.as_ref(), tok));
    }
    Ok(total)
}

/// Corpus BLEU over pooled statistics.
pub fn bleu<S: AsRef<str>>(hyps: &[S], refs: &[S], tok: Tokenization) -> Result<f64> {
    Ok(bleu_stats(hyps, refs, tok)?.score())
}

/// Per-order (hyp n-grams, ref n-grams, matches) for chrF.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChrfStats {
    pub hyp: [usize; CHRF_ORDER],
    pub reference: [usize; CHRF_ORDER],
    pub matches: [usize; CHRF_ORDER],
}

impl ChrfStats {
    pub fn from_pair(hyp: &str, reference: &str) -> Self {
        let h: Vec<char> = hyp.chars().filter(|c| !c.is_whitespace()).collect();
        let r: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
        let mut s = Self::default();
        for n in 1..=CHRF_ORDER {
            let (m, th, tr) = clipped_matches(&h, &r, n);
            s.matches[n - 1] = m;
            s.hyp[n - 1] = th;
            s.reference[n - 1] = tr;
        }
        s
    }

    pub fn add(&mut self, other: &Self) {
        for n in 0..CHRF_ORDER {
            self.hyp[n] += other.hyp[n];
            self.reference[n] += other.reference[n];
            self.matches[n] += other.matches[n];
        }
    }

    /// chrF in [0, 100].
    pub fn score(&self) -> f64 {
        let (mut p, mut r, mut orders) = (0.0, 0.0, 0usize);
        for n in 0..CHRF_ORDER {
            if self.hyp[n] > 0 && self.reference[n] > 0 {
                p += self.matches[n] as f64 / self.hyp[n] as f64;
                r += self.matches[n] as f64 / self.reference[n] as f64;
                orders += 1;
            }
        }
        if orders == 0 {
            return 0.0;
        }
        p /= orders as f64;
        r /= orders as f64;
        if p + r == 0.0 {
            return 0.0;
        }
        let beta2 = CHRF_BETA * CHRF_BETA;
        100.0 * (1.0 + beta2) * p * r / (beta2 * p + r)
    }
}

pub fn chrf_stats<S: AsRef<str>>(hyps: &[S], refs: &[S]) -> Result<ChrfStats> {
    check_lengths(hyps.len(), refs.len())?;
    let mut total = ChrfStats::default();
    for (h, r) in hyps.iter().zip(refs) {
        total.add(&ChrfStats::from_pair(h.as_ref(), r.as_ref()));
    }
    Ok(total)
}

pub fn chrf<S: AsRef<str>>(hyps: &[S], refs: &[S]) -> Result<f64> {
    Ok(chrf_stats(hyps, refs)?.score())
}

pub const KNOWN_TAGS: [&str; 3] = ["easy", "medium", "hard"];
pub const UNTAGGED: &str = "untagged";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub bleu: f64,
    pub chrf: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bleu: f64,
    pub chrf: f64,
    pub n: usize,
    pub tokenization: Tokenization,
    pub by_tag: BTreeMap<String, Scores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentences: Option<Vec<Scores>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalInstance {
    pub hyp: String,
    pub reference: String,
    #[serde(default)]
    pub tag: Option<String>,
}

impl EvalInstance {
    pub fn new(hyp: impl Into<String>, reference: impl Into<String>, tag: Option<&str>) -> Self {
        Self {
            hyp: hyp.into(),
            reference: reference.into(),
            tag: tag.map(String::from),
        }
    }
}

fn tag_bucket(tag: Option<&str>) -> &str {
    match tag {
        Some(t) if KNOWN_TAGS.contains(&t) => t,
        _ => UNTAGGED,
    }
}

/// Pooled corpus scores overall and per difficulty tag.
pub fn evaluate(instances: &[EvalInstance], tok: Tokenization, per_sentence: bool) -> Result<EvalReport> {
    if instances.is_empty() {
        return Err(Error::Data("no instances to evaluate".into()));
    }
    let mut all = (BleuStats::default(), ChrfStats::default());
    let mut groups: BTreeMap<String, (BleuStats, ChrfStats, usize)> = BTreeMap::new();
    let mut sentences = Vec::new();
    for inst in instances {
        let b = BleuStats::from_pair(&inst.hyp, &inst.reference, tok);
        let c = ChrfStats::from_pair(&inst.hyp, &inst.reference);
        all.0.add(&b);
        all.1.add(&c);
        let g = groups
            .entry(tag_bucket(inst.tag.as_deref()).to_string())
            .or_default();
        g.0.add(&b);
        g.1.add(&c);
        g.2 += 1;
        if per_sentence {
            sentences.push(Scores {
                bleu: b.score(),
                chrf: c.score(),
                n: 1,
            });
        }
    }
    Ok(EvalReport {
        bleu: all.0.score(),
        chrf: all.1.score(),
        n: instances.len(),
        tokenization: tok,
        by_tag: groups
            .into_iter()
            .map(|(k, (b, c, n))| {
                (
                    k,
                    Scores {
                        bleu: b.score(),
                        chrf: c.score(),
                        n,
                    },
                )
            })
            .collect(),
        sentences: per_sentence.then_some(sentences),
    })
}
