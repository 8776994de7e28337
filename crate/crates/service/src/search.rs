use std::collections::HashSet;

use glossmt_core::lang::{fold_case, nfc};
use glossmt_core::retrieve::Bm25Index;
use glossmt_core::segment::fuzzy_lookup;
use glossmt_core::store::{BilingualDictionary, Sense};
use serde::{Deserialize, Serialize};

pub const DICT_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchType {
    Exact,
    Fuzzy,
    Prefix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictHit {
    pub headword: String,
    pub match_type: MatchType,
    pub senses: Vec<Sense>,
}

/// Exact headword first, then fuzzy decomposition matches, then headwords starting with
/// the query (shortest first), at most `limit` in all.
pub fn search_dictionary(d: &BilingualDictionary, query: &str, limit: usize) -> Vec<DictHit> {
    let q = nfc(query.trim());
    if q.is_empty() || limit == 0 {
        return Vec::new();
    }
    let folded = fold_case(&q);
    let mut seen: HashSet<String> = HashSet::new();
    let mut out = Vec::new();
    let mut push = |out: &mut Vec<DictHit>, headword: &str, match_type: MatchType| {
        if out.len() < limit && seen.insert(headword.to_string()) {
            if let Some(e) = d.get(headword) {
                out.push(DictHit {
                    headword: e.headword.clone(),
                    match_type,
                    senses: e.senses.clone(),
                });
            }
        }
    };

    for h in [&q, &folded] {
        if d.contains(h) {
            push(&mut out, h, MatchType::Exact);
        }
    }
    for m in fuzzy_lookup(&q, d).matches {
        push(&mut out, &m.headword, MatchType::Fuzzy);
    }
    let mut prefixed: Vec<&str> = d
        .headwords()
        .filter(|h| fold_case(h).starts_with(&folded))
        .collect();
    prefixed.sort_by_key(|h| h.chars().count());
    for h in prefixed {
        push(&mut out, h, MatchType::Prefix);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusHit {
    pub id: u64,
    pub src: String,
    pub tgt: String,
    pub score: f64,
}

pub fn search_corpus(index: &Bm25Index, query: &str, k: usize) -> Vec<CorpusHit> {
    index
        .search(query, k)
        .exemplars
        .into_iter()
        .map(|e| CorpusHit {
            id: e.pair.id,
            src: e.pair.src,
            tgt: e.pair.tgt,
            score: e.score,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use glossmt_core::LangPair;

    fn dict() -> BilingualDictionary {
        BilingualDictionary::from_pairs(
            LangPair::new("zh", "za"),
            [("日常", ["ngoenzngoenz"]), ("生活", ["gwndaenj"]), ("日", ["ngoenz"]), ("日常用品", ["doxgaiq"])],
        )
    }

    #[test]
    fn exact_then_fuzzy_then_prefix() {
        let hits = search_dictionary(&dict(), "日常", 10);
        assert_eq!(hits[0].headword, "日常");
        assert_eq!(hits[0].match_type, MatchType::Exact);
        assert!(hits.iter().any(|h| h.headword == "日常用品" && h.match_type == MatchType::Prefix));

        let hits = search_dictionary(&dict(), "日常生活", 10);
        let kinds: Vec<_> = hits.iter().map(|h| (h.headword.as_str(), h.match_type)).collect();
        assert_eq!(kinds, [("日常", MatchType::Fuzzy), ("生活", MatchType::Fuzzy)]);
    }

    #[test]
    fn empty_query_and_limit() {
        assert!(search_dictionary(&dict(), "  ", 10).is_empty());
        assert_eq!(search_dictionary(&dict(), "日", 2).len(), 2);
    }
}
