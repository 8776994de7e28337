//! Prompt rendering for dictionary-gloss translation.
//!
//! Three modes are supported: `dipmt` (per-word "in this context, the word ... means ..."
//! lines with fixed exemplars), `dipmt++` (glosses for every covered word plus retrieved
//! exemplars) and `cot-syntax` (a `dipmt++` query block followed by an explicit word-order
//! rule and a step-by-step analysis scaffold).
//!
//! Rendering is a pure function of its inputs. When `embed_trace` is on, the first line of
//! the prompt is a machine-readable comment carrying the query glosses; the mock backend
//! reads it and real backends strip it.

use std::borrow::Cow;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lang::{fold_case, is_unsegmented_lang, lang_name, LangPair};
use crate::retrieve::ExemplarSet;
use crate::segment::{fuzzy_lookup_by, Segmenter, TokenKind};
use crate::store::{BilingualDictionary, DictEntry, Provenance, Sense};

pub const TRACE_PREFIX: &str = "<!-- glossmt-trace ";
pub const TRACE_SUFFIX: &str = " -->";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PromptMode {
    #[serde(rename = "dipmt")]
    Dipmt,
    #[serde(rename = "dipmt++")]
    DipmtPlusPlus,
    #[serde(rename = "cot-syntax")]
    CotSyntax,
}

impl std::str::FromStr for PromptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dipmt" | "dipmt-classic" => Ok(Self::Dipmt),
            "dipmt++" => Ok(Self::DipmtPlusPlus),
            "cot-syntax" => Ok(Self::CotSyntax),
            _ => Err(Error::Config(format!("unknown prompt mode `{s}`"))),
        }
    }
}

/// Lexical-coverage strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strategies {
    pub fuzzy: bool,
    pub bli: bool,
    pub synonym: bool,
}

impl Strategies {
    pub const ALL: Self = Self {
        fuzzy: true,
        bli: true,
        synonym: true,
    };
    pub const NONE: Self = Self {
        fuzzy: false,
        bli: false,
        synonym: false,
    };

    pub fn allows(&self, provenance: Provenance) -> bool {
        match provenance {
            Provenance::Base => true,
            Provenance::Induced => self.bli,
            Provenance::Synonym => self.synonym,
        }
    }
}

impl Default for Strategies {
    fn default() -> Self {
        Self::ALL
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModifierHint {
    pub modifier: String,
    pub head: String,
}

/// Instruction phrasing. Placeholders are written `{{name}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    /// Language-name set for `{{src}}`/`{{tgt}}`: `zh` or `en`.
    pub names: String,
    pub layout: String,
    pub instruction: String,
    pub monolingual: String,
    pub exemplar: String,
    pub query: String,
    pub gloss_line: String,
    pub gloss_item: String,
    pub gloss_item_sep: String,
    pub meaning: String,
    pub meaning_sep: String,
    pub cot_query: String,
    pub cot_rule: String,
    pub cot_hint: String,
    pub cot_answer: String,
    pub dipmt_instruction: String,
    pub dipmt_exemplar: String,
    pub dipmt_query: String,
    pub dipmt_gloss: String,
    pub dipmt_meaning: String,
    pub dipmt_meaning_sep: String,
}

const ZH_TEMPLATE: &str = include_str!("../templates/zh.toml");
const EN_TEMPLATE: &str = include_str!("../templates/en.toml");

impl PromptTemplate {
    pub fn chinese() -> Self {
        toml::from_str(ZH_TEMPLATE).expect("bundled zh template parses")
    }

    pub fn english() -> Self {
        toml::from_str(EN_TEMPLATE).expect("bundled en template parses")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("prompt template: {e}")))
    }

    /// `zh`, `en`, or a path to a template file.
    pub fn resolve(name: &str, base_dir: &Path) -> Result<Self> {
        match name {
            "zh" => Ok(Self::chinese()),
            "en" => Ok(Self::english()),
            path => {
                let p = base_dir.join(path);
                let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                Self::from_toml(&text)
            }
        }
    }

    fn lang(&self, code: &str) -> String {
        lang_name(code, self.names == "zh")
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::chinese()
    }
}

/// Replaces `{{name}}` placeholders in one pass; substituted values are not re-scanned.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) => {
                let name = &after[..close];
                match vars.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        out.push_str("{{");
                        out.push_str(name);
                        out.push_str("}}");
                    }
                }
                rest = &after[close + 2..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub mode: PromptMode,
    pub k: usize,
    pub senses_per_word: usize,
    pub strategies: Strategies,
    pub monolingual_budget: usize,
    pub direction: LangPair,
    /// Language of the monolingual excerpt; defaults to the target language.
    pub monolingual_lang: Option<String>,
    pub syntax_rule: Option<String>,
    pub modifier_hints: Vec<ModifierHint>,
    pub template: PromptTemplate,
    pub embed_trace: bool,
}

impl PromptConfig {
    pub fn new(direction: LangPair) -> Self {
        Self {
            mode: PromptMode::DipmtPlusPlus,
            k: 3,
            senses_per_word: 2,
            strategies: Strategies::ALL,
            monolingual_budget: 0,
            direction,
            monolingual_lang: None,
            syntax_rule: None,
            modifier_hints: Vec::new(),
            template: PromptTemplate::chinese(),
            embed_trace: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.senses_per_word == 0 {
            return Err(Error::Config("senses_per_word must be at least 1".into()));
        }
        if self.mode == PromptMode::CotSyntax
            && self.syntax_rule.as_deref().map_or(true, str::is_empty)
            && self.modifier_hints.is_empty()
        {
            return Err(Error::Config(
                "cot-syntax mode needs a syntax rule or modifier hints".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlossOrigin {
    Exact,
    Fuzzy,
    Induced,
    Synonym,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gloss {
    pub text: String,
    pub origin: GlossOrigin,
    /// Related headword a fuzzy gloss came from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub via: Option<String>,
}

/// Candidate meanings for one token. Punctuation and numbers carry no glosses and are not
/// counted by [`coverage`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordGloss {
    pub surface: String,
    pub kind: TokenKind,
    pub glosses: Vec<Gloss>,
    pub covered: bool,
}

fn allowed_senses<'a>(entry: &'a DictEntry, strategies: &'a Strategies) -> impl Iterator<Item = &'a Sense> {
    entry.senses.iter().filter(|s| strategies.allows(s.provenance))
}

/// Looks up words for glossing under one strategy configuration.
#[derive(Debug, Clone)]
pub struct Glosser<'a> {
    dict: &'a BilingualDictionary,
    segmenter: Cow<'a, Segmenter>,
    strategies: Strategies,
    senses_per_word: usize,
}

impl<'a> Glosser<'a> {
    pub fn new(dict: &'a BilingualDictionary, cfg: &PromptConfig) -> Self {
        Self::build(dict, Cow::Owned(Segmenter::for_language(dict, &dict.direction().src)), cfg)
    }

    pub fn with_segmenter(dict: &'a BilingualDictionary, segmenter: &'a Segmenter, cfg: &PromptConfig) -> Self {
        Self::build(dict, Cow::Borrowed(segmenter), cfg)
    }

    fn build(dict: &'a BilingualDictionary, segmenter: Cow<'a, Segmenter>, cfg: &PromptConfig) -> Self {
        Self {
            dict,
            segmenter,
            strategies: cfg.strategies,
            senses_per_word: cfg.senses_per_word.max(1),
        }
    }

    pub fn segmenter(&self) -> &Segmenter {
        &self.segmenter
    }

    fn usable(&self, headword: &str) -> Option<&'a DictEntry> {
        self.dict
            .get(headword)
            .filter(|e| allowed_senses(e, &self.strategies).next().is_some())
    }

    fn exact(&self, word: &str) -> Option<&'a DictEntry> {
        self.usable(word).or_else(|| {
            let folded = fold_case(word);
            (folded != word).then(|| self.usable(&folded)).flatten()
        })
    }

    pub fn gloss_word(&self, word: &str) -> Vec<Gloss> {
        if let Some(entry) = self.exact(word) {
            return allowed_senses(entry, &self.strategies)
                .take(self.senses_per_word)
                .map(|s| Gloss {
                    text: s.text.clone(),
                    origin: match s.provenance {
                        Provenance::Base => GlossOrigin::Exact,
                        Provenance::Induced => GlossOrigin::Induced,
                        Provenance::Synonym => GlossOrigin::Synonym,
                    },
                    via: None,
                })
                .collect();
        }
        if !self.strategies.fuzzy {
            return Vec::new();
        }
        let has = |w: &str| self.usable(w).is_some();
        let hit = fuzzy_lookup_by(&fold_case(word), &has, self.dict.max_headword_chars());
        hit.matches
            .iter()
            .filter_map(|m| {
                let entry = self.usable(&m.headword)?;
                let sense = allowed_senses(entry, &self.strategies).next()?;
                Some(Gloss {
                    text: sense.text.clone(),
                    origin: GlossOrigin::Fuzzy,
                    via: Some(m.headword.clone()),
                })
            })
            .collect()
    }

    pub fn gloss(&self, sentence: &str) -> Vec<WordGloss> {
        self.segmenter
            .tokenize(sentence)
            .into_iter()
            .map(|t| {
                let glosses = if t.kind == TokenKind::Word {
                    self.gloss_word(&t.text)
                } else {
                    Vec::new()
                };
                WordGloss {
                    covered: !glosses.is_empty(),
                    surface: t.text,
                    kind: t.kind,
                    glosses,
                }
            })
            .collect()
    }
}

/// Glosses every token of `sentence` against `d` (whose source language is the sentence's).
pub fn gloss_sentence(sentence: &str, d: &BilingualDictionary, cfg: &PromptConfig) -> Vec<WordGloss> {
    Glosser::new(d, cfg).gloss(sentence)
}

/// Fraction of word tokens with at least one gloss; 0 for no word tokens.
pub fn coverage(glosses: &[WordGloss]) -> f64 {
    let words = glosses.iter().filter(|g| g.kind == TokenKind::Word).count();
    if words == 0 {
        return 0.0;
    }
    let covered = glosses
        .iter()
        .filter(|g| g.kind == TokenKind::Word && g.covered)
        .count();
    covered as f64 / words as f64
}

/// Leading sentences whose cumulative whitespace-token count stays within `budget`.
pub fn inject_monolingual<S: AsRef<str>>(sentences: &[S], budget: usize) -> String {
    let mut used = 0;
    let mut taken: Vec<&str> = Vec::new();
    for s in sentences {
        let s = s.as_ref();
        let n = s.split_whitespace().count();
        if used + n > budget {
            break;
        }
        used += n;
        taken.push(s);
    }
    taken.join("\n")
}

/// A retrieved exemplar with the glosses of its source sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarGlosses {
    pub id: u64,
    pub glosses: Vec<WordGloss>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub text: String,
    pub exemplars: ExemplarSet,
    pub glosses: Vec<WordGloss>,
    pub coverage: f64,
    pub monolingual_excerpt: Option<String>,
}

/// Everything in a [`PromptSpec`] except the rendered text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTrace {
    pub exemplars: ExemplarSet,
    pub glosses: Vec<WordGloss>,
    pub coverage: f64,
    pub monolingual_excerpt: Option<String>,
}

impl PromptSpec {
    pub fn trace(&self) -> PromptTrace {
        PromptTrace {
            exemplars: self.exemplars.clone(),
            glosses: self.glosses.clone(),
            coverage: self.coverage,
            monolingual_excerpt: self.monolingual_excerpt.clone(),
        }
    }
}

/// Payload of the trace comment line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMarker {
    pub sentence: String,
    /// Separator between output words: "" for unsegmented target scripts, " " otherwise.
    pub joiner: String,
    /// `(surface, first gloss)` per token.
    pub tokens: Vec<(String, Option<String>)>,
}

impl TraceMarker {
    pub fn render(&self) -> String {
        format!(
            "{TRACE_PREFIX}{}{TRACE_SUFFIX}",
            serde_json::to_string(self).expect("marker serializes")
        )
    }

    /// Finds and parses the marker line in a prompt.
    pub fn parse(prompt: &str) -> Option<Self> {
        let line = prompt.lines().find(|l| l.starts_with(TRACE_PREFIX))?;
        let body = line.strip_prefix(TRACE_PREFIX)?.strip_suffix(TRACE_SUFFIX)?;
        serde_json::from_str(body).ok()
    }
}

/// Removes trace comment lines so the model never sees them.
pub fn strip_trace(prompt: &str) -> String {
    if !prompt.contains(TRACE_PREFIX) {
        return prompt.to_string();
    }
    let mut out: Vec<&str> = Vec::new();
    for l in prompt.split_inclusive('\n') {
        if !l.starts_with(TRACE_PREFIX) {
            out.push(l);
        }
    }
    out.concat()
}

struct Renderer<'a> {
    cfg: &'a PromptConfig,
    t: &'a PromptTemplate,
    src: String,
    tgt: String,
}

impl<'a> Renderer<'a> {
    fn new(cfg: &'a PromptConfig) -> Self {
        let t = &cfg.template;
        let (src, tgt) = if cfg.mode == PromptMode::Dipmt {
            (lang_name(&cfg.direction.src, false), lang_name(&cfg.direction.tgt, false))
        } else {
            (t.lang(&cfg.direction.src), t.lang(&cfg.direction.tgt))
        };
        Self { cfg, t, src, tgt }
    }

    fn fill(&self, template: &str, extra: &[(&str, &str)]) -> String {
        let mut vars: Vec<(&str, &str)> = vec![("src", &self.src), ("tgt", &self.tgt)];
        vars.extend_from_slice(extra);
        fill(template, &vars)
    }

    /// Covered words, first occurrence only.
    fn covered<'g>(glosses: &'g [WordGloss]) -> Vec<&'g WordGloss> {
        let mut seen = std::collections::HashSet::new();
        glosses
            .iter()
            .filter(|g| g.covered && seen.insert(g.surface.as_str()))
            .collect()
    }

    fn meanings(&self, g: &WordGloss, item: &str, sep: &str) -> String {
        g.glosses
            .iter()
            .map(|m| fill(item, &[("text", &m.text)]))
            .collect::<Vec<_>>()
            .join(sep)
    }

    fn gloss_block(&self, glosses: &[WordGloss]) -> String {
        let covered = Self::covered(glosses);
        if self.cfg.mode == PromptMode::Dipmt {
            return covered
                .iter()
                .map(|g| {
                    let meanings = self.meanings(g, &self.t.dipmt_meaning, &self.t.dipmt_meaning_sep);
                    fill(&self.t.dipmt_gloss, &[("word", &g.surface), ("meanings", &meanings)])
                })
                .collect();
        }
        if covered.is_empty() {
            return String::new();
        }
        let items: Vec<String> = covered
            .iter()
            .map(|g| {
                let meanings = self.meanings(g, &self.t.meaning, &self.t.meaning_sep);
                self.fill(&self.t.gloss_item, &[("word", &g.surface), ("meanings", &meanings)])
            })
            .collect();
        fill(&self.t.gloss_line, &[("items", &items.join(&self.t.gloss_item_sep))])
    }

    fn exemplar(&self, sentence: &str, answer: &str, glosses: &[WordGloss]) -> String {
        let template = match self.cfg.mode {
            PromptMode::Dipmt => &self.t.dipmt_exemplar,
            _ => &self.t.exemplar,
        };
        let g = self.gloss_block(glosses);
        self.fill(template, &[("sentence", sentence), ("glosses", &g), ("answer", answer)])
    }

    fn query(&self, sentence: &str, glosses: &[WordGloss]) -> String {
        let g = self.gloss_block(glosses);
        match self.cfg.mode {
            PromptMode::Dipmt => self.fill(&self.t.dipmt_query, &[("sentence", sentence), ("glosses", &g)]),
            PromptMode::DipmtPlusPlus => self.fill(&self.t.query, &[("sentence", sentence), ("glosses", &g)]),
            PromptMode::CotSyntax => {
                let rule = match self.cfg.syntax_rule.as_deref() {
                    Some(r) if !r.is_empty() => fill(&self.t.cot_rule, &[("text", r)]),
                    _ => String::new(),
                };
                let hints: String = self
                    .cfg
                    .modifier_hints
                    .iter()
                    .map(|h| fill(&self.t.cot_hint, &[("modifier", &h.modifier), ("head", &h.head)]))
                    .collect();
                self.fill(
                    &self.t.cot_query,
                    &[("sentence", sentence), ("glosses", &g), ("rule", &rule), ("hints", &hints)],
                )
            }
        }
    }
}

/// Renders the prompt for `sentence`. `exemplar_glosses[i]` holds the glosses of
/// `exemplars.exemplars[i]`'s source sentence; exemplars are rendered in the given order and
/// the query block comes last.
pub fn build_prompt(
    sentence: &str,
    query_glosses: &[WordGloss],
    exemplars: &ExemplarSet,
    exemplar_glosses: &[Vec<WordGloss>],
    cfg: &PromptConfig,
    monolingual: Option<&[String]>,
) -> Result<PromptSpec> {
    cfg.validate()?;
    if exemplar_glosses.len() != exemplars.len() {
        return Err(Error::Data(format!(
            "{} exemplars but {} gloss lists",
            exemplars.len(),
            exemplar_glosses.len()
        )));
    }
    let r = Renderer::new(cfg);
    let t = &cfg.template;

    let instruction = match cfg.mode {
        PromptMode::Dipmt => r.fill(&t.dipmt_instruction, &[]),
        _ => r.fill(&t.instruction, &[]),
    };

    let excerpt = match monolingual {
        Some(lines) if cfg.monolingual_budget > 0 => {
            Some(inject_monolingual(lines, cfg.monolingual_budget)).filter(|s| !s.is_empty())
        }
        _ => None,
    };
    let mono_block = excerpt.as_deref().map_or(String::new(), |text| {
        let code = cfg.monolingual_lang.as_deref().unwrap_or(&cfg.direction.tgt);
        let lang = if cfg.mode == PromptMode::Dipmt {
            lang_name(code, false)
        } else {
            t.lang(code)
        };
        fill(&t.monolingual, &[("lang", &lang), ("text", text)])
    });

    let exemplar_text: String = exemplars
        .exemplars
        .iter()
        .zip(exemplar_glosses)
        .map(|(e, g)| r.exemplar(&e.pair.src, &e.pair.tgt, g))
        .collect();

    let query = r.query(sentence, query_glosses);
    let mut text = fill(
        &t.layout,
        &[
            ("instruction", &instruction),
            ("monolingual", &mono_block),
            ("exemplars", &exemplar_text),
            ("query", &query),
        ],
    );

    if cfg.embed_trace {
        let marker = TraceMarker {
            sentence: sentence.to_string(),
            joiner: if is_unsegmented_lang(&cfg.direction.tgt) { "" } else { " " }.to_string(),
            tokens: query_glosses
                .iter()
                .map(|g| (g.surface.clone(), g.glosses.first().map(|x| x.text.clone())))
                .collect(),
        };
        text = format!("{}\n{text}", marker.render());
    }

    Ok(PromptSpec {
        text,
        exemplars: exemplars.clone(),
        glosses: query_glosses.to_vec(),
        coverage: coverage(query_glosses),
        monolingual_excerpt: excerpt,
    })
}

/// Pulls the translation out of a model response: the text after the CoT answer cue when
/// present, otherwise the first non-empty line.
pub fn extract_translation(output: &str, cfg: &PromptConfig) -> String {
    let r = Renderer::new(cfg);
    let mut text = output;
    if cfg.mode == PromptMode::CotSyntax {
        let cue = r.fill(&cfg.template.cot_answer, &[]);
        if let Some(i) = output.rfind(&cue) {
            text = &output[i + cue.len()..];
        }
    }
    text.lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("")
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieve::{Exemplar, Strategy};
    use crate::store::SentencePair;

    fn zh_za() -> LangPair {
        LangPair::new("zh", "za")
    }

    fn cfg() -> PromptConfig {
        let mut c = PromptConfig::new(zh_za());
        c.embed_trace = false;
        c
    }

    fn dict() -> BilingualDictionary {
        let mut d = BilingualDictionary::from_pairs(
            zh_za(),
            [
                ("好", vec!["ndei", "baenz", "hauq"]),
                ("日常", vec!["ciengzseiz"]),
                ("生活", vec!["swnghhoz"]),
                ("村", vec!["mbanj"]),
            ],
        );
        d.add_sense("手机", Sense::induced("soujgih", 0.8));
        d.add_sense(
            "迅速",
            Sense {
                text: "vaiq".into(),
                provenance: Provenance::Synonym,
                score: None,
                pos: None,
            },
        );
        d
    }

    #[test]
    fn fill_is_single_pass() {
        assert_eq!(fill("a{{x}}b{{y}}", &[("x", "{{y}}"), ("y", "Y")]), "a{{y}}bY");
        assert_eq!(fill("{{unknown}} {{", &[]), "{{unknown}} {{");
    }

    #[test]
    fn takes_first_senses_per_word() {
        let g = gloss_sentence("好", &dict(), &cfg());
        let texts: Vec<_> = g[0].glosses.iter().map(|x| x.text.as_str()).collect();
        assert_eq!(texts, ["ndei", "baenz"]);
        assert!(g[0].glosses.iter().all(|x| x.origin == GlossOrigin::Exact));
    }

    #[test]
    fn ablation_flags_gate_senses() {
        let mut c = cfg();
        c.strategies = Strategies::NONE;
        let d = dict();
        for w in ["手机", "迅速"] {
            let g = gloss_sentence(w, &d, &c);
            assert!(g.iter().all(|x| !x.covered), "{w}");
        }
        c.strategies = Strategies::ALL;
        assert_eq!(gloss_sentence("手机", &d, &c)[0].glosses[0].origin, GlossOrigin::Induced);
        assert_eq!(gloss_sentence("迅速", &d, &c)[0].glosses[0].origin, GlossOrigin::Synonym);
    }

    #[test]
    fn fuzzy_glosses_compound() {
        let mut d = dict();
        // make 日常生活 unsegmentable by the tokenizer's dictionary pass
        d.add_sense("日常生活x", Sense::base("dummy"));
        let seg = Segmenter::new("zh", ["日常生活"]);
        let glosser = Glosser::with_segmenter(&d, &seg, &cfg());
        let g = glosser.gloss("日常生活");
        assert_eq!(g.len(), 1);
        let texts: Vec<_> = g[0].glosses.iter().map(|x| x.text.as_str()).collect();
        assert_eq!(texts, ["ciengzseiz", "swnghhoz"]);
        assert_eq!(g[0].glosses[0].via.as_deref(), Some("日常"));
    }

    #[test]
    fn coverage_counts_words_only() {
        let g = gloss_sentence("村好。", &dict(), &cfg());
        assert_eq!(coverage(&g), 1.0);
        let g = gloss_sentence("猫狗", &dict(), &cfg());
        assert_eq!(coverage(&g), 0.0);
        assert_eq!(coverage(&[]), 0.0);
    }

    #[test]
    fn monolingual_budget() {
        let lines: Vec<String> = vec!["a b c".into(), "d e".into(), "f".into()];
        assert_eq!(inject_monolingual(&lines, 0), "");
        assert_eq!(inject_monolingual(&lines, 4), "a b c");
        assert_eq!(inject_monolingual(&lines, 5), "a b c\nd e");
        assert_eq!(inject_monolingual(&lines, 100), "a b c\nd e\nf");
    }

    #[test]
    fn minimal_render_is_header_and_query() {
        let spec = build_prompt("猫", &[], &ExemplarSet::empty(Strategy::Bm25, 0), &[], &cfg(), None).unwrap();
        assert_eq!(
            spec.text,
            "# 请仿照样例，参考给出的词汇，将汉语句子翻译成壮语。\n\n## 请将下面的汉语句子翻译成壮语：猫\n## 所以，完整的壮语翻译是："
        );
    }

    #[test]
    fn gloss_line_joins_meanings_with_or() {
        let c = cfg();
        let g = gloss_sentence("好村", &dict(), &c);
        let spec = build_prompt("好村", &g, &ExemplarSet::empty(Strategy::Bm25, 0), &[], &c, None).unwrap();
        assert!(spec
            .text
            .contains("## 在上面的句子中，汉语词语“好”在壮语对应的词是“ndei”或“baenz”；汉语词语“村”在壮语对应的词是“mbanj”。\n"));
    }

    #[test]
    fn dipmt_line_format() {
        let mut c = cfg();
        c.mode = PromptMode::Dipmt;
        c.senses_per_word = 1;
        let g = gloss_sentence("村", &dict(), &c);
        let spec = build_prompt("村", &g, &ExemplarSet::empty(Strategy::Fixed, 0), &[], &c, None).unwrap();
        assert!(spec.text.contains("in this context, the word \"村\" means \"mbanj\".\n"));
        assert!(spec.text.ends_with("Zhuang:"));
    }

    #[test]
    fn cot_requires_rule_or_hints() {
        let mut c = cfg();
        c.mode = PromptMode::CotSyntax;
        let empty = ExemplarSet::empty(Strategy::Bm25, 0);
        assert!(build_prompt("村", &[], &empty, &[], &c, None).is_err());
        c.modifier_hints.push(ModifierHint {
            modifier: "我们".into(),
            head: "村".into(),
        });
        let spec = build_prompt("我们村", &[], &empty, &[], &c, None).unwrap();
        assert!(spec.text.ends_with("## 那么让我们来一步一步的翻译：\n在该句中，存在修饰语和被修饰语，修饰语是“我们”，被修饰语是“村”。\n"));
    }

    #[test]
    fn exemplar_gloss_count_must_match() {
        let ex = ExemplarSet {
            exemplars: vec![Exemplar {
                pair: SentencePair::new(1, "村", "mbanj"),
                score: 1.0,
            }],
            strategy: Strategy::Bm25,
            k: 1,
        };
        assert!(build_prompt("好", &[], &ex, &[], &cfg(), None).is_err());
    }

    #[test]
    fn trace_marker_round_trip_and_strip() {
        let mut c = cfg();
        c.embed_trace = true;
        let g = gloss_sentence("好猫", &dict(), &c);
        let spec = build_prompt("好猫", &g, &ExemplarSet::empty(Strategy::Bm25, 0), &[], &c, None).unwrap();
        let m = TraceMarker::parse(&spec.text).unwrap();
        assert_eq!(m.joiner, " ");
        assert_eq!(m.tokens, vec![("好".into(), Some("ndei".into())), ("猫".into(), None)]);
        let stripped = strip_trace(&spec.text);
        assert!(!stripped.contains(TRACE_PREFIX));
        assert!(stripped.starts_with("# 请仿照样例"));
    }

    #[test]
    fn extracts_cot_answer() {
        let mut c = cfg();
        c.mode = PromptMode::CotSyntax;
        let out = "在该句中……\n基于上述分析，该汉语句子的最终壮语翻译是：Mbanj dou miz diuz dah.\n";
        assert_eq!(extract_translation(out, &c), "Mbanj dou miz diuz dah.");
        assert_eq!(extract_translation("\n  Mbanj dou\nmore", &cfg()), "Mbanj dou");
    }

    #[test]
    fn bundled_templates_parse() {
        assert_eq!(PromptTemplate::chinese().names, "zh");
        assert_eq!(PromptTemplate::english().names, "en");
        assert!(PromptTemplate::from_toml("names = 1").is_err());
    }
}
