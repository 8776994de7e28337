//! End-to-end runs: resource preparation, per-instance prompting, manifests and ablations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::align::{induce_symmetric, merge_into_dictionary, tokenize_corpus, AlignOptions, InducedLexicon, MergeReport};
use crate::error::{Error, Result};
use crate::lang::{is_unsegmented_lang, LangPair};
use crate::llm::{complete_all, Backend, BackendConfig, CachedBackend};
use crate::metrics::{evaluate, EvalInstance, EvalReport, Tokenization};
use crate::prompt::{
    build_prompt, coverage, extract_translation, Glosser, ModifierHint, PromptConfig, PromptMode, PromptSpec,
    PromptTemplate, Strategies,
};
use crate::reference_scores::{self, PublishedCell};
use crate::retrieve::{fixed_topk, pos_sequence, random_topk, Bm25Index, Exclusion, ExemplarSet, PosIndex, Strategy};
use crate::segment::Segmenter;
use crate::store::{
    expand_with_synonyms, load_corpus, load_dictionary, load_monolingual, load_synonyms, reverse_dictionary,
    BilingualDictionary, ParallelCorpus, SentencePair, Side,
};

/// Input files. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub dictionary: PathBuf,
    /// Direction the dictionary file is written in; it is reversed when the run goes the
    /// other way.
    pub dictionary_direction: LangPair,
    pub corpus: PathBuf,
    /// Defaults to `dictionary_direction`.
    #[serde(default)]
    pub corpus_direction: Option<LangPair>,
    #[serde(default)]
    pub synonyms: Option<PathBuf>,
    /// Language the synonym list covers; it only applies when this is the source language.
    #[serde(default = "default_synonyms_lang")]
    pub synonyms_lang: String,
    #[serde(default)]
    pub monolingual: Option<PathBuf>,
    /// Test set in corpus format and `corpus_direction`.
    #[serde(default)]
    pub test: Option<PathBuf>,
}

fn default_synonyms_lang() -> String {
    "zh".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptSection {
    pub mode: PromptMode,
    pub k: usize,
    pub senses_per_word: usize,
    pub fuzzy: bool,
    pub bli: bool,
    pub synonym: bool,
    pub monolingual_budget: usize,
    pub monolingual_lang: Option<String>,
    /// `zh`, `en`, or a template file path.
    pub template: String,
    pub syntax_rule: Option<String>,
    pub modifier_hints: Vec<ModifierHint>,
}

impl Default for PromptSection {
    fn default() -> Self {
        Self {
            mode: PromptMode::DipmtPlusPlus,
            k: 3,
            senses_per_word: 2,
            fuzzy: true,
            bli: true,
            synonym: true,
            monolingual_budget: 0,
            monolingual_lang: None,
            template: "zh".into(),
            syntax_rule: None,
            modifier_hints: Vec::new(),
        }
    }
}

impl PromptSection {
    pub fn strategies(&self) -> Strategies {
        Strategies {
            fuzzy: self.fuzzy,
            bli: self.bli,
            synonym: self.synonym,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    pub strategy: Strategy,
    pub k1: f64,
    pub b: f64,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self {
            strategy: Strategy::Bm25,
            k1: crate::retrieve::DEFAULT_K1,
            b: crate::retrieve::DEFAULT_B,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignSection {
    pub iterations: usize,
    pub threshold: f64,
    pub null_word: bool,
}

impl Default for AlignSection {
    fn default() -> Self {
        Self {
            iterations: crate::align::DEFAULT_ITERATIONS,
            threshold: crate::align::DEFAULT_THRESHOLD,
            null_word: true,
        }
    }
}

impl AlignSection {
    pub fn options(&self) -> AlignOptions {
        AlignOptions {
            iterations: self.iterations,
            null_word: self.null_word,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Defaults to han-aware for unsegmented target languages and intl otherwise.
    pub tokenization: Option<Tokenization>,
    pub per_sentence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub direction: LangPair,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Shared artifact cache; defaults to `<output_dir>/cache`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    pub paths: Paths,
    #[serde(default)]
    pub prompt: PromptSection,
    #[serde(default)]
    pub retrieval: RetrievalSection,
    #[serde(default)]
    pub align: AlignSection,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.to_string().trim_start_matches("configuration error: "))))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn cache_path(&self) -> PathBuf {
        match &self.cache_dir {
            Some(d) => self.resolve(d),
            None => self.output_path().join("cache"),
        }
    }

    pub fn corpus_direction(&self) -> &LangPair {
        self.paths.corpus_direction.as_ref().unwrap_or(&self.paths.dictionary_direction)
    }

    pub fn tokenization(&self) -> Tokenization {
        self.eval.tokenization.unwrap_or(if is_unsegmented_lang(&self.direction.tgt) {
            Tokenization::HanAware
        } else {
            Tokenization::Intl
        })
    }

    pub fn validate(&self) -> Result<()> {
        let same_langs = |p: &LangPair| *p == self.direction || p.reversed() == self.direction;
        if !same_langs(&self.paths.dictionary_direction) {
            return Err(Error::Config(format!(
                "dictionary direction {} does not match run direction {}",
                self.paths.dictionary_direction, self.direction
            )));
        }
        if !same_langs(self.corpus_direction()) {
            return Err(Error::Config(format!(
                "corpus direction {} does not match run direction {}",
                self.corpus_direction(),
                self.direction
            )));
        }
        let mut files = vec![("dictionary", &self.paths.dictionary), ("corpus", &self.paths.corpus)];
        for (name, p) in [
            ("synonyms", &self.paths.synonyms),
            ("monolingual", &self.paths.monolingual),
            ("test", &self.paths.test),
        ] {
            if let Some(p) = p {
                files.push((name, p));
            }
        }
        for (name, p) in files {
            let full = self.resolve(p);
            if !full.is_file() {
                return Err(Error::Config(format!("{name} file {} does not exist", full.display())));
            }
        }
        if self.prompt.k == 0 && self.prompt.mode != PromptMode::Dipmt {
            log::warn!("k = 0: prompts carry no exemplars");
        }
        self.prompt_config()?.validate()?;
        self.backend.validate()?;
        Ok(())
    }

    pub fn prompt_config(&self) -> Result<PromptConfig> {
        let p = &self.prompt;
        Ok(PromptConfig {
            mode: p.mode,
            k: p.k,
            senses_per_word: p.senses_per_word,
            strategies: p.strategies(),
            monolingual_budget: p.monolingual_budget,
            direction: self.direction.clone(),
            monolingual_lang: p.monolingual_lang.clone(),
            syntax_rule: p.syntax_rule.clone(),
            modifier_hints: p.modifier_hints.clone(),
            template: PromptTemplate::resolve(&p.template, &self.base_dir)?,
            embed_trace: true,
        })
    }

    /// Wraps the configured backend with the response cache when one is configured.
    pub fn build_backend(&self) -> Result<Arc<dyn Backend>> {
        let inner = self.backend.build()?;
        match &self.backend.cache_dir {
            Some(dir) => {
                let dir = if dir.is_absolute() { dir.clone() } else { self.output_path().join(dir) };
                Ok(Arc::new(CachedBackend::new(inner, dir)?))
            }
            None => Ok(inner),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Orients a dictionary written in `file_dir` so its source language is `run.src`.
pub fn orient_dictionary(d: BilingualDictionary, run: &LangPair) -> Result<BilingualDictionary> {
    if d.direction() == run {
        Ok(d)
    } else if d.direction().reversed() == *run {
        Ok(reverse_dictionary(&d))
    } else {
        Err(Error::Config(format!("dictionary direction {} cannot serve {run}", d.direction())))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub base_headwords: usize,
    pub headwords: usize,
    pub senses: usize,
    pub bli: Option<MergeReport>,
    pub induced_pairs: Option<usize>,
    pub synonym_senses: Option<usize>,
    pub hashes: BTreeMap<String, String>,
}

/// Dictionary, corpus and indexes for one direction.
#[derive(Debug, Clone)]
pub struct Resources {
    pub direction: LangPair,
    pub base_dictionary: BilingualDictionary,
    pub dictionary: BilingualDictionary,
    /// Source segmentation for glossing, from the dictionary with every expansion applied.
    pub segmenter: Segmenter,
    pub corpus: ParallelCorpus,
    pub bm25: Bm25Index,
    pub pos: Option<PosIndex>,
    pub monolingual: Vec<String>,
    pub summary: PrepareSummary,
}

impl Resources {
    pub fn segmenter(&self) -> &Segmenter {
        &self.segmenter
    }
}

fn key(parts: &[&str]) -> String {
    sha256_hex(parts.join("\u{1f}").as_bytes())[..16].to_string()
}

/// Loads, orients and expands the dictionary, builds the indexes and writes the prepared
/// artifacts under `<output_dir>/prepared`. Expensive artifacts are cached under
/// `<output_dir>/cache` by content hash.
pub fn prepare(cfg: &RunConfig) -> Result<Resources> {
    cfg.validate()?;
    let out = cfg.output_path();
    let cache = cfg.cache_path();
    let dir = &cfg.direction;

    let mut hashes = BTreeMap::new();
    let dict_path = cfg.resolve(&cfg.paths.dictionary);
    let corpus_path = cfg.resolve(&cfg.paths.corpus);
    hashes.insert("dictionary".to_string(), hash_file(&dict_path)?);
    hashes.insert("corpus".to_string(), hash_file(&corpus_path)?);
    for (name, p) in [
        ("synonyms", &cfg.paths.synonyms),
        ("monolingual", &cfg.paths.monolingual),
        ("test", &cfg.paths.test),
    ] {
        if let Some(p) = p {
            hashes.insert(name.to_string(), hash_file(&cfg.resolve(p))?);
        }
    }

    let base = orient_dictionary(load_dictionary(&dict_path, cfg.paths.dictionary_direction.clone())?, dir)?;
    let corpus = load_corpus(&corpus_path, cfg.corpus_direction().clone())?.oriented(dir)?;
    let mut summary = PrepareSummary {
        base_headwords: base.len(),
        ..Default::default()
    };

    // The lexicon and synonym expansion are always computed so that gloss segmentation is
    // the same for every strategy setting; the flags only decide what reaches `dictionary`.
    let a = &cfg.align;
    let k = key(&[
        "lexicon",
        &hashes["dictionary"],
        &hashes["corpus"],
        &dir.to_string(),
        &a.iterations.to_string(),
        &a.threshold.to_string(),
        &a.null_word.to_string(),
    ]);
    let path = cache.join(format!("lexicon-{k}.tsv"));
    let lex = match fs::read_to_string(&path) {
        Ok(text) => InducedLexicon::parse_tsv(&text, a.threshold)?,
        Err(_) => {
            let src = Segmenter::for_language(&base, &dir.src);
            let tgt = Segmenter::for_language(&base, &dir.tgt);
            let pairs = tokenize_corpus(&corpus, &src, &tgt);
            let lex = induce_symmetric(&pairs, a.options(), a.threshold, Some(&base))?;
            write_file(&path, &lex.to_tsv())?;
            lex
        }
    };
    let synonyms = match &cfg.paths.synonyms {
        Some(p) if cfg.paths.synonyms_lang == dir.src => Some(load_synonyms(&cfg.resolve(p))?),
        Some(_) => {
            log::info!("no {} synonym list; synonym expansion skipped", dir.src);
            None
        }
        None => None,
    };

    let (with_lex, report) = merge_into_dictionary(&lex, &base);
    let full = match &synonyms {
        Some(syn) => expand_with_synonyms(&with_lex, syn).0,
        None => with_lex.clone(),
    };

    let mut dict = base.clone();
    if cfg.prompt.bli {
        log::info!(
            "bli: {} pairs, {} new headwords, {} new senses",
            lex.len(),
            report.new_headwords,
            report.new_senses
        );
        dict = with_lex;
        summary.bli = Some(report);
        summary.induced_pairs = Some(lex.len());
        write_file(&out.join("prepared/lexicon.tsv"), &lex.to_tsv())?;
    }
    if cfg.prompt.synonym {
        if let Some(syn) = &synonyms {
            let (expanded, added) = expand_with_synonyms(&dict, syn);
            log::info!("synonyms: {added} senses added");
            dict = expanded;
            summary.synonym_senses = Some(added);
        }
    }
    let segmenter = Segmenter::for_language(&full, &dir.src);

    let r = &cfg.retrieval;
    let k = key(&["bm25", &hashes["dictionary"], &hashes["corpus"], &dir.to_string(), &r.k1.to_string(), &r.b.to_string()]);
    let bm25_path = cache.join(format!("bm25-{k}.json"));
    let bm25 = match Bm25Index::load(&bm25_path) {
        Ok(idx) => idx,
        Err(_) => {
            let seg = Segmenter::for_language(&base, &dir.src);
            let idx = Bm25Index::build_with(&corpus, Side::Src, r.k1, r.b, seg)?;
            if let Some(parent) = bm25_path.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            idx.save(&bm25_path)?;
            idx
        }
    };

    let pos = (r.strategy == Strategy::Pos).then(|| PosIndex::build(&corpus, bm25.segmenter(), &base));
    if pos.as_ref().is_some_and(PosIndex::is_empty) {
        log::warn!("no corpus sentence has a known POS tag; POS retrieval returns nothing");
    }

    let monolingual = match &cfg.paths.monolingual {
        Some(p) => load_monolingual(&cfg.resolve(p))?,
        None => Vec::new(),
    };

    summary.headwords = dict.len();
    summary.senses = dict.sense_count();
    summary.hashes = hashes;
    write_file(&out.join("prepared/dictionary.jsonl"), &dict.to_jsonl())?;
    write_file(&out.join("prepared/summary.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;

    Ok(Resources {
        direction: dir.clone(),
        base_dictionary: base,
        dictionary: dict,
        segmenter,
        corpus,
        bm25,
        pos,
        monolingual,
        summary,
    })
}

/// Loads the configured test set, oriented to the run direction.
pub fn load_test_set(cfg: &RunConfig) -> Result<Vec<SentencePair>> {
    let p = cfg
        .paths
        .test
        .as_ref()
        .ok_or_else(|| Error::Config("no test set configured (paths.test)".into()))?;
    let test = load_corpus(&cfg.resolve(p), cfg.corpus_direction().clone())?.oriented(&cfg.direction)?;
    Ok(test.pairs().to_vec())
}

fn instance_seed(seed: u64, id: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ id
}

/// Exemplars for `query`, most relevant first. Corpus pairs whose source equals the query
/// are never returned.
pub fn retrieve_exemplars(res: &Resources, query: &SentencePair, cfg: &RunConfig) -> ExemplarSet {
    let k = cfg.prompt.k;
    let excl = Exclusion::identical(&query.src);
    match cfg.retrieval.strategy {
        Strategy::Bm25 => res.bm25.topk(&query.src, k, &excl),
        Strategy::Random => random_topk(&res.corpus, k, instance_seed(cfg.seed, query.id), &excl),
        Strategy::Fixed => fixed_topk(&res.corpus, k, &excl),
        Strategy::Pos => {
            let tags = pos_sequence(&query.src, res.bm25.segmenter(), &res.base_dictionary);
            match &res.pos {
                Some(idx) => idx.topk(&tags, k, &excl),
                None => PosIndex::build(&res.corpus, res.bm25.segmenter(), &res.base_dictionary).topk(&tags, k, &excl),
            }
        }
    }
}

/// Renders the prompt for one instance. Exemplars appear least relevant first so the
/// closest one sits right before the query.
pub fn instance_prompt(res: &Resources, query: &SentencePair, cfg: &RunConfig, pcfg: &PromptConfig) -> Result<PromptSpec> {
    let glosser = Glosser::with_segmenter(&res.dictionary, res.segmenter(), pcfg);
    let mut exemplars = retrieve_exemplars(res, query, cfg);
    exemplars.exemplars.reverse();
    let exemplar_glosses: Vec<_> = exemplars.exemplars.iter().map(|e| glosser.gloss(&e.pair.src)).collect();
    let glosses = glosser.gloss(&query.src);
    let mono = (!res.monolingual.is_empty()).then_some(res.monolingual.as_slice());
    build_prompt(&query.src, &glosses, &exemplars, &exemplar_glosses, pcfg, mono)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    pub source: String,
    pub reference: String,
    pub prompt_sha256: String,
    pub exemplar_ids: Vec<u64>,
    pub coverage: f64,
    pub latency_ms: u64,
    pub output: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub backend: String,
    pub resource_hashes: BTreeMap<String, String>,
    pub mean_coverage: f64,
    pub records: Vec<InstanceRecord>,
    pub failed: usize,
    pub status: Status,
    pub report: EvalReport,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    /// Errors when more than half of the instances failed.
    pub fn ensure_ok(&self) -> Result<()> {
        match self.status {
            Status::Ok => Ok(()),
            Status::Failed => Err(Error::RunFailed {
                failed: self.failed,
                total: self.records.len(),
            }),
        }
    }
}

/// Translates `test` (already oriented) and writes `manifest.json`, `hypotheses.txt` and
/// the rendered prompts under the output directory.
pub fn translate_set(res: &Resources, test: &[SentencePair], cfg: &RunConfig, backend: &dyn Backend) -> Result<RunManifest> {
    if test.is_empty() {
        return Err(Error::Data("test set is empty".into()));
    }
    let pcfg = cfg.prompt_config()?;
    let mut order: Vec<&SentencePair> = test.iter().collect();
    order.sort_by_key(|p| p.id);

    let specs: Vec<PromptSpec> = order
        .iter()
        .map(|q| instance_prompt(res, q, cfg, &pcfg))
        .collect::<Result<_>>()?;
    let requests: Vec<_> = specs.iter().map(|s| cfg.backend.request(s.text.clone())).collect();
    let responses = complete_all(backend, &requests, cfg.backend.parallelism);

    let out = cfg.output_path();
    let mut records = Vec::with_capacity(order.len());
    let mut prompts = String::new();
    for ((q, spec), resp) in order.iter().zip(&specs).zip(responses) {
        let _ = writeln!(prompts, "===== {} =====\n{}\n", q.id, spec.text);
        let (output, latency_ms, status, error) = match resp {
            Ok(r) => (extract_translation(&r.text, &pcfg), r.latency_ms, Status::Ok, None),
            Err(e) => {
                log::warn!("instance {} failed: {e}", q.id);
                (String::new(), 0, Status::Failed, Some(e.to_string()))
            }
        };
        records.push(InstanceRecord {
            id: q.id,
            tag: q.tag.clone(),
            source: q.src.clone(),
            reference: q.tgt.clone(),
            prompt_sha256: sha256_hex(spec.text.as_bytes()),
            exemplar_ids: spec.exemplars.ids(),
            coverage: spec.coverage,
            latency_ms,
            output,
            status,
            error,
        });
    }

    let failed = records.iter().filter(|r| r.status == Status::Failed).count();
    let instances: Vec<EvalInstance> = records
        .iter()
        .map(|r| EvalInstance::new(r.output.clone(), r.reference.clone(), r.tag.as_deref()))
        .collect();
    let report = evaluate(&instances, cfg.tokenization(), cfg.eval.per_sentence)?;
    let manifest = RunManifest {
        config: cfg.clone(),
        backend: backend.name(),
        resource_hashes: res.summary.hashes.clone(),
        mean_coverage: records.iter().map(|r| r.coverage).sum::<f64>() / records.len() as f64,
        status: if failed * 2 > records.len() { Status::Failed } else { Status::Ok },
        failed,
        records,
        report,
    };

    write_file(&out.join("manifest.json"), &manifest.to_json())?;
    let hyps: String = manifest.records.iter().map(|r| r.output.clone() + "\n").collect();
    write_file(&out.join("hypotheses.txt"), &hyps)?;
    write_file(&out.join("prompts.txt"), &prompts)?;
    Ok(manifest)
}

/// Prepares, loads the test set and translates it with the configured backend.
pub fn run(cfg: &RunConfig) -> Result<RunManifest> {
    let backend = cfg.build_backend()?;
    run_with(cfg, backend.as_ref())
}

pub fn run_with(cfg: &RunConfig, backend: &dyn Backend) -> Result<RunManifest> {
    let res = prepare(cfg)?;
    let test = load_test_set(cfg)?;
    translate_set(&res, &test, cfg, backend)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Fuzzy,
    Bli,
    Synonym,
    Strategy,
    Monolingual,
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fuzzy" => Ok(Self::Fuzzy),
            "bli" => Ok(Self::Bli),
            "synonym" => Ok(Self::Synonym),
            "strategy" => Ok(Self::Strategy),
            "monolingual" => Ok(Self::Monolingual),
            _ => Err(Error::Config(format!("unknown ablation axis `{s}`"))),
        }
    }
}

impl Axis {
    pub fn published_table(&self) -> &'static str {
        match self {
            Axis::Fuzzy | Axis::Bli | Axis::Synonym => "lexical-ablation",
            Axis::Strategy => "exemplar-strategy",
            Axis::Monolingual => "monolingual",
        }
    }

    /// Variant names with the config change each one applies.
    pub fn variants(&self, base: &RunConfig) -> Vec<(String, RunConfig)> {
        let with = |f: &dyn Fn(&mut RunConfig)| {
            let mut c = base.clone();
            f(&mut c);
            c
        };
        let full = with(&|c| {
            c.prompt.fuzzy = true;
            c.prompt.bli = true;
            c.prompt.synonym = true;
        });
        let v = |name: &str, c: RunConfig| (name.to_string(), c);
        match self {
            Axis::Fuzzy => vec![v("DiPMT++", full.clone()), v("w/o Fuzzy", with(&|c| c.prompt.fuzzy = false))],
            Axis::Bli => vec![v("DiPMT++", full.clone()), v("w/o BLI", with(&|c| c.prompt.bli = false))],
            Axis::Synonym => vec![v("DiPMT++", full.clone()), v("w/o Synonym", with(&|c| c.prompt.synonym = false))],
            Axis::Strategy => [("Random", Strategy::Random), ("POS", Strategy::Pos), ("BM25", Strategy::Bm25)]
                .into_iter()
                .map(|(n, s)| v(n, with(&|c| c.retrieval.strategy = s)))
                .collect(),
            Axis::Monolingual => [("DiPMT++", 0), ("+1K", 1000), ("+2K", 2000), ("+5K", 5000)]
                .into_iter()
                .map(|(n, b)| v(n, with(&|c| c.prompt.monolingual_budget = b)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub bleu: f64,
    pub chrf: f64,
    pub coverage: f64,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    /// Keyed by direction label such as `zh2za`.
    pub cells: BTreeMap<String, AblationCell>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationTable {
    pub axis: Axis,
    pub directions: Vec<String>,
    pub rows: Vec<AblationRow>,
    /// Published cells for the same rows, when a reference model was requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceColumns>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReferenceColumns {
    pub model: String,
    pub cells: Vec<BTreeMap<String, PublishedCell>>,
}

pub fn direction_label(d: &LangPair) -> String {
    format!("{}2{}", d.src, d.tgt)
}

fn fmt_published(c: Option<&PublishedCell>) -> (String, String) {
    match c {
        Some(c) => (format!("{:.1}", c.bleu), c.chrf.map_or("-".into(), |x| format!("{x:.1}"))),
        None => ("-".into(), "-".into()),
    }
}

impl AblationTable {
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| Variant |");
        let mut sep = String::from("|---|");
        for d in &self.directions {
            let _ = write!(s, " {d} BLEU | {d} chrF | {d} cov |");
            sep.push_str("---:|---:|---:|");
            if self.reference.is_some() {
                let _ = write!(s, " {d} ref BLEU | {d} ref chrF |");
                sep.push_str("---:|---:|");
            }
        }
        s.push('\n');
        s.push_str(&sep);
        s.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            let _ = write!(s, "| {} |", row.variant);
            for d in &self.directions {
                match row.cells.get(d) {
                    Some(c) => {
                        let _ = write!(s, " {:.1} | {:.1} | {:.3} |", c.bleu, c.chrf, c.coverage);
                    }
                    None => s.push_str(" - | - | - |"),
                }
                if let Some(r) = &self.reference {
                    let (b, c) = fmt_published(r.cells.get(i).and_then(|m| m.get(d)));
                    let _ = write!(s, " {b} | {c} |");
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Runs every variant of `axis` in both directions. Each variant writes its run under
/// `<output_dir>/ablate-<axis>/<variant>/<direction>`.
pub fn ablate(cfg: &RunConfig, axis: Axis, reference_model: Option<&str>) -> Result<AblationTable> {
    let backend = cfg.build_backend()?;
    ablate_with(cfg, axis, reference_model, backend.as_ref())
}

pub fn ablate_with(
    cfg: &RunConfig,
    axis: Axis,
    reference_model: Option<&str>,
    backend: &dyn Backend,
) -> Result<AblationTable> {
    let directions = [cfg.direction.clone(), cfg.direction.reversed()];
    let axis_name = serde_json::to_value(axis)?.as_str().unwrap_or_default().to_string();
    let mut rows: Vec<AblationRow> = Vec::new();
    for (name, variant) in axis.variants(cfg) {
        let mut cells = BTreeMap::new();
        for d in &directions {
            let mut c = variant.clone();
            c.direction = d.clone();
            let slug: String = name
                .chars()
                .map(|ch| if ch.is_ascii_alphanumeric() || ch == '+' { ch.to_ascii_lowercase() } else { '-' })
                .collect();
            if c.cache_dir.is_none() {
                c.cache_dir = Some(cfg.output_dir.join("cache"));
            }
            c.output_dir = cfg.output_dir.join(format!("ablate-{axis_name}")).join(slug).join(direction_label(d));
            let m = run_with(&c, backend)?;
            cells.insert(
                direction_label(d),
                AblationCell {
                    bleu: m.report.bleu,
                    chrf: m.report.chrf,
                    coverage: m.mean_coverage,
                    failed: m.failed,
                },
            );
        }
        rows.push(AblationRow { variant: name, cells });
    }
    let labels: Vec<String> = directions.iter().map(direction_label).collect();
    let reference = reference_model.map(|model| ReferenceColumns {
        model: model.to_string(),
        cells: rows
            .iter()
            .map(|r| {
                let mut m = BTreeMap::new();
                if let Some(p) = reference_scores::lookup(axis.published_table(), model, &r.variant) {
                    for l in &labels {
                        if let Some(c) = reference_scores::cell_for(p, l) {
                            m.insert(l.clone(), c);
                        }
                    }
                }
                m
            })
            .collect(),
    });
    let table = AblationTable {
        axis,
        directions: labels,
        rows,
        reference,
    };
    let dir = cfg.output_path().join(format!("ablate-{axis_name}"));
    write_file(&dir.join("table.md"), &table.to_markdown())?;
    write_file(&dir.join("table.json"), &(serde_json::to_string_pretty(&table)? + "\n"))?;
    Ok(table)
}

/// Mean gloss coverage of `sentences` under `cfg`'s prompt settings.
pub fn mean_coverage(res: &Resources, sentences: &[String], pcfg: &PromptConfig) -> f64 {
    if sentences.is_empty() {
        return 0.0;
    }
    let glosser = Glosser::with_segmenter(&res.dictionary, res.segmenter(), pcfg);
    sentences.iter().map(|s| coverage(&glosser.gloss(s))).sum::<f64>() / sentences.len() as f64
}
