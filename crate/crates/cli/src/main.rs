//! `glossmt`: prepare resources, translate, evaluate, run ablations and serve the workbench API.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use glossmt_core::align::{induce_symmetric, tokenize_corpus, train_model1};
use glossmt_core::llm::{BackendKind, LlmError};
use glossmt_core::metrics::{evaluate, EvalInstance, EvalReport, Tokenization};
use glossmt_core::pipeline::{
    ablate, instance_prompt, load_test_set, orient_dictionary, prepare, run, Axis, RunConfig,
};
use glossmt_core::prompt::strip_trace;
use glossmt_core::retrieve::Bm25Index;
use glossmt_core::segment::Segmenter;
use glossmt_core::store::{load_corpus, load_dictionary, SentencePair, Side};
use glossmt_core::Error;
use glossmt_service::clock::SystemClock;
use glossmt_service::{router, serve, AppState};

#[derive(Parser)]
#[command(name = "glossmt", version, about = "Dictionary-driven prompting for translating a low-resource language")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Mock,
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Src,
    Tgt,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Self {
        match s {
            SideArg::Src => Side::Src,
            SideArg::Tgt => Side::Tgt,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Expand the dictionary and build indexes; writes <output_dir>/prepared/.
    Prepare {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Translate the configured test set and score it.
    Translate {
        #[arg(short, long)]
        config: PathBuf,
        /// Override the configured backend kind.
        #[arg(long)]
        backend: Option<BackendArg>,
        /// Override the configured model id.
        #[arg(long)]
        model: Option<String>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score hypotheses against references (one sentence per line).
    Evaluate {
        #[arg(long)]
        hyps: PathBuf,
        #[arg(long)]
        refs: PathBuf,
        /// Difficulty tag per line (easy, medium, hard).
        #[arg(long)]
        tags: Option<PathBuf>,
        /// intl or han-aware.
        #[arg(long, default_value = "intl")]
        tokenize: Tokenization,
        #[arg(long)]
        per_sentence: bool,
        #[arg(long)]
        json_out: Option<PathBuf>,
    },
    /// Run one ablation axis in both directions and print the table.
    Ablate {
        #[arg(short, long)]
        config: PathBuf,
        /// fuzzy, bli, synonym, strategy or monolingual.
        #[arg(long)]
        axis: Axis,
        /// Model whose published cells are printed alongside.
        #[arg(long)]
        reference: Option<String>,
    },
    /// Induce a lexicon from the parallel corpus and print it as TSV.
    Induce {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a BM25 index over one side of the corpus.
    Index {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "src")]
        side: SideArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Free-text BM25 search over the corpus; prints JSON lines.
    Search {
        #[arg(short, long)]
        config: PathBuf,
        query: String,
        #[arg(long, value_enum, default_value = "src")]
        side: SideArg,
        #[arg(short, long, default_value_t = 5)]
        k: usize,
    },
    /// Print the rendered prompt for one test instance or an ad-hoc sentence.
    Prompt {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long, conflicts_with = "sentence", required_unless_present = "sentence")]
        id: Option<u64>,
        #[arg(long)]
        sentence: Option<String>,
        /// Keep the trace comment line.
        #[arg(long)]
        trace: bool,
    },
    /// Serve the workbench HTTP API.
    Serve {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Where session logs go; defaults to <output_dir>/study.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        allow_origin: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<Error>() {
            return err.exit_code() as u8;
        }
        if let Some(err) = cause.downcast_ref::<LlmError>() {
            return if matches!(err, LlmError::Config(_)) { 2 } else { 4 };
        }
    }
    1
}

fn load(path: &Path) -> anyhow::Result<RunConfig> {
    Ok(RunConfig::load(path)?)
}

fn write_out(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            fs::write(p, text).map_err(|e| Error::io(p, e))?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn read_lines(path: &Path) -> anyhow::Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(String::from).collect())
}

fn print_report(r: &EvalReport) {
    println!("BLEU {:.2}  chrF {:.2}  n={}", r.bleu, r.chrf, r.n);
    for (tag, s) in &r.by_tag {
        println!("  {tag:<9} BLEU {:.2}  chrF {:.2}  n={}", s.bleu, s.chrf, s.n);
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Prepare { config } => {
            let cfg = load(&config)?;
            let res = prepare(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&res.summary)?);
            eprintln!("wrote {}", cfg.output_path().join("prepared").display());
        }
        Command::Translate {
            config,
            backend,
            model,
            out,
        } => {
            let mut cfg = load(&config)?;
            if let Some(b) = backend {
                cfg.backend.kind = match b {
                    BackendArg::Mock => BackendKind::Mock,
                    BackendArg::Http => BackendKind::Http,
                };
            }
            if let Some(m) = model {
                cfg.backend.model = m;
            }
            if let Some(o) = out {
                cfg.output_dir = std::env::current_dir().map_err(|e| Error::io(".", e))?.join(o);
            }
            let manifest = run(&cfg)?;
            print_report(&manifest.report);
            println!("coverage {:.3}  failed {}/{}", manifest.mean_coverage, manifest.failed, manifest.records.len());
            eprintln!("wrote {}", cfg.output_path().join("manifest.json").display());
            manifest.ensure_ok()?;
        }
        Command::Evaluate {
            hyps,
            refs,
            tags,
            tokenize,
            per_sentence,
            json_out,
        } => {
            let h = read_lines(&hyps)?;
            let r = read_lines(&refs)?;
            if h.len() != r.len() {
                return Err(Error::Data(format!("{} hypotheses but {} references", h.len(), r.len())).into());
            }
            let t = match &tags {
                Some(p) => {
                    let t = read_lines(p)?;
                    if t.len() != h.len() {
                        return Err(Error::Data(format!("{} tags for {} sentences", t.len(), h.len())).into());
                    }
                    t.into_iter().map(Some).collect()
                }
                None => vec![None; h.len()],
            };
            let instances: Vec<EvalInstance> = h
                .into_iter()
                .zip(r)
                .zip(t)
                .map(|((h, r), t)| EvalInstance::new(h, r, t.as_deref().map(str::trim)))
                .collect();
            let report = evaluate(&instances, tokenize, per_sentence)?;
            print_report(&report);
            if let Some(p) = json_out {
                write_out(Some(&p), &(serde_json::to_string_pretty(&report)? + "\n"))?;
            }
        }
        Command::Ablate { config, axis, reference } => {
            let cfg = load(&config)?;
            let table = ablate(&cfg, axis, reference.as_deref())?;
            print!("{}", table.to_markdown());
        }
        Command::Induce { config, out } => {
            let cfg = load(&config)?;
            cfg.validate()?;
            let dir = &cfg.direction;
            let base = orient_dictionary(
                load_dictionary(&cfg.resolve(&cfg.paths.dictionary), cfg.paths.dictionary_direction.clone())?,
                dir,
            )?;
            let corpus = load_corpus(&cfg.resolve(&cfg.paths.corpus), cfg.corpus_direction().clone())?.oriented(dir)?;
            let pairs = tokenize_corpus(
                &corpus,
                &Segmenter::for_language(&base, &dir.src),
                &Segmenter::for_language(&base, &dir.tgt),
            );
            let a = &cfg.align;
            let table = train_model1(&pairs, a.options())?;
            let ll: Vec<String> = table.log_likelihood().iter().map(|x| format!("{x:.2}")).collect();
            eprintln!("log-likelihood: {}", ll.join(" "));
            let lex = induce_symmetric(&pairs, a.options(), a.threshold, Some(&base))?;
            eprintln!("{} pairs at threshold {}", lex.len(), a.threshold);
            write_out(out.as_deref(), &lex.to_tsv())?;
        }
        Command::Index { config, side, out } => {
            let cfg = load(&config)?;
            let res = prepare(&cfg)?;
            let index = Bm25Index::build(&res.corpus, side.into(), cfg.retrieval.k1, cfg.retrieval.b, &res.base_dictionary)?;
            if let Some(parent) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            index.save(&out)?;
            eprintln!("indexed {} documents (avg length {:.2}) into {}", index.len(), index.avg_doc_len(), out.display());
        }
        Command::Search { config, query, side, k } => {
            let cfg = load(&config)?;
            let res = prepare(&cfg)?;
            let index = match side {
                SideArg::Src => res.bm25.clone(),
                SideArg::Tgt => Bm25Index::build(&res.corpus, Side::Tgt, cfg.retrieval.k1, cfg.retrieval.b, &res.base_dictionary)?,
            };
            for e in index.search(&query, k).exemplars {
                println!(
                    "{}",
                    serde_json::json!({"id": e.pair.id, "score": e.score, "src": e.pair.src, "tgt": e.pair.tgt})
                );
            }
        }
        Command::Prompt {
            config,
            id,
            sentence,
            trace,
        } => {
            let cfg = load(&config)?;
            let pcfg = cfg.prompt_config()?;
            let res = prepare(&cfg)?;
            let query = match (id, sentence) {
                (Some(id), _) => load_test_set(&cfg)?
                    .into_iter()
                    .find(|p| p.id == id)
                    .ok_or_else(|| Error::Data(format!("no test instance with id {id}")))?,
                (None, Some(s)) => SentencePair::new(0, s, ""),
                (None, None) => bail!("give --id or --sentence"),
            };
            let spec = instance_prompt(&res, &query, &cfg, &pcfg)?;
            let text = if trace { spec.text } else { strip_trace(&spec.text) };
            println!("{text}");
            eprintln!("coverage {:.3}, exemplars {:?}", spec.coverage, spec.exemplars.ids());
        }
        Command::Serve {
            config,
            addr,
            data_dir,
            allow_origin,
        } => {
            let cfg = load(&config)?;
            let backend = cfg.build_backend()?;
            let data = data_dir.unwrap_or_else(|| cfg.output_path().join("study"));
            let state = AppState::new(cfg, backend, Arc::new(SystemClock), &data)?;
            let app = router(state, allow_origin.as_deref())?;
            eprintln!("session logs in {}", data.join("sessions").display());
            tokio::runtime::Runtime::new()
                .context("starting the async runtime")?
                .block_on(serve(addr, app))
                .with_context(|| format!("serving on {addr}"))?;
        }
    }
    Ok(())
}
