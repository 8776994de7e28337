//! HTTP API for the assisted-translation workbench: dictionary and corpus search, study
//! sessions with server-side timing, and condition-gated LLM suggestions.
//!
//! Routes live under `/v1/`; payloads are described in `docs/api.md`.

pub mod clock;
pub mod search;
pub mod session;
pub mod summary;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use glossmt_core::llm::Backend;
use glossmt_core::pipeline::{instance_prompt, load_test_set, prepare, RunConfig};
use glossmt_core::prompt::{extract_translation, strip_trace, PromptConfig, PromptTrace, WordGloss};
use glossmt_core::retrieve::Bm25Index;
use glossmt_core::store::{reverse_dictionary, BilingualDictionary, SentencePair, Side};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use clock::Clock;
use search::{search_corpus, search_dictionary, CorpusHit, DictHit, DICT_LIMIT};
use session::{ActionKind, Condition, Session, SessionStore, SharedLog};
use summary::{score, summarize, SessionSummary};

pub const SESSION_HEADER: &str = "x-session-id";
pub const INSTANCE_HEADER: &str = "x-instance-id";
pub const DEFAULT_CORPUS_K: usize = 10;
pub const MAX_CORPUS_K: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Forbidden(String),
    #[error("{0}")]
    Conflict(String),
    #[error(transparent)]
    Internal(#[from] glossmt_core::Error),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Forbidden(_) => StatusCode::FORBIDDEN,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Internal(glossmt_core::Error::Llm(_)) => StatusCode::BAD_GATEWAY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if matches!(self, ApiError::Internal(_)) {
            log::error!("{self}");
        }
        (self.status(), Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<Json<T>, ApiError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Suggestion {
    pub instance_id: u64,
    pub suggestion: String,
    pub raw: String,
    pub backend: String,
    pub latency_ms: u64,
    pub cached: bool,
    pub prompt: String,
    pub trace: PromptTrace,
}

struct Inner {
    cfg: RunConfig,
    pcfg: PromptConfig,
    res: glossmt_core::pipeline::Resources,
    instances: BTreeMap<u64, SentencePair>,
    dictionaries: HashMap<String, BilingualDictionary>,
    corpus: HashMap<String, Bm25Index>,
    backend: Arc<dyn Backend>,
    suggestions: Mutex<HashMap<u64, Suggestion>>,
    sessions: SessionStore,
    clock: Arc<dyn Clock>,
}

/// Shared service state. Stores are built once and only read afterwards; session logs are
/// locked per session.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// Prepares resources for `cfg`, loads its test set as the study instances and opens
    /// the session logs under `data_dir`.
    pub fn new(cfg: RunConfig, backend: Arc<dyn Backend>, clock: Arc<dyn Clock>, data_dir: &Path) -> glossmt_core::Result<Self> {
        cfg.validate()?;
        let pcfg = cfg.prompt_config()?;
        let res = prepare(&cfg)?;
        let instances = load_test_set(&cfg)?.into_iter().map(|p| (p.id, p)).collect();
        let dir = &res.direction;
        let dictionaries = HashMap::from([
            (dir.src.clone(), res.dictionary.clone()),
            (dir.tgt.clone(), reverse_dictionary(&res.dictionary)),
        ]);
        let (k1, b) = (cfg.retrieval.k1, cfg.retrieval.b);
        let corpus = HashMap::from([
            (dir.src.clone(), res.bm25.clone()),
            (dir.tgt.clone(), Bm25Index::build(&res.corpus, Side::Tgt, k1, b, &res.base_dictionary)?),
        ]);
        let sessions = SessionStore::open(&data_dir.join("sessions"))?;
        Ok(Self(Arc::new(Inner {
            cfg,
            pcfg,
            res,
            instances,
            dictionaries,
            corpus,
            backend,
            suggestions: Mutex::new(HashMap::new()),
            sessions,
            clock,
        })))
    }

    pub fn sessions(&self) -> &SessionStore {
        &self.0.sessions
    }

    pub fn instance_ids(&self) -> Vec<u64> {
        self.0.instances.keys().copied().collect()
    }

    fn session(&self, id: &str) -> Result<SharedLog, ApiError> {
        self.0
            .sessions
            .get(id)
            .ok_or_else(|| ApiError::NotFound(format!("unknown session `{id}`")))
    }

    /// Side language for `src`/`tgt` or a language code.
    fn side_lang(&self, side: &str) -> Result<String, ApiError> {
        let d = &self.0.res.direction;
        let lang = match side {
            "src" | "source" => d.src.clone(),
            "tgt" | "target" => d.tgt.clone(),
            other => other.to_string(),
        };
        if self.0.corpus.contains_key(&lang) {
            Ok(lang)
        } else {
            Err(ApiError::BadRequest(format!("unknown side or language `{side}`")))
        }
    }

    /// Logs a search when the request names a session.
    fn log_search(&self, headers: &HeaderMap, kind: ActionKind, lang: &str, query: &str) -> Result<(), ApiError> {
        let Some(sid) = header_str(headers, SESSION_HEADER)? else {
            return Ok(());
        };
        let instance = header_str(headers, INSTANCE_HEADER)?
            .map(|v| v.parse::<u64>().map_err(|_| ApiError::BadRequest(format!("bad {INSTANCE_HEADER} `{v}`"))))
            .transpose()?;
        let log = self.session(sid)?;
        let mut log = log.lock().expect("session log");
        let instance = match instance {
            Some(id) if log.condition_of(id).is_none() => {
                return Err(ApiError::BadRequest(format!("instance {id} is not in session {sid}")))
            }
            Some(id) => Some(id),
            None => log.current_instance(),
        };
        log.append(self.0.clock.as_ref(), kind, instance, Some(lang.to_string()), query.to_string())?;
        Ok(())
    }

    fn suggestion(&self, instance_id: u64) -> glossmt_core::Result<Suggestion> {
        let inner = &self.0;
        let mut cache = inner.suggestions.lock().expect("suggestion cache");
        if let Some(s) = cache.get(&instance_id) {
            return Ok(Suggestion { cached: true, ..s.clone() });
        }
        let query = &inner.instances[&instance_id];
        let spec = instance_prompt(&inner.res, query, &inner.cfg, &inner.pcfg)?;
        let resp = inner.backend.complete(&inner.cfg.backend.request(spec.text.clone()))?;
        let s = Suggestion {
            instance_id,
            suggestion: extract_translation(&resp.text, &inner.pcfg),
            raw: resp.text,
            backend: resp.backend,
            latency_ms: resp.latency_ms,
            cached: resp.cached,
            prompt: strip_trace(&spec.text),
            trace: spec.trace(),
        };
        cache.insert(instance_id, s.clone());
        Ok(s)
    }
}

fn header_str<'a>(headers: &'a HeaderMap, name: &str) -> Result<Option<&'a str>, ApiError> {
    headers
        .get(name)
        .map(|v| v.to_str().map_err(|_| ApiError::BadRequest(format!("bad {name} header"))))
        .transpose()
}

#[derive(Debug, Deserialize)]
pub struct DictQuery {
    #[serde(default)]
    pub q: String,
    pub lang: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DictResponse {
    pub lang: String,
    pub query: String,
    pub hits: Vec<DictHit>,
}

async fn dict(State(st): State<AppState>, headers: HeaderMap, Query(q): Query<DictQuery>) -> ApiResult<DictResponse> {
    let lang = q.lang.unwrap_or_else(|| st.0.res.direction.src.clone());
    let d = st
        .0
        .dictionaries
        .get(&lang)
        .ok_or_else(|| ApiError::BadRequest(format!("no dictionary for language `{lang}`")))?;
    let hits = search_dictionary(d, &q.q, DICT_LIMIT);
    if !q.q.trim().is_empty() {
        st.log_search(&headers, ActionKind::WordSearch, &lang, q.q.trim())?;
    }
    Ok(Json(DictResponse { lang, query: q.q, hits }))
}

#[derive(Debug, Deserialize)]
pub struct CorpusQuery {
    #[serde(default)]
    pub q: String,
    pub side: Option<String>,
    pub k: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CorpusResponse {
    pub lang: String,
    pub query: String,
    pub hits: Vec<CorpusHit>,
}

async fn corpus(State(st): State<AppState>, headers: HeaderMap, Query(q): Query<CorpusQuery>) -> ApiResult<CorpusResponse> {
    let lang = st.side_lang(q.side.as_deref().unwrap_or("src"))?;
    let k = q.k.unwrap_or(DEFAULT_CORPUS_K).min(MAX_CORPUS_K);
    let index = &st.0.corpus[&lang];
    // hits are indexed on one side; report them in corpus orientation either way
    let hits = search_corpus(index, &q.q, k);
    if !q.q.trim().is_empty() {
        st.log_search(&headers, ActionKind::CorpusSearch, &lang, q.q.trim())?;
    }
    Ok(Json(CorpusResponse { lang, query: q.q, hits }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub participant: String,
    pub seed: Option<u64>,
    /// Subset of the study instances; all of them when absent.
    pub instances: Option<Vec<u64>>,
}

async fn create_session(State(st): State<AppState>, Json(body): Json<CreateSession>) -> Result<(StatusCode, Json<Session>), ApiError> {
    let participant = body.participant.trim();
    if participant.is_empty() {
        return Err(ApiError::BadRequest("participant must not be empty".into()));
    }
    let ids = match body.instances {
        Some(ids) => {
            if let Some(bad) = ids.iter().find(|id| !st.0.instances.contains_key(id)) {
                return Err(ApiError::BadRequest(format!("unknown instance {bad}")));
            }
            let mut seen = std::collections::HashSet::new();
            if !ids.iter().all(|id| seen.insert(*id)) {
                return Err(ApiError::BadRequest("instances must be distinct".into()));
            }
            ids
        }
        None => st.instance_ids(),
    };
    let seed = body.seed.unwrap_or_else(|| st.0.clock.now_ms());
    let session = st
        .0
        .sessions
        .create(st.0.clock.as_ref(), participant, seed, &ids)
        .map_err(|e| match e {
            glossmt_core::Error::Data(m) => ApiError::BadRequest(m),
            other => ApiError::Internal(other),
        })?;
    Ok((StatusCode::CREATED, Json(session)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlossPanel {
    pub prompt: String,
    pub glosses: Vec<WordGloss>,
    pub coverage: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceView {
    pub instance_id: u64,
    pub position: usize,
    pub total: usize,
    pub condition: Condition,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    pub suggestion_allowed: bool,
    pub gloss_panel: GlossPanel,
    pub opened_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NextResponse {
    pub session_id: String,
    pub done: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<InstanceView>,
}

async fn next(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<NextResponse> {
    let log = st.session(&id)?;
    let (pos, assignment, total, opened_ms) = {
        let mut log = log.lock().expect("session log");
        let total = log.session().assignments.len();
        let Some((pos, a)) = log.next_pending() else {
            return Ok(Json(NextResponse {
                session_id: id,
                done: true,
                instance: None,
            }));
        };
        if !log.is_opened(a.instance_id) {
            log.append(st.0.clock.as_ref(), ActionKind::InstanceOpen, Some(a.instance_id), None, String::new())?;
        }
        let opened = log
            .events()
            .iter()
            .find(|e| e.kind == ActionKind::InstanceOpen && e.instance_id == Some(a.instance_id))
            .map(|e| e.ts_ms)
            .expect("instance just opened");
        (pos, a, total, opened)
    };
    let query = &st.0.instances[&assignment.instance_id];
    let spec = instance_prompt(&st.0.res, query, &st.0.cfg, &st.0.pcfg)?;
    Ok(Json(NextResponse {
        session_id: id,
        done: false,
        instance: Some(InstanceView {
            instance_id: assignment.instance_id,
            position: pos + 1,
            total,
            condition: assignment.condition,
            source: query.src.clone(),
            tag: query.tag.clone(),
            suggestion_allowed: assignment.condition == Condition::HumanLlm,
            gloss_panel: GlossPanel {
                prompt: strip_trace(&spec.text),
                glosses: spec.glosses,
                coverage: spec.coverage,
            },
            opened_ms,
        }),
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventBody {
    pub kind: ActionKind,
    pub instance_id: Option<u64>,
    pub lang: Option<String>,
    #[serde(default)]
    pub payload: String,
}

async fn event(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<EventBody>,
) -> Result<(StatusCode, Json<session::ActionEvent>), ApiError> {
    if !body.kind.client_loggable() {
        return Err(ApiError::BadRequest(format!(
            "event kind {:?} is recorded by the server",
            body.kind
        )));
    }
    let log = st.session(&id)?;
    let mut log = log.lock().expect("session log");
    let instance = match body.instance_id {
        Some(i) if log.condition_of(i).is_none() => {
            return Err(ApiError::BadRequest(format!("instance {i} is not in session {id}")))
        }
        Some(i) => Some(i),
        None => log.current_instance(),
    };
    let e = log.append(st.0.clock.as_ref(), body.kind, instance, body.lang, body.payload)?;
    Ok((StatusCode::CREATED, Json(e)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitBody {
    pub instance_id: u64,
    pub translation: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub instance_id: u64,
    pub elapsed_ms: u64,
    pub remaining: usize,
}

async fn submit(State(st): State<AppState>, UrlPath(id): UrlPath<String>, Json(body): Json<SubmitBody>) -> ApiResult<SubmitResponse> {
    let log = st.session(&id)?;
    let mut log = log.lock().expect("session log");
    let i = body.instance_id;
    if log.condition_of(i).is_none() {
        return Err(ApiError::BadRequest(format!("instance {i} is not in session {id}")));
    }
    if !log.is_opened(i) {
        return Err(ApiError::Conflict(format!("instance {i} has not been opened")));
    }
    if log.is_submitted(i) {
        return Err(ApiError::Conflict(format!("instance {i} was already submitted")));
    }
    let e = log.append(st.0.clock.as_ref(), ActionKind::Submit, Some(i), None, body.translation)?;
    let opened = log
        .events()
        .iter()
        .find(|x| x.kind == ActionKind::InstanceOpen && x.instance_id == Some(i))
        .map_or(e.ts_ms, |x| x.ts_ms);
    let session = log.session();
    let remaining = session
        .assignments
        .iter()
        .filter(|a| !log.is_submitted(a.instance_id))
        .count();
    Ok(Json(SubmitResponse {
        instance_id: i,
        elapsed_ms: e.ts_ms - opened,
        remaining,
    }))
}

async fn summary_handler(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<SessionSummary> {
    let log = st.session(&id)?;
    let events = log.lock().expect("session log").events().to_vec();
    let mut s = summarize(&events).map_err(|e| ApiError::Conflict(e.to_string()))?;
    let refs: HashMap<u64, String> = st
        .0
        .instances
        .values()
        .filter(|p| !p.tgt.trim().is_empty())
        .map(|p| (p.id, p.tgt.clone()))
        .collect();
    s.report = score(&s, &refs, st.0.cfg.tokenization());
    Ok(Json(s))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuggestBody {
    pub session_id: String,
    pub instance_id: u64,
}

async fn suggest(State(st): State<AppState>, Json(body): Json<SuggestBody>) -> ApiResult<Suggestion> {
    let log = st.session(&body.session_id)?;
    let i = body.instance_id;
    match log.lock().expect("session log").condition_of(i) {
        None => {
            return Err(ApiError::BadRequest(format!(
                "instance {i} is not in session {}",
                body.session_id
            )))
        }
        Some(Condition::HumanOnly) => {
            return Err(ApiError::Forbidden(format!("instance {i} is in the human-only condition")))
        }
        Some(Condition::HumanLlm) => {}
    }
    let worker = st.clone();
    let s = tokio::task::spawn_blocking(move || worker.suggestion(i))
        .await
        .map_err(|e| ApiError::Internal(glossmt_core::Error::Data(format!("suggestion task failed: {e}"))))??;
    log.lock()
        .expect("session log")
        .append(st.0.clock.as_ref(), ActionKind::LlmView, Some(i), None, s.suggestion.clone())?;
    Ok(Json(s))
}

async fn health() -> &'static str {
    "ok"
}

/// The `/v1/` routes with CORS for `allow_origin` (any origin when `None`).
pub fn router(state: AppState, allow_origin: Option<&str>) -> glossmt_core::Result<Router> {
    let origin = match allow_origin {
        None | Some("*") => AllowOrigin::from(Any),
        Some(o) => AllowOrigin::exact(
            HeaderValue::from_str(o).map_err(|_| glossmt_core::Error::Config(format!("invalid CORS origin `{o}`")))?,
        ),
    };
    let cors = CorsLayer::new().allow_origin(origin).allow_methods(Any).allow_headers(Any);
    Ok(Router::new()
        .route("/v1/health", get(health))
        .route("/v1/dict", get(dict))
        .route("/v1/corpus", get(corpus))
        .route("/v1/session", post(create_session))
        .route("/v1/session/{id}/next", get(next))
        .route("/v1/session/{id}/event", post(event))
        .route("/v1/session/{id}/submit", post(submit))
        .route("/v1/session/{id}/summary", get(summary_handler))
        .route("/v1/suggest", post(suggest))
        .layer(cors)
        .with_state(state))
}

/// Serves `app` on `addr` until the process is stopped.
pub async fn serve(addr: SocketAddr, app: Router) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app).await
}
